//! Dense eigensolvers and small numerical helpers.
//!
//! Symmetric and general eigenproblems go through LAPACK (`dsyevd`, `dstevd`,
//! `dstevr`, `dgeev`) on column-major buffers. The eigenvalue-only path for
//! open chains uses an implicit-shift QL sweep written here, which is O(L^2)
//! and also serves as an independent cross-check of the LAPACK results.

use std::os::raw::{c_char, c_int};

use ndarray::{Array2, ShapeBuilder};
use num_complex::Complex64;

use crate::error::{Error, Result};

// Link the system OpenBLAS, which also provides the LAPACK symbols.
extern crate openblas_src;

fn lapack_check(routine: &'static str, info: c_int) -> Result<()> {
    if info == 0 {
        Ok(())
    } else {
        Err(Error::Lapack { routine, info })
    }
}

fn to_fortran(m: &Array2<f64>) -> Array2<f64> {
    let mut f = Array2::<f64>::zeros(m.raw_dim().f());
    f.assign(m);
    f
}

fn dim(n: usize) -> Result<c_int> {
    c_int::try_from(n).map_err(|_| Error::InvalidParameter(format!("matrix dimension {n} too large")))
}

/// Eigenvalues (ascending) and eigenvectors (columns) of a real symmetric matrix.
///
/// Only the lower triangle is read.
pub fn symmetric_eigen(m: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = m.nrows();
    let mut a = to_fortran(m);
    let mut w = vec![0.0; n];
    if n == 0 {
        return Ok((w, a));
    }
    let nn = dim(n)?;
    let (jobz, uplo) = (b'V' as c_char, b'L' as c_char);
    let mut info = 0;
    let mut wq = [0.0f64];
    let mut iq = [0 as c_int];
    let query = -1;
    unsafe {
        lapack_sys::dsyevd_(
            &jobz, &uplo, &nn, a.as_mut_ptr(), &nn, w.as_mut_ptr(),
            wq.as_mut_ptr(), &query, iq.as_mut_ptr(), &query, &mut info,
        );
    }
    lapack_check("dsyevd", info)?;
    let (lwork, liwork) = (wq[0] as c_int, iq[0]);
    let mut work = vec![0.0; lwork.max(1) as usize];
    let mut iwork = vec![0 as c_int; liwork.max(1) as usize];
    unsafe {
        lapack_sys::dsyevd_(
            &jobz, &uplo, &nn, a.as_mut_ptr(), &nn, w.as_mut_ptr(),
            work.as_mut_ptr(), &lwork, iwork.as_mut_ptr(), &liwork, &mut info,
        );
    }
    lapack_check("dsyevd", info)?;
    Ok((w, a))
}

/// Eigenvalues only (ascending) of a real symmetric matrix.
pub fn symmetric_eigenvalues(m: &Array2<f64>) -> Result<Vec<f64>> {
    let n = m.nrows();
    let mut a = to_fortran(m);
    let mut w = vec![0.0; n];
    if n == 0 {
        return Ok(w);
    }
    let nn = dim(n)?;
    let (jobz, uplo) = (b'N' as c_char, b'L' as c_char);
    let mut info = 0;
    let lwork = (2 * n + 1) as c_int;
    let liwork = 1 as c_int;
    let mut work = vec![0.0; lwork as usize];
    let mut iwork = [0 as c_int];
    unsafe {
        lapack_sys::dsyevd_(
            &jobz, &uplo, &nn, a.as_mut_ptr(), &nn, w.as_mut_ptr(),
            work.as_mut_ptr(), &lwork, iwork.as_mut_ptr(), &liwork, &mut info,
        );
    }
    lapack_check("dsyevd", info)?;
    Ok(w)
}

/// Full eigendecomposition of a symmetric tridiagonal matrix.
///
/// `off[i]` couples rows `i` and `i + 1`; `off.len() == diag.len() - 1`.
pub fn tridiagonal_eigen(diag: &[f64], off: &[f64]) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = diag.len();
    check_tridiagonal(diag, off)?;
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);
    let mut z = Array2::<f64>::zeros((n, n).f());
    if n == 0 {
        return Ok((d, z));
    }
    let nn = dim(n)?;
    let jobz = b'V' as c_char;
    let mut info = 0;
    let mut wq = [0.0f64];
    let mut iq = [0 as c_int];
    let query = -1;
    unsafe {
        lapack_sys::dstevd_(
            &jobz, &nn, d.as_mut_ptr(), e.as_mut_ptr(), z.as_mut_ptr(), &nn,
            wq.as_mut_ptr(), &query, iq.as_mut_ptr(), &query, &mut info,
        );
    }
    lapack_check("dstevd", info)?;
    let (lwork, liwork) = (wq[0] as c_int, iq[0]);
    let mut work = vec![0.0; lwork.max(1) as usize];
    let mut iwork = vec![0 as c_int; liwork.max(1) as usize];
    unsafe {
        lapack_sys::dstevd_(
            &jobz, &nn, d.as_mut_ptr(), e.as_mut_ptr(), z.as_mut_ptr(), &nn,
            work.as_mut_ptr(), &lwork, iwork.as_mut_ptr(), &liwork, &mut info,
        );
    }
    lapack_check("dstevd", info)?;
    Ok((d, z))
}

/// Eigenpairs with ascending indices `first..=last` (zero based) of a
/// symmetric tridiagonal matrix, via relatively robust representations.
pub fn tridiagonal_eigen_range(
    diag: &[f64],
    off: &[f64],
    first: usize,
    last: usize,
) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = diag.len();
    check_tridiagonal(diag, off)?;
    if first > last || last >= n {
        return Err(Error::InvalidParameter(format!(
            "eigenvalue index range {first}..={last} outside 0..{n}"
        )));
    }
    let count = last - first + 1;
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);
    let nn = dim(n)?;
    let (jobz, range) = (b'V' as c_char, b'I' as c_char);
    let (vl, vu) = (0.0, 0.0);
    let (il, iu) = (dim(first + 1)?, dim(last + 1)?);
    let abstol = 0.0;
    let mut found: c_int = 0;
    let mut w = vec![0.0; n];
    let mut z = Array2::<f64>::zeros((n, count).f());
    let mut isuppz = vec![0 as c_int; 2 * count];
    let mut info = 0;
    let mut wq = [0.0f64];
    let mut iq = [0 as c_int];
    let query = -1;
    unsafe {
        lapack_sys::dstevr_(
            &jobz, &range, &nn, d.as_mut_ptr(), e.as_mut_ptr(), &vl, &vu, &il, &iu, &abstol,
            &mut found, w.as_mut_ptr(), z.as_mut_ptr(), &nn, isuppz.as_mut_ptr(),
            wq.as_mut_ptr(), &query, iq.as_mut_ptr(), &query, &mut info,
        );
    }
    lapack_check("dstevr", info)?;
    let (lwork, liwork) = (wq[0] as c_int, iq[0]);
    let mut work = vec![0.0; lwork.max(1) as usize];
    let mut iwork = vec![0 as c_int; liwork.max(1) as usize];
    unsafe {
        lapack_sys::dstevr_(
            &jobz, &range, &nn, d.as_mut_ptr(), e.as_mut_ptr(), &vl, &vu, &il, &iu, &abstol,
            &mut found, w.as_mut_ptr(), z.as_mut_ptr(), &nn, isuppz.as_mut_ptr(),
            work.as_mut_ptr(), &lwork, iwork.as_mut_ptr(), &liwork, &mut info,
        );
    }
    lapack_check("dstevr", info)?;
    if found as usize != count {
        return Err(Error::Lapack { routine: "dstevr", info: -1000 - found });
    }
    w.truncate(count);
    Ok((w, z))
}

fn check_tridiagonal(diag: &[f64], off: &[f64]) -> Result<()> {
    if !diag.is_empty() && off.len() + 1 != diag.len() {
        return Err(Error::InvalidParameter(format!(
            "tridiagonal matrix needs {} off-diagonal entries, got {}",
            diag.len() - 1,
            off.len()
        )));
    }
    Ok(())
}

/// Eigenvalues (ascending) of a symmetric tridiagonal matrix by implicit-shift
/// QL iteration with Wilkinson-type shifts.
pub fn ql_eigenvalues(diag: &[f64], off: &[f64]) -> Result<Vec<f64>> {
    check_tridiagonal(diag, off)?;
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);
    for l in 0..n {
        let mut iterations = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iterations += 1;
            if iterations > 60 {
                return Err(Error::Lapack { routine: "ql_eigenvalues", info: l as i32 + 1 });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0f64, 1.0f64, 0.0f64);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// Eigendecomposition of a general real matrix as returned by `dgeev`.
///
/// Complex-conjugate pairs are packed LAPACK style: for a pair at `(j, j+1)`
/// columns `j` and `j+1` of `vectors` hold the real and imaginary parts of the
/// eigenvector belonging to `wr[j] + i wi[j]` (with `wi[j] > 0`).
#[derive(Debug, Clone)]
pub struct RealEigen {
    pub wr: Vec<f64>,
    pub wi: Vec<f64>,
    pub vectors: Array2<f64>,
}

impl RealEigen {
    pub fn len(&self) -> usize {
        self.wr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wr.is_empty()
    }

    pub fn eigenvalue(&self, j: usize) -> Complex64 {
        Complex64::new(self.wr[j], self.wi[j])
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        (0..self.len()).map(|j| self.eigenvalue(j)).collect()
    }

    /// Column-index pair `(re, im)` holding eigenvector `j`, and whether the
    /// imaginary part enters with a minus sign.
    fn packed_columns(&self, j: usize) -> (usize, Option<(usize, f64)>) {
        if self.wi[j] == 0.0 {
            (j, None)
        } else if self.wi[j] > 0.0 {
            (j, Some((j + 1, 1.0)))
        } else {
            (j - 1, Some((j, -1.0)))
        }
    }

    /// Complex eigenvector `j` (unnormalized, as returned by LAPACK: unit
    /// Euclidean norm with largest component real).
    pub fn eigenvector(&self, j: usize) -> Vec<Complex64> {
        let (re, im) = self.packed_columns(j);
        let n = self.vectors.nrows();
        (0..n)
            .map(|i| {
                let x = self.vectors[[i, re]];
                match im {
                    None => Complex64::new(x, 0.0),
                    Some((c, sign)) => Complex64::new(x, sign * self.vectors[[i, c]]),
                }
            })
            .collect()
    }

    /// Components `rows` of eigenvector `j`, without materializing the rest.
    pub fn eigenvector_rows(&self, j: usize, rows: std::ops::Range<usize>) -> Vec<Complex64> {
        let (re, im) = self.packed_columns(j);
        rows.map(|i| {
            let x = self.vectors[[i, re]];
            match im {
                None => Complex64::new(x, 0.0),
                Some((c, sign)) => Complex64::new(x, sign * self.vectors[[i, c]]),
            }
        })
        .collect()
    }
}

/// All eigenvalues and right eigenvectors of a general real matrix.
pub fn general_eigen(m: &Array2<f64>) -> Result<RealEigen> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::InvalidParameter("general_eigen needs a square matrix".into()));
    }
    let mut a = to_fortran(m);
    let mut wr = vec![0.0; n];
    let mut wi = vec![0.0; n];
    let mut vr = Array2::<f64>::zeros((n, n).f());
    if n == 0 {
        return Ok(RealEigen { wr, wi, vectors: vr });
    }
    let nn = dim(n)?;
    let (jobvl, jobvr) = (b'N' as c_char, b'V' as c_char);
    let mut vl = [0.0f64];
    let one: c_int = 1;
    let mut info = 0;
    let mut wq = [0.0f64];
    let query = -1;
    unsafe {
        lapack_sys::dgeev_(
            &jobvl, &jobvr, &nn, a.as_mut_ptr(), &nn, wr.as_mut_ptr(), wi.as_mut_ptr(),
            vl.as_mut_ptr(), &one, vr.as_mut_ptr(), &nn, wq.as_mut_ptr(), &query, &mut info,
        );
    }
    lapack_check("dgeev", info)?;
    let lwork = wq[0] as c_int;
    let mut work = vec![0.0; lwork.max(1) as usize];
    unsafe {
        lapack_sys::dgeev_(
            &jobvl, &jobvr, &nn, a.as_mut_ptr(), &nn, wr.as_mut_ptr(), wi.as_mut_ptr(),
            vl.as_mut_ptr(), &one, vr.as_mut_ptr(), &nn, work.as_mut_ptr(), &lwork, &mut info,
        );
    }
    lapack_check("dgeev", info)?;
    Ok(RealEigen { wr, wi, vectors: vr })
}

/// Solve `A x = b` for a square real matrix by LU with partial pivoting.
pub fn solve(a: &Array2<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::InvalidParameter("solve: dimension mismatch".into()));
    }
    let mut lu = to_fortran(a);
    let mut x = b.to_vec();
    if n == 0 {
        return Ok(x);
    }
    let nn = dim(n)?;
    let one: c_int = 1;
    let mut ipiv = vec![0 as c_int; n];
    let mut info = 0;
    unsafe {
        lapack_sys::dgesv_(&nn, &one, lu.as_mut_ptr(), &nn, ipiv.as_mut_ptr(), x.as_mut_ptr(), &nn, &mut info);
    }
    lapack_check("dgesv", info)?;
    Ok(x)
}

/// Ordinary least-squares line fit `y = slope * x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope (zero for an exact two-point fit).
    pub slope_stderr: f64,
    pub samples: usize,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::InvalidParameter("fit_line: length mismatch".into()));
    }
    if n < 2 {
        return Err(Error::Empty("line fit needs at least two samples"));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|&a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("fit_line: abscissae are all equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(&a, &b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_stderr = if n > 2 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(&a, &b)| (b - slope * a - intercept).powi(2))
            .sum();
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LineFit { slope, intercept, slope_stderr, samples: n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn dimer_eigenpairs() {
        let m = array![[0.0, -1.0], [-1.0, 0.0]];
        let (w, v) = symmetric_eigen(&m).unwrap();
        assert!((w[0] + 1.0).abs() < 1e-14 && (w[1] - 1.0).abs() < 1e-14);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((v[[0, 0]].abs() - s).abs() < 1e-14);
        assert!((v[[0, 0]] - v[[1, 0]]).abs() < 1e-14);
        assert!((v[[0, 1]] + v[[1, 1]]).abs() < 1e-14);
    }

    #[test]
    fn ql_matches_lapack_on_random_tridiagonal() {
        let n = 40;
        let diag: Vec<f64> = (0..n).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.3).collect();
        let off: Vec<f64> = (0..n - 1).map(|i| 0.5 + ((i * 13 % 7) as f64) * 0.1).collect();
        let ql = ql_eigenvalues(&diag, &off).unwrap();
        let (lap, _) = tridiagonal_eigen(&diag, &off).unwrap();
        for (a, b) in ql.iter().zip(&lap) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn ql_handles_zero_diagonal_and_split_blocks() {
        let diag = vec![0.0; 6];
        let off = vec![1.0, 1.0, 0.0, 1.0, 1.0];
        let w = ql_eigenvalues(&diag, &off).unwrap();
        let s = std::f64::consts::SQRT_2;
        let expected = [-s, -s, 0.0, 0.0, s, s];
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn range_solver_returns_requested_pairs() {
        let n = 30;
        let diag: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).cos()).collect();
        let off = vec![-1.0; n - 1];
        let (all, _) = tridiagonal_eigen(&diag, &off).unwrap();
        let (w, z) = tridiagonal_eigen_range(&diag, &off, 10, 12).unwrap();
        assert_eq!(w.len(), 3);
        assert_eq!(z.ncols(), 3);
        for k in 0..3 {
            assert!((w[k] - all[10 + k]).abs() < 1e-13);
        }
    }

    #[test]
    fn general_eigen_rotation_block() {
        // [[0, -1], [1, 0]] has eigenvalues +-i.
        let m = array![[0.0, -1.0], [1.0, 0.0]];
        let eig = general_eigen(&m).unwrap();
        let mut ims: Vec<f64> = eig.eigenvalues().iter().map(|z| z.im).collect();
        ims.sort_by(f64::total_cmp);
        assert!((ims[0] + 1.0).abs() < 1e-14 && (ims[1] - 1.0).abs() < 1e-14);
        for j in 0..2 {
            let v = eig.eigenvector(j);
            let lam = eig.eigenvalue(j);
            let r0 = -v[1] - lam * v[0];
            let r1 = v[0] - lam * v[1];
            assert!(r0.norm() < 1e-14 && r1.norm() < 1e-14);
        }
    }

    #[test]
    fn line_fit_exact_and_stderr() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let f = fit_line(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14 && (f.intercept - 1.0).abs() < 1e-14);
        assert!(f.slope_stderr < 1e-14);
        assert!(fit_line(&[1.0], &[1.0]).is_err());
    }
}
