//! Finite-size scaling of tracked eigenstates.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{fix_signs, ipr_weights};
use crate::error::{Error, Result};
use crate::lattice::{
    build_hamiltonian, build_markov, build_profile, Boundary, LatticeSpec, SymmetricMatrix,
};
use crate::linalg::{self, fit_line};

/// Which symmetric operator of a lattice is being analysed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    Hamiltonian,
    Markov { gamma: f64 },
}

impl Generator {
    /// Dense operator.
    pub fn build(&self, spec: &LatticeSpec) -> Result<Box<dyn SymmetricMatrix + Send + Sync>> {
        let profile = build_profile(spec)?;
        Ok(match *self {
            Generator::Hamiltonian => Box::new(build_hamiltonian(&profile, spec.boundary)),
            Generator::Markov { gamma } => Box::new(build_markov(&profile, gamma, spec.boundary)?),
        })
    }

    /// Diagonal and off-diagonal of the operator on an open chain, without
    /// forming the dense matrix; `None` under periodic boundaries.
    pub fn tridiagonal(&self, spec: &LatticeSpec) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
        if spec.boundary != Boundary::Open {
            return Ok(None);
        }
        let p = build_profile(spec)?;
        let bonds = p.bonds(Boundary::Open);
        Ok(Some(match *self {
            Generator::Hamiltonian => (p.potential.clone(), bonds.iter().map(|j| -j).collect()),
            Generator::Markov { gamma } => {
                if !(gamma > 0.0) {
                    return Err(Error::InvalidParameter(format!("dephasing rate must be positive, got {gamma}")));
                }
                let rates: Vec<f64> = bonds.iter().map(|j| 2.0 * j * j / gamma).collect();
                let l = spec.size;
                let diag = (0..l)
                    .map(|n| {
                        let left = if n > 0 { rates[n - 1] } else { 0.0 };
                        let right = if n + 1 < l { rates[n] } else { 0.0 };
                        -(left + right)
                    })
                    .collect();
                (diag, rates)
            }
        }))
    }

    /// Ascending eigenvalues; open chains use the O(L^2) QL sweep.
    pub fn eigenvalues(&self, spec: &LatticeSpec) -> Result<Vec<f64>> {
        match self.tridiagonal(spec)? {
            Some((d, e)) => linalg::ql_eigenvalues(&d, &e),
            None => super::eigenvalues_symmetric(self.build(spec)?.as_ref()),
        }
    }
}

/// Relative width below which neighbouring levels are treated as one cluster.
const CLUSTER_TOL: f64 = 1e-7;

/// Rotate eigenvectors inside clusters of nearly coincident eigenvalues so
/// that each column maximizes `sum psi^4`.
///
/// Two exponentially localized states far apart split by an amount below
/// round-off; the solver then returns arbitrary mixtures of them. Columns whose
/// eigenvalues differ by less than `tol` (absolute) are rotated pairwise with
/// the closed-form optimal angle until stationary. Returns the number of
/// clusters touched.
pub fn localize_clusters(eigenvalues: &[f64], vectors: &mut Array2<f64>, tol: f64) -> usize {
    let n = eigenvalues.len();
    let mut touched = 0;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && eigenvalues[end] - eigenvalues[end - 1] < tol {
            end += 1;
        }
        if end - start > 1 {
            localize_block(vectors, start, end);
            touched += 1;
        }
        start = end;
    }
    if touched > 0 {
        fix_signs(vectors);
    }
    touched
}

fn localize_block(v: &mut Array2<f64>, start: usize, end: usize) {
    for _ in 0..100 {
        let mut largest = 0.0f64;
        for i in start..end {
            for j in i + 1..end {
                // With z = a + i b, sum psi^4 = (3 sum|z|^4 + Re(e^{-4i phi} sum z^4)) / 4.
                let (mut re, mut im) = (0.0, 0.0);
                for k in 0..v.nrows() {
                    let (a, b) = (v[[k, i]], v[[k, j]]);
                    let (a2, b2, ab) = (a * a, b * b, a * b);
                    let (r2, i2) = (a2 - b2, 2.0 * ab);
                    re += r2 * r2 - i2 * i2;
                    im += 2.0 * r2 * i2;
                }
                if re.hypot(im) == 0.0 {
                    continue;
                }
                let phi = 0.25 * im.atan2(re);
                largest = largest.max(phi.abs());
                if phi.abs() < 1e-14 {
                    continue;
                }
                let (s, c) = phi.sin_cos();
                for k in 0..v.nrows() {
                    let (a, b) = (v[[k, i]], v[[k, j]]);
                    v[[k, i]] = c * a + s * b;
                    v[[k, j]] = c * b - s * a;
                }
            }
        }
        if largest < 1e-12 {
            break;
        }
    }
}

/// One eigenstate picked out at a single lattice size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedState {
    pub size: usize,
    pub index: usize,
    pub eigenvalue: f64,
    /// Width of the degenerate cluster the state was localized in (1 if isolated).
    pub cluster: usize,
    #[serde(skip)]
    pub vector: Vec<f64>,
}

impl TrackedState {
    pub fn ipr(&self, q: f64) -> f64 {
        ipr_weights(self.vector.iter().map(|x| x * x), q)
    }
}

/// Eigenstate of `generator` on `spec` whose eigenvalue is nearest `reference`,
/// accepted only within `window` mean level spacings.
pub fn track_state(spec: &LatticeSpec, generator: Generator, reference: f64, window: f64) -> Result<TrackedState> {
    let size = spec.size;
    let tri = generator.tridiagonal(spec)?;
    let dense = match tri {
        Some(_) => None,
        None => Some(generator.build(spec)?),
    };
    let eigenvalues = match (&tri, &dense) {
        (Some((d, e)), _) => linalg::ql_eigenvalues(d, e)?,
        (None, Some(m)) => super::eigenvalues_symmetric(m.as_ref())?,
        _ => unreachable!(),
    };
    let index = nearest(&eigenvalues, reference);
    let (lo_e, hi_e) = (eigenvalues[0], eigenvalues[size - 1]);
    let spacing = (hi_e - lo_e) / (size - 1) as f64;
    if (eigenvalues[index] - reference).abs() > window * spacing {
        return Err(Error::TrackingFailed(size));
    }
    let norm = lo_e.abs().max(hi_e.abs());
    let tol = CLUSTER_TOL * norm;
    let mut first = index;
    while first > 0 && eigenvalues[first] - eigenvalues[first - 1] < tol {
        first -= 1;
    }
    let mut last = index;
    while last + 1 < size && eigenvalues[last + 1] - eigenvalues[last] < tol {
        last += 1;
    }
    let (values, mut vectors) = match (&tri, &dense) {
        (Some((d, e)), _) => linalg::tridiagonal_eigen_range(d, e, first, last)?,
        (None, Some(m)) => {
            let full = super::eigendecompose_symmetric(m.as_ref())?;
            let v = full.eigenvectors.slice(ndarray::s![.., first..=last]).to_owned();
            (full.eigenvalues[first..=last].to_vec(), v)
        }
        _ => unreachable!(),
    };
    fix_signs(&mut vectors);
    let original = vectors.column(index - first).to_owned();
    let cluster = last - first + 1;
    if cluster > 1 {
        let flat = vec![values[0]; cluster];
        localize_clusters(&flat, &mut vectors, f64::INFINITY);
    }
    let pick = (0..cluster)
        .max_by(|&a, &b| {
            let oa = vectors.column(a).dot(&original).abs();
            let ob = vectors.column(b).dot(&original).abs();
            oa.total_cmp(&ob).then(b.cmp(&a))
        })
        .unwrap_or(0);
    Ok(TrackedState {
        size,
        index,
        eigenvalue: eigenvalues[index],
        cluster,
        vector: vectors.index_axis(Axis(1), pick).to_vec(),
    })
}

fn nearest(values: &[f64], target: f64) -> usize {
    let i = values.partition_point(|&x| x < target);
    match i {
        0 => 0,
        i if i == values.len() => i - 1,
        i => {
            if (values[i] - target).abs() < (target - values[i - 1]).abs() {
                i
            } else {
                i - 1
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaQ {
    pub q: f64,
    /// `max(raw_slope, 0)`.
    pub beta: f64,
    /// Least-squares slope of `ln IPR^(q)` against `ln(1/L)`.
    pub raw_slope: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaFit {
    /// Target eigenvalue as requested.
    pub target: f64,
    /// Eigenvalue of the state picked at the largest size; all sizes track it.
    pub reference: f64,
    pub exponents: Vec<BetaQ>,
    pub states: Vec<TrackedState>,
    /// `(size, q, IPR^(q))` samples behind the fits.
    pub samples: Vec<(usize, f64, f64)>,
}

impl BetaFit {
    pub fn beta(&self, q: f64) -> Option<&BetaQ> {
        self.exponents.iter().find(|b| b.q == q)
    }
}

/// Exponents `beta^(q)` of the state of `template` nearest `target`, scaled over `sizes`.
pub fn beta_exponent(
    template: &LatticeSpec,
    generator: Generator,
    target: f64,
    qs: &[f64],
    sizes: &[usize],
) -> Result<BetaFit> {
    if sizes.len() < 4 {
        return Err(Error::InvalidParameter(format!("need at least 4 sizes, got {}", sizes.len())));
    }
    if qs.is_empty() {
        return Err(Error::Empty("no q values requested"));
    }
    let mut sorted = sizes.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let largest = *sorted.last().unwrap();
    let top = track_state(&template.resized(largest)?, generator, target, f64::INFINITY)?;
    let reference = top.eigenvalue;
    let mut states = Vec::with_capacity(sorted.len());
    for &size in &sorted[..sorted.len() - 1] {
        states.push(track_state(&template.resized(size)?, generator, reference, 3.0)?);
    }
    states.push(top);
    let mut samples = Vec::new();
    let mut exponents = Vec::new();
    for &q in qs {
        let x: Vec<f64> = states.iter().map(|s| -(s.size as f64).ln()).collect();
        let y: Vec<f64> = states.iter().map(|s| s.ipr(q).ln()).collect();
        for s in &states {
            samples.push((s.size, q, s.ipr(q)));
        }
        let fit = fit_line(&x, &y)?;
        exponents.push(BetaQ { q, beta: fit.slope.max(0.0), raw_slope: fit.slope, stderr: fit.slope_stderr });
    }
    Ok(BetaFit { target, reference, exponents, states, samples })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingClass {
    Localized,
    Ergodic,
    Critical,
}

/// Localized for `beta <= 0.15`, ergodic for `beta >= 0.85`, critical in between.
pub fn classify_beta(beta: f64) -> ScalingClass {
    if beta <= 0.15 {
        ScalingClass::Localized
    } else if beta >= 0.85 {
        ScalingClass::Ergodic
    } else {
        ScalingClass::Critical
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn mixed_pair_is_unmixed() {
        let s = 0.5f64.sqrt();
        let mut v = array![[s, s], [0.0, 0.0], [s, -s]];
        localize_clusters(&[1.0, 1.0], &mut v, 1e-9);
        let mut p: Vec<f64> = v.iter().map(|x| x.abs()).collect();
        p.sort_by(f64::total_cmp);
        assert!((p[5] - 1.0).abs() < 1e-12 && (p[4] - 1.0).abs() < 1e-12);
        assert!(p[3].abs() < 1e-12);
    }

    #[test]
    fn tridiagonal_matches_dense() {
        let spec = LatticeSpec::off_diagonal_aa(1.0, 0.5, 55).unwrap().with_boundary(Boundary::Open);
        for g in [Generator::Hamiltonian, Generator::Markov { gamma: 100.0 }] {
            let (d, e) = g.tridiagonal(&spec).unwrap().unwrap();
            let m = g.build(&spec).unwrap();
            let (d2, e2) = m.tridiagonal().unwrap();
            assert_eq!(d, d2);
            assert_eq!(e, e2);
        }
    }

    #[test]
    fn nearest_index() {
        let v = [0.0, 1.0, 2.0];
        assert_eq!(nearest(&v, -5.0), 0);
        assert_eq!(nearest(&v, 1.4), 1);
        assert_eq!(nearest(&v, 1.6), 2);
        assert_eq!(nearest(&v, 9.0), 2);
    }

    #[test]
    fn class_bounds() {
        assert_eq!(classify_beta(0.0), ScalingClass::Localized);
        assert_eq!(classify_beta(0.5), ScalingClass::Critical);
        assert_eq!(classify_beta(1.0), ScalingClass::Ergodic);
    }
}
