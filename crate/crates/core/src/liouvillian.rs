//! Single-particle Lindblad generator with on-site dephasing.
//!
//! `L rho = -i [H, rho] + gamma (diag(rho) - rho)`, i.e. coherences decay at
//! rate `gamma` and populations are untouched by the dissipator.
//!
//! Two vectorizations are used. The complex one stacks columns,
//! `k = n + m L` for `rho[n][m]`. The real one holds the `L^2` real
//! coordinates of a Hermitian matrix: first the populations `rho[n][n]`, then
//! `Re rho[n][m]`, `Im rho[n][m]` for each pair `n < m` in row-major order.
//! The generator maps Hermitian matrices to Hermitian matrices, so it is a real
//! matrix in the second basis; complex eigenvectors there extend
//! complex-linearly to arbitrary `rho`.

use std::ops::Range;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{invalid, Error, Result};
use crate::lattice::{build_hamiltonian, Boundary, HoppingProfile};
use crate::linalg::{self, RealEigen};

pub const DEFAULT_SIZE_CAP: usize = 89;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Complex `L x L` density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(pub Array2<Complex64>);

impl DensityMatrix {
    pub fn pure(psi: &[Complex64]) -> Self {
        let l = psi.len();
        Self(Array2::from_shape_fn((l, l), |(n, m)| psi[n] * psi[m].conj()))
    }

    pub fn site(size: usize, n: usize) -> Self {
        let mut r = Array2::from_elem((size, size), ZERO);
        r[[n, n]] = Complex64::new(1.0, 0.0);
        Self(r)
    }

    pub fn maximally_mixed(size: usize) -> Self {
        Self(Array2::from_shape_fn((size, size), |(n, m)| {
            if n == m {
                Complex64::new(1.0 / size as f64, 0.0)
            } else {
                ZERO
            }
        }))
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.size()).map(|n| self.0[[n, n]]).sum()
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.size()).map(|n| self.0[[n, n]].re).collect()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let l = self.size();
        let mut worst = 0.0f64;
        for n in 0..l {
            for m in 0..=n {
                worst = worst.max((self.0[[n, m]] - self.0[[m, n]].conj()).norm());
            }
        }
        worst
    }

    /// Eigenvalues of the Hermitian part, via the real embedding `[[Re, -Im], [Im, Re]]`.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let l = self.size();
        let big = Array2::from_shape_fn((2 * l, 2 * l), |(i, j)| {
            let z = 0.5 * (self.0[[i % l, j % l]] + self.0[[j % l, i % l]].conj());
            match (i < l, j < l) {
                (true, true) | (false, false) => z.re,
                (true, false) => -z.im,
                (false, true) => z.im,
            }
        });
        let w = linalg::symmetric_eigenvalues(&big)?;
        // Every eigenvalue appears twice in the embedding.
        Ok(w.chunks(2).map(|c| c[0]).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let tr = self.trace();
        if (tr - 1.0).norm() > 1e-8 {
            return Err(Error::NotNormalized(tr.re));
        }
        if self.hermiticity_error() > 1e-10 {
            return Err(invalid("density matrix is not Hermitian"));
        }
        let min = self.eigenvalues()?.into_iter().fold(f64::INFINITY, f64::min);
        if min < -1e-8 {
            return Err(invalid(format!("density matrix has negative eigenvalue {min:e}")));
        }
        Ok(())
    }
}

/// Position of `(n, m)`, `n < m`, among the pairs.
fn pair_index(l: usize, n: usize, m: usize) -> usize {
    n * l - n * (n + 1) / 2 + (m - n - 1)
}

/// Real coordinates of a Hermitian `rho`.
pub fn to_coordinates(rho: &Array2<Complex64>) -> Vec<f64> {
    let l = rho.nrows();
    let mut x = vec![0.0; l * l];
    for n in 0..l {
        x[n] = rho[[n, n]].re;
        for m in n + 1..l {
            let p = l + 2 * pair_index(l, n, m);
            x[p] = rho[[n, m]].re;
            x[p + 1] = rho[[n, m]].im;
        }
    }
    x
}

/// Matrix with real or complex coordinates `x`, extended complex-linearly.
pub fn from_coordinates(x: &[Complex64], l: usize) -> Array2<Complex64> {
    let mut rho = Array2::from_elem((l, l), ZERO);
    for n in 0..l {
        rho[[n, n]] = x[n];
        for m in n + 1..l {
            let p = l + 2 * pair_index(l, n, m);
            let (a, b) = (x[p], x[p + 1]);
            rho[[n, m]] = a + I * b;
            rho[[m, n]] = a - I * b;
        }
    }
    rho
}

/// The generator, stored through `H` and `gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiouvillianMatrix {
    pub hamiltonian: Array2<f64>,
    pub gamma: f64,
    pub boundary: Boundary,
}

pub fn build_liouvillian(profile: &HoppingProfile, gamma: f64, boundary: Boundary) -> Result<LiouvillianMatrix> {
    build_liouvillian_capped(profile, gamma, boundary, DEFAULT_SIZE_CAP)
}

pub fn build_liouvillian_capped(
    profile: &HoppingProfile,
    gamma: f64,
    boundary: Boundary,
    cap: usize,
) -> Result<LiouvillianMatrix> {
    if profile.len() > cap {
        return Err(Error::SizeCap { size: profile.len(), cap });
    }
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(invalid(format!("dephasing rate must be non-negative, got {gamma}")));
    }
    Ok(LiouvillianMatrix { hamiltonian: build_hamiltonian(profile, boundary).matrix, gamma, boundary })
}

impl LiouvillianMatrix {
    pub fn size(&self) -> usize {
        self.hamiltonian.nrows()
    }

    /// Upper bound `2 max_n sum_m |H_nm| + gamma` on the operator norm.
    pub fn norm(&self) -> f64 {
        let h = self
            .hamiltonian
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        2.0 * h + self.gamma
    }

    /// `L rho` for any complex `rho`.
    pub fn apply(&self, rho: &Array2<Complex64>) -> Array2<Complex64> {
        let l = self.size();
        let h = &self.hamiltonian;
        let mut out = Array2::from_elem((l, l), ZERO);
        for n in 0..l {
            for m in 0..l {
                let mut acc = ZERO;
                for k in 0..l {
                    let a = h[[n, k]];
                    if a != 0.0 {
                        acc += rho[[k, m]] * a;
                    }
                    let b = h[[k, m]];
                    if b != 0.0 {
                        acc -= rho[[n, k]] * b;
                    }
                }
                out[[n, m]] = -I * acc;
                if n != m {
                    out[[n, m]] -= rho[[n, m]] * self.gamma;
                }
            }
        }
        out
    }

    /// Dense complex matrix on column-stacked `rho` (`k = n + m L`).
    pub fn to_dense(&self) -> Array2<Complex64> {
        let l = self.size();
        let h = &self.hamiltonian;
        let mut big = Array2::from_elem((l * l, l * l), ZERO);
        for a in 0..l {
            for b in 0..l {
                let col = a + b * l;
                for n in 0..l {
                    if h[[n, a]] != 0.0 {
                        big[[n + b * l, col]] -= I * h[[n, a]];
                    }
                }
                for m in 0..l {
                    if h[[b, m]] != 0.0 {
                        big[[a + m * l, col]] += I * h[[b, m]];
                    }
                }
                if a != b {
                    big[[col, col]] -= Complex64::new(self.gamma, 0.0);
                }
            }
        }
        big
    }

    /// Real `L^2 x L^2` matrix in Hermitian coordinates.
    pub fn to_real(&self) -> Array2<f64> {
        let l = self.size();
        let h = &self.hamiltonian;
        let dim = l * l;
        let mut big = Array2::<f64>::zeros((dim, dim));
        // Column j holds the image of the j-th basis matrix.
        let mut emit = |col: usize, n: usize, m: usize, c: Complex64| {
            if n == m {
                big[[n, col]] += c.re;
            } else if n < m {
                let p = l + 2 * pair_index(l, n, m);
                big[[p, col]] += c.re;
                big[[p + 1, col]] += c.im;
            }
        };
        for col in 0..dim {
            let entries: Vec<(usize, usize, Complex64)> = if col < l {
                vec![(col, col, Complex64::new(1.0, 0.0))]
            } else {
                let q = (col - l) / 2;
                let (n, m) = pair_from_index(l, q);
                if (col - l) % 2 == 0 {
                    vec![(n, m, Complex64::new(1.0, 0.0)), (m, n, Complex64::new(1.0, 0.0))]
                } else {
                    vec![(n, m, I), (m, n, -I)]
                }
            };
            for &(a, b, z) in &entries {
                for n in 0..l {
                    let x = h[[n, a]];
                    if x != 0.0 {
                        emit(col, n, b, -I * z * x);
                    }
                }
                for m in 0..l {
                    let x = h[[b, m]];
                    if x != 0.0 {
                        emit(col, a, m, I * z * x);
                    }
                }
                if a != b {
                    emit(col, a, b, -z * self.gamma);
                }
            }
        }
        big
    }
}

fn pair_from_index(l: usize, mut q: usize) -> (usize, usize) {
    let mut n = 0;
    while q >= l - 1 - n {
        q -= l - 1 - n;
        n += 1;
    }
    (n, n + 1 + q)
}

/// Eigenvalues and population profiles of the generator.
#[derive(Debug, Clone)]
pub struct LiouvillianSpectrum {
    pub size: usize,
    pub gamma: f64,
    pub eigenvalues: Vec<Complex64>,
    /// Diagonal `rho_nn` of each eigenvector.
    pub populations: Vec<Vec<Complex64>>,
    /// `sum |p|^4 / (sum |p|^2)^2`; `None` when the eigenvector has no population weight.
    pub ipr: Vec<Option<f64>>,
    pub stationary: usize,
    /// Stationary state normalized to unit trace.
    pub stationary_state: Vec<f64>,
    /// Largest `|L rho - lambda rho|_F / |rho|_F`, when computed.
    pub max_residual: Option<f64>,
    pub norm: f64,
    eigen: RealEigen,
}

/// Relative population weight below which the population IPR is undefined.
const POPULATION_FLOOR: f64 = 1e-12;

fn population_ipr(p: &[Complex64]) -> Option<f64> {
    let w: Vec<f64> = p.iter().map(|z| z.norm_sqr()).collect();
    let s: f64 = w.iter().sum();
    (s > POPULATION_FLOOR).then(|| w.iter().map(|x| x * x).sum::<f64>() / (s * s))
}

impl LiouvillianSpectrum {
    /// Indices with `|Re lambda| < gamma / 2`.
    pub fn slow_branch(&self) -> Vec<usize> {
        (0..self.eigenvalues.len())
            .filter(|&j| self.eigenvalues[j].re.abs() < 0.5 * self.gamma)
            .collect()
    }

    /// Extremal population IPRs over the slow branch.
    pub fn slow_ipr_range(&self) -> Option<(f64, f64)> {
        let vals: Vec<f64> = self.slow_branch().into_iter().filter_map(|j| self.ipr[j]).collect();
        if vals.is_empty() {
            return None;
        }
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some((lo, hi))
    }

    /// Full eigenvector `j` as a matrix.
    pub fn eigenmatrix(&self, j: usize) -> Array2<Complex64> {
        from_coordinates(&self.eigen.eigenvector(j), self.size)
    }

    pub fn real_eigen(&self) -> &RealEigen {
        &self.eigen
    }
}

/// Full eigendecomposition with residual check.
pub fn eigendecompose_liouvillian(lv: &LiouvillianMatrix) -> Result<LiouvillianSpectrum> {
    decompose(lv, true)
}

/// Eigendecomposition without the `O(L^5)` residual pass.
pub fn eigendecompose_liouvillian_fast(lv: &LiouvillianMatrix) -> Result<LiouvillianSpectrum> {
    decompose(lv, false)
}

fn decompose(lv: &LiouvillianMatrix, residuals: bool) -> Result<LiouvillianSpectrum> {
    let l = lv.size();
    let eigen = linalg::general_eigen(&lv.to_real())?;
    let eigenvalues = eigen.eigenvalues();
    let populations: Vec<Vec<Complex64>> = (0..eigen.len()).map(|j| eigen.eigenvector_rows(j, 0..l)).collect();
    let ipr = populations.iter().map(|p| population_ipr(p)).collect();
    let stationary = (0..eigenvalues.len())
        .min_by(|&a, &b| eigenvalues[a].norm().total_cmp(&eigenvalues[b].norm()))
        .ok_or(Error::Empty("empty Liouvillian"))?;
    let tr: Complex64 = populations[stationary].iter().sum();
    let stationary_state = populations[stationary].iter().map(|z| (z / tr).re).collect();
    let norm = lv.norm();
    let max_residual = if residuals {
        Some(
            (0..eigen.len())
                .into_par_iter()
                .map(|j| {
                    let rho = from_coordinates(&eigen.eigenvector(j), l);
                    let r = lv.apply(&rho) - rho.mapv(|z| z * eigenvalues[j]);
                    let num = r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                    let den = rho.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                    num / den
                })
                .reduce(|| 0.0, f64::max),
        )
    } else {
        None
    };
    if let Some(r) = max_residual {
        if r > 1e-6 * norm {
            return Err(Error::Lapack { routine: "dgeev residual", info: (r / norm).log10().ceil() as i32 });
        }
    }
    Ok(LiouvillianSpectrum {
        size: l,
        gamma: lv.gamma,
        eigenvalues,
        populations,
        ipr,
        stationary,
        stationary_state,
        max_residual,
        norm,
        eigen,
    })
}

/// Propagation scheme for [`evolve_lindblad_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum LindbladMethod {
    /// Expansion in eigenvectors of the generator.
    Spectral,
    /// Classical fourth-order Runge-Kutta; `step` defaults to `min(0.5/gamma, 0.05/|H|)`.
    Rk4 { step: Option<f64> },
}

const TRACE_TOL: f64 = 1e-6;

/// Populations of `rho(t) = exp(L t) rho0` by eigenvector expansion.
pub fn evolve_lindblad(lv: &LiouvillianMatrix, rho0: &DensityMatrix, times: &[f64]) -> Result<Trajectory> {
    evolve_lindblad_with(lv, rho0, times, LindbladMethod::Spectral)
}

pub fn evolve_lindblad_with(
    lv: &LiouvillianMatrix,
    rho0: &DensityMatrix,
    times: &[f64],
    method: LindbladMethod,
) -> Result<Trajectory> {
    if times.is_empty() {
        return Err(Error::Empty("time grid is empty"));
    }
    if rho0.size() != lv.size() {
        return Err(invalid("density matrix and generator sizes differ"));
    }
    rho0.validate()?;
    let pops = match method {
        LindbladMethod::Spectral => {
            let spec = eigendecompose_liouvillian_fast(lv)?;
            let sol = SpectralSolution::new(&spec, rho0)?;
            times.par_iter().map(|&t| sol.coordinates(t, 0..lv.size())).collect::<Vec<_>>()
        }
        LindbladMethod::Rk4 { step } => rk4_states(lv, rho0, times, step)?
            .into_iter()
            .map(|r| DensityMatrix(r).populations())
            .collect(),
    };
    for (&t, p) in times.iter().zip(&pops) {
        let drift = (p.iter().sum::<f64>() - 1.0).abs();
        if drift > TRACE_TOL {
            return Err(Error::TraceDrift { time: t, drift });
        }
    }
    let p0 = rho0.populations();
    let origin = (0..p0.len()).fold(0, |b, i| if p0[i] > p0[b] { i } else { b });
    Ok(Trajectory::new(times.to_vec(), pops, origin, lv.boundary))
}

/// `rho0` expanded in the eigenvectors of the generator.
pub struct SpectralSolution<'a> {
    eigen: &'a RealEigen,
    coeffs: Vec<f64>,
}

impl<'a> SpectralSolution<'a> {
    pub fn new(spec: &'a LiouvillianSpectrum, rho0: &DensityMatrix) -> Result<Self> {
        let x0 = to_coordinates(&rho0.0);
        let coeffs = linalg::solve(&spec.eigen.vectors, &x0)?;
        let back = spec.eigen.vectors.dot(&ndarray::Array1::from(coeffs.clone()));
        let err = back.iter().zip(&x0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if err > 1e-8 {
            return Err(invalid(format!("eigenvector basis is ill-conditioned (expansion error {err:e})")));
        }
        Ok(Self { eigen: &spec.eigen, coeffs })
    }

    /// Real coordinates `rows` of `rho(t)`.
    pub fn coordinates(&self, t: f64, rows: Range<usize>) -> Vec<f64> {
        let e = self.eigen;
        let v = &e.vectors;
        let mut x = vec![0.0; rows.len()];
        let mut j = 0;
        while j < e.len() {
            if e.wi[j] == 0.0 {
                let a = self.coeffs[j] * (e.wr[j] * t).exp();
                if a != 0.0 {
                    for (o, r) in x.iter_mut().zip(rows.clone()) {
                        *o += a * v[[r, j]];
                    }
                }
                j += 1;
            } else {
                // Pair (j, j+1): c_j vr + c_{j+1} vi at t = 0.
                let alpha = Complex64::new(self.coeffs[j], -self.coeffs[j + 1]) * 0.5;
                let z = alpha * Complex64::new(e.wr[j], e.wi[j]).scale(t).exp() * 2.0;
                for (o, r) in x.iter_mut().zip(rows.clone()) {
                    *o += z.re * v[[r, j]] - z.im * v[[r, j + 1]];
                }
                j += 2;
            }
        }
        x
    }

    pub fn state(&self, t: f64) -> DensityMatrix {
        let n = self.eigen.len();
        let l = (n as f64).sqrt().round() as usize;
        let x: Vec<Complex64> = self.coordinates(t, 0..n).into_iter().map(|a| Complex64::new(a, 0.0)).collect();
        DensityMatrix(from_coordinates(&x, l))
    }
}

/// Full density matrices at `times` by fixed-step RK4.
pub fn rk4_states(
    lv: &LiouvillianMatrix,
    rho0: &DensityMatrix,
    times: &[f64],
    step: Option<f64>,
) -> Result<Vec<Array2<Complex64>>> {
    if times.windows(2).any(|w| w[1] < w[0]) || times[0] < 0.0 {
        return Err(invalid("RK4 propagation needs non-decreasing non-negative times"));
    }
    let hnorm = (lv.norm() - lv.gamma).max(1e-12) / 2.0;
    let mut h_max = (0.05 / hnorm).min(if lv.gamma > 0.0 { 0.5 / lv.gamma } else { f64::INFINITY });
    if let Some(s) = step {
        if !(s > 0.0) {
            return Err(invalid("RK4 step must be positive"));
        }
        h_max = s;
    }
    let mut rho = rho0.0.clone();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        let span = target - t;
        if span > 0.0 {
            let n = (span / h_max).ceil().max(1.0) as usize;
            let h = span / n as f64;
            for _ in 0..n {
                let k1 = lv.apply(&rho);
                let k2 = lv.apply(&(&rho + &k1.mapv(|z| z * (0.5 * h))));
                let k3 = lv.apply(&(&rho + &k2.mapv(|z| z * (0.5 * h))));
                let k4 = lv.apply(&(&rho + &k3.mapv(|z| z * h)));
                rho = &rho + &((k1 + k2.mapv(|z| z * 2.0) + k3.mapv(|z| z * 2.0) + k4).mapv(|z| z * (h / 6.0)));
            }
            t = target;
        }
        out.push(rho.clone());
    }
    Ok(out)
}

/// One row of a Liouvillian kappa sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiouvillianSweepRow {
    pub gamma: f64,
    pub kappa: f64,
    pub ipr_min: Option<f64>,
    pub ipr_max: Option<f64>,
    pub slow_states: usize,
    #[serde(default)]
    pub error: Option<String>,
}

/// Population-IPR extrema over the slow branch for each `(gamma, kappa)`,
/// off-diagonal model with hopping `A + kappa A cos(2 pi alpha n)` on a ring.
pub fn kappa_sweep_liouvillian(a: f64, gammas: &[f64], kappas: &[f64], size: usize) -> Result<Vec<LiouvillianSweepRow>> {
    if gammas.is_empty() || kappas.is_empty() {
        return Err(Error::Empty("sweep grids must be nonempty"));
    }
    let mut rows = Vec::with_capacity(gammas.len() * kappas.len());
    for &gamma in gammas {
        for &kappa in kappas {
            rows.push(liouvillian_point(a, gamma, kappa, size));
        }
    }
    Ok(rows)
}

pub fn liouvillian_point(a: f64, gamma: f64, kappa: f64, size: usize) -> LiouvillianSweepRow {
    let run = || -> Result<(Option<(f64, f64)>, usize)> {
        let spec = crate::lattice::LatticeSpec::off_diagonal_aa(a, kappa * a, size)?;
        let profile = crate::lattice::build_profile(&spec)?;
        let lv = build_liouvillian(&profile, gamma, spec.boundary)?;
        let s = eigendecompose_liouvillian_fast(&lv)?;
        Ok((s.slow_ipr_range(), s.slow_branch().len()))
    };
    match run() {
        Ok((range, slow)) => LiouvillianSweepRow {
            gamma,
            kappa,
            ipr_min: range.map(|r| r.0),
            ipr_max: range.map(|r| r.1),
            slow_states: slow,
            error: None,
        },
        Err(e) => LiouvillianSweepRow { gamma, kappa, ipr_min: None, ipr_max: None, slow_states: 0, error: Some(e.to_string()) },
    }
}

/// First `kappa` (rows in grid order for one `gamma`) whose slow-branch `IPR_max` exceeds `threshold`.
pub fn liouvillian_kappa_c(rows: &[LiouvillianSweepRow], gamma: f64, threshold: f64) -> Option<f64> {
    rows.iter()
        .filter(|r| r.gamma == gamma)
        .find(|r| r.ipr_max.is_some_and(|x| x > threshold))
        .map(|r| r.kappa)
}
