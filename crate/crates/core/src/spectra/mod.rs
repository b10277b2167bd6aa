//! Symmetric eigendecomposition and localization diagnostics.

mod edge;
mod levels;
mod lyapunov;
mod scaling;

pub use edge::{detect_mobility_edge, EdgeThresholds, LocalizedSide, MobilityEdgeReport, StateClass};
pub use levels::{level_statistics, level_statistics_fit, pseudo_bands, LevelStatistics};
pub use lyapunov::{lyapunov_exponent, lyapunov_exponents, Lyapunov};
pub use scaling::{
    beta_exponent, classify_beta, localize_clusters, track_state, BetaFit, Generator, ScalingClass,
    TrackedState,
};

use ndarray::{Array2, ArrayView1};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::SymmetricMatrix;
use crate::linalg;

/// Tolerance on `|M - M^T|` relative to `max |M|`.
const SYMMETRY_TOL: f64 = 1e-12;

/// Ascending eigenvalues with orthonormal eigenvectors stored as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResult {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Array2<f64>,
}

impl SpectralResult {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn vector(&self, l: usize) -> ArrayView1<'_, f64> {
        self.eigenvectors.column(l)
    }

    /// `IPR^(q)` of every eigenvector.
    pub fn iprs(&self, q: f64) -> Vec<f64> {
        self.eigenvectors
            .columns()
            .into_iter()
            .map(|c| ipr_weights(c.iter().map(|x| x * x), q))
            .collect()
    }

    /// Largest `|M v - lambda v|_2` over all pairs.
    pub fn max_residual(&self, m: &Array2<f64>) -> f64 {
        let mv = m.dot(&self.eigenvectors);
        (0..self.len())
            .map(|l| {
                let lam = self.eigenvalues[l];
                mv.column(l)
                    .iter()
                    .zip(self.eigenvectors.column(l))
                    .map(|(a, b)| (a - lam * b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Largest entry of `|V^T V - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let g = self.eigenvectors.t().dot(&self.eigenvectors);
        g.indexed_iter()
            .map(|((i, j), &x)| (x - if i == j { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max)
    }

    /// `V diag(lambda) V^T`.
    pub fn reconstruct(&self) -> Array2<f64> {
        let mut scaled = self.eigenvectors.clone();
        for (mut c, &lam) in scaled.columns_mut().into_iter().zip(&self.eigenvalues) {
            c *= lam;
        }
        scaled.dot(&self.eigenvectors.t())
    }
}

/// Per-state localization diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct StateDiagnostics {
    /// `(q, IPR^(q))` pairs.
    pub ipr_q: Vec<(f64, f64)>,
    /// `(q, beta^(q))` pairs, filled by finite-size scaling.
    pub beta_q: Vec<(f64, f64)>,
    pub lyapunov: Option<f64>,
}

pub(crate) fn max_abs(m: &Array2<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

fn check_symmetric(m: &Array2<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidParameter("matrix is not square".into()));
    }
    let scale = max_abs(m).max(f64::MIN_POSITIVE);
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((m[[i, j]] - m[[j, i]]).abs());
        }
    }
    if worst > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(worst));
    }
    Ok(())
}

/// Flip each column so its largest-magnitude entry (first one on ties) is positive.
pub(crate) fn fix_signs(v: &mut Array2<f64>) {
    for mut c in v.columns_mut() {
        let mut best = 0usize;
        for (i, x) in c.iter().enumerate() {
            if x.abs() > c[best].abs() {
                best = i;
            }
        }
        if c[best] < 0.0 {
            c.mapv_inplace(|x| -x);
        }
    }
}

/// Full eigendecomposition of a real symmetric matrix, ascending eigenvalues.
///
/// Tridiagonal inputs (open chains) take the dedicated tridiagonal solver.
pub fn eigendecompose_symmetric<M: SymmetricMatrix + ?Sized>(m: &M) -> Result<SpectralResult> {
    let dense = m.matrix();
    check_symmetric(dense)?;
    let (eigenvalues, mut eigenvectors) = match m.tridiagonal() {
        Some((d, e)) => linalg::tridiagonal_eigen(&d, &e)?,
        None => linalg::symmetric_eigen(dense)?,
    };
    fix_signs(&mut eigenvectors);
    Ok(SpectralResult { eigenvalues, eigenvectors })
}

/// Eigenvalues only, ascending.
pub fn eigenvalues_symmetric<M: SymmetricMatrix + ?Sized>(m: &M) -> Result<Vec<f64>> {
    let dense = m.matrix();
    check_symmetric(dense)?;
    match m.tridiagonal() {
        Some((d, e)) => linalg::ql_eigenvalues(&d, &e),
        None => linalg::symmetric_eigenvalues(dense),
    }
}

const NORM_TOL: f64 = 1e-10;

pub(crate) fn ipr_weights(weights: impl Iterator<Item = f64>, q: f64) -> f64 {
    if q == 2.0 {
        weights.map(|p| p * p).sum()
    } else if q == 1.0 {
        weights.sum()
    } else {
        weights.map(|p| p.powf(q)).sum()
    }
}

fn check_norm(norm_sq: f64) -> Result<()> {
    if (norm_sq.sqrt() - 1.0).abs() > NORM_TOL {
        return Err(Error::NotNormalized(norm_sq));
    }
    Ok(())
}

/// Generalized inverse participation ratio `sum_n |psi_n|^(2q)` of a normalized real state.
pub fn ipr(psi: &[f64], q: f64) -> Result<f64> {
    if q < 0.0 || !q.is_finite() {
        return Err(Error::InvalidParameter(format!("q must be a finite non-negative number, got {q}")));
    }
    check_norm(psi.iter().map(|x| x * x).sum())?;
    Ok(ipr_weights(psi.iter().map(|x| x * x), q))
}

/// [`ipr`] for complex amplitudes.
pub fn ipr_complex(psi: &[Complex64], q: f64) -> Result<f64> {
    if q < 0.0 || !q.is_finite() {
        return Err(Error::InvalidParameter(format!("q must be a finite non-negative number, got {q}")));
    }
    check_norm(psi.iter().map(|z| z.norm_sqr()).sum())?;
    Ok(ipr_weights(psi.iter().map(|z| z.norm_sqr()), q))
}
