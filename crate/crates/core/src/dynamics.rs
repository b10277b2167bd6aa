//! Coherent, classical (Markov) and phase-randomized time evolution.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{Boundary, HamiltonianMatrix, MarkovMatrix};
use crate::linalg::{fit_line, LineFit};
use crate::spectra::{eigendecompose_symmetric, SpectralResult};

/// Time series of site distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub distributions: Vec<Vec<f64>>,
    pub second_moment: Vec<f64>,
    /// Total probability at each time before any clamping.
    pub norm: Vec<f64>,
    pub origin: usize,
    pub boundary: Boundary,
    /// Per-site standard error of ensemble means, when the trajectory is an average.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standard_error: Option<Vec<Vec<f64>>>,
    /// Negative entries set to zero (classical evolution round-off).
    #[serde(default)]
    pub clamped: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, distributions: Vec<Vec<f64>>, origin: usize, boundary: Boundary) -> Self {
        let second_moment = distributions.iter().map(|p| second_moment(p, origin, boundary)).collect();
        let norm = distributions.iter().map(|p| p.iter().sum()).collect();
        Self {
            times,
            distributions,
            second_moment,
            norm,
            origin,
            boundary,
            standard_error: None,
            clamped: 0,
            warnings: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn sites(&self) -> usize {
        self.distributions.first().map_or(0, Vec::len)
    }

    /// Largest `|sum_n p_n - 1|` over the record.
    pub fn max_norm_drift(&self) -> f64 {
        self.norm.iter().map(|n| (n - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// Signed displacement of `n` from `origin`, minimal image on a ring.
pub fn displacement(n: usize, origin: usize, size: usize, boundary: Boundary) -> f64 {
    let d = n as i64 - origin as i64;
    match boundary {
        Boundary::Open => d as f64,
        Boundary::Periodic => {
            let l = size as i64;
            let mut r = d.rem_euclid(l);
            if r > l / 2 {
                r -= l;
            }
            r as f64
        }
    }
}

/// `sum_n (n - origin)^2 p_n`.
pub fn second_moment(p: &[f64], origin: usize, boundary: Boundary) -> f64 {
    let l = p.len();
    p.iter()
        .enumerate()
        .map(|(n, &x)| displacement(n, origin, l, boundary).powi(2) * x)
        .sum()
}

fn first_argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in p.iter().enumerate() {
        if x > p[best] {
            best = i;
        }
    }
    best
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::Empty("time grid is empty"));
    }
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(invalid("times must be finite and non-negative"));
    }
    Ok(())
}

pub fn delta_state(size: usize, site: usize) -> Vec<Complex64> {
    let mut psi = vec![Complex64::new(0.0, 0.0); size];
    psi[site] = Complex64::new(1.0, 0.0);
    psi
}

pub fn delta_distribution(size: usize, site: usize) -> Vec<f64> {
    let mut p = vec![0.0; size];
    p[site] = 1.0;
    p
}

/// `exp(-iHt)` applied through the eigendecomposition of `H`.
#[derive(Debug, Clone)]
pub struct CoherentPropagator {
    pub spectrum: SpectralResult,
    pub boundary: Boundary,
}

impl CoherentPropagator {
    pub fn new(h: &HamiltonianMatrix) -> Result<Self> {
        Ok(Self { spectrum: eigendecompose_symmetric(h)?, boundary: h.boundary })
    }

    pub fn size(&self) -> usize {
        self.spectrum.len()
    }

    /// Eigenbasis coefficients `V^T psi`.
    fn coefficients(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let v = &self.spectrum.eigenvectors;
        (0..self.size())
            .map(|k| v.column(k).iter().zip(psi).map(|(&a, &z)| z * a).sum())
            .collect()
    }

    fn synthesize(&self, c: &[Complex64]) -> Vec<Complex64> {
        let v = &self.spectrum.eigenvectors;
        (0..self.size())
            .map(|n| v.row(n).iter().zip(c).map(|(&a, &z)| z * a).sum())
            .collect()
    }

    pub fn propagate(&self, psi: &[Complex64], t: f64) -> Vec<Complex64> {
        let c: Vec<Complex64> = self
            .coefficients(psi)
            .into_iter()
            .zip(&self.spectrum.eigenvalues)
            .map(|(z, &e)| z * Complex64::from_polar(1.0, -e * t))
            .collect();
        self.synthesize(&c)
    }

    /// Dense `U = exp(-iH dt)`.
    pub fn unitary(&self, dt: f64) -> Array2<Complex64> {
        let v = &self.spectrum.eigenvectors;
        let mut vc = v.clone();
        let mut vs = v.clone();
        for (k, &e) in self.spectrum.eigenvalues.iter().enumerate() {
            let (s, c) = (-e * dt).sin_cos();
            vc.column_mut(k).mapv_inplace(|x| x * c);
            vs.column_mut(k).mapv_inplace(|x| x * s);
        }
        let re = vc.dot(&v.t());
        let im = vs.dot(&v.t());
        Array2::from_shape_fn(re.raw_dim(), |ix| Complex64::new(re[ix], im[ix]))
    }
}

fn check_state(psi: &[Complex64], size: usize) -> Result<()> {
    if psi.len() != size {
        return Err(invalid(format!("state has {} components, lattice has {size} sites", psi.len())));
    }
    let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::NotNormalized(norm));
    }
    Ok(())
}

/// `|psi(t)|^2` with `psi(t) = exp(-iHt) psi0`.
pub fn evolve_coherent(h: &HamiltonianMatrix, psi0: &[Complex64], times: &[f64]) -> Result<Trajectory> {
    let prop = CoherentPropagator::new(h)?;
    evolve_coherent_with(&prop, psi0, times)
}

/// [`evolve_coherent`] reusing a decomposition.
pub fn evolve_coherent_with(prop: &CoherentPropagator, psi0: &[Complex64], times: &[f64]) -> Result<Trajectory> {
    check_times(times)?;
    check_state(psi0, prop.size())?;
    let origin = first_argmax(&psi0.iter().map(|z| z.norm_sqr()).collect::<Vec<_>>());
    let c0 = prop.coefficients(psi0);
    let dists = times
        .par_iter()
        .map(|&t| {
            let c: Vec<Complex64> = c0
                .iter()
                .zip(&prop.spectrum.eigenvalues)
                .map(|(z, &e)| z * Complex64::from_polar(1.0, -e * t))
                .collect();
            prop.synthesize(&c).iter().map(|z| z.norm_sqr()).collect()
        })
        .collect();
    Ok(Trajectory::new(times.to_vec(), dists, origin, prop.boundary))
}

/// `exp(Wt)` applied through the eigendecomposition of the symmetric `W`.
#[derive(Debug, Clone)]
pub struct MarkovPropagator {
    pub spectrum: SpectralResult,
    pub boundary: Boundary,
}

impl MarkovPropagator {
    pub fn new(w: &MarkovMatrix) -> Result<Self> {
        Ok(Self { spectrum: eigendecompose_symmetric(w)?, boundary: w.boundary })
    }

    pub fn size(&self) -> usize {
        self.spectrum.len()
    }

    /// `exp(Wt) p` without clamping.
    pub fn propagate(&self, p: &[f64], t: f64) -> Vec<f64> {
        let v = &self.spectrum.eigenvectors;
        let c: Vec<f64> = (0..self.size())
            .map(|k| {
                let a: f64 = v.column(k).iter().zip(p).map(|(x, y)| x * y).sum();
                a * (self.spectrum.eigenvalues[k] * t).exp()
            })
            .collect();
        (0..self.size()).map(|n| v.row(n).iter().zip(&c).map(|(x, y)| x * y).sum()).collect()
    }
}

fn check_distribution(p: &[f64], size: usize) -> Result<()> {
    if p.len() != size {
        return Err(invalid(format!("distribution has {} entries, lattice has {size} sites", p.len())));
    }
    if p.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(invalid("initial distribution has negative or non-finite entries"));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::NotNormalized(total));
    }
    Ok(())
}

/// `P(t) = exp(Wt) P0`. Round-off negatives are set to zero and counted.
pub fn evolve_markov(w: &MarkovMatrix, p0: &[f64], times: &[f64]) -> Result<Trajectory> {
    let prop = MarkovPropagator::new(w)?;
    evolve_markov_with(&prop, p0, times)
}

/// [`evolve_markov`] reusing a decomposition.
pub fn evolve_markov_with(prop: &MarkovPropagator, p0: &[f64], times: &[f64]) -> Result<Trajectory> {
    check_times(times)?;
    check_distribution(p0, prop.size())?;
    let raw: Vec<Vec<f64>> = times.par_iter().map(|&t| prop.propagate(p0, t)).collect();
    let norm: Vec<f64> = raw.iter().map(|p| p.iter().sum()).collect();
    let mut clamped = 0;
    let mut worst = 0.0f64;
    let dists: Vec<Vec<f64>> = raw
        .into_iter()
        .map(|p| {
            p.into_iter()
                .map(|x| {
                    if x < 0.0 {
                        clamped += 1;
                        worst = worst.min(x);
                        0.0
                    } else {
                        x
                    }
                })
                .collect()
        })
        .collect();
    let mut traj = Trajectory::new(times.to_vec(), dists, first_argmax(p0), prop.boundary);
    traj.norm = norm;
    traj.clamped = clamped;
    if worst < -1e-10 {
        traj.warnings.push(format!("negative population {worst:e} clamped to zero"));
    }
    Ok(traj)
}

/// Phase randomization every `dt`, averaged over independent realizations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StochasticEvolutionSpec {
    pub dt: f64,
    pub realizations: usize,
    pub seed: u64,
    /// `false` keeps all phases at zero (coherent limit).
    #[serde(default = "default_true")]
    pub randomize: bool,
}

fn default_true() -> bool {
    true
}

impl StochasticEvolutionSpec {
    /// `dt = 2 / gamma`, under which the ensemble reproduces the Markov generator.
    pub fn for_dephasing(gamma: f64, realizations: usize, seed: u64) -> Self {
        Self { dt: 2.0 / gamma, realizations, seed, randomize: true }
    }
}

/// Realization `r` draws from ChaCha8 seeded with `seed` on stream `r`;
/// within a realization phases are drawn site by site, step by step.
pub(crate) fn realization_rng(seed: u64, realization: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(realization as u64);
    rng
}

fn step_counts(times: &[f64], dt: f64) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let m = (t / dt).round();
        if (m * dt - t).abs() > 1e-9 * dt.max(t) {
            return Err(invalid(format!("time {t} is not a multiple of dt = {dt}")));
        }
        out.push(m as usize);
    }
    if out.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("times must be non-decreasing"));
    }
    Ok(out)
}

fn apply(u: &Array2<Complex64>, psi: &[Complex64], out: &mut [Complex64]) {
    for (n, o) in out.iter_mut().enumerate() {
        *o = u.row(n).iter().zip(psi).map(|(a, b)| a * b).sum();
    }
}

/// Ensemble-averaged populations under repeated `exp(-iH dt)` followed by
/// independent uniform phases on every site.
pub fn evolve_phase_randomized(
    h: &HamiltonianMatrix,
    psi0: &[Complex64],
    spec: &StochasticEvolutionSpec,
    times: &[f64],
) -> Result<Trajectory> {
    let prop = CoherentPropagator::new(h)?;
    evolve_phase_randomized_with(&prop, psi0, spec, times)
}

pub fn evolve_phase_randomized_with(
    prop: &CoherentPropagator,
    psi0: &[Complex64],
    spec: &StochasticEvolutionSpec,
    times: &[f64],
) -> Result<Trajectory> {
    check_times(times)?;
    check_state(psi0, prop.size())?;
    if !(spec.dt > 0.0) {
        return Err(invalid(format!("dt must be positive, got {}", spec.dt)));
    }
    if spec.realizations == 0 {
        return Err(invalid("need at least one realization"));
    }
    let steps = step_counts(times, spec.dt)?;
    let u = prop.unitary(spec.dt);
    let l = prop.size();
    let runs: Vec<Vec<Vec<f64>>> = (0..spec.realizations)
        .into_par_iter()
        .map(|r| {
            let mut rng = realization_rng(spec.seed, r);
            let mut psi = psi0.to_vec();
            let mut next = vec![Complex64::new(0.0, 0.0); l];
            let mut done = 0;
            let mut record = Vec::with_capacity(steps.len());
            for &target in &steps {
                while done < target {
                    apply(&u, &psi, &mut next);
                    if spec.randomize {
                        for z in next.iter_mut() {
                            *z *= Complex64::from_polar(1.0, rng.random_range(-PI..PI));
                        }
                    }
                    std::mem::swap(&mut psi, &mut next);
                    done += 1;
                }
                record.push(psi.iter().map(|z| z.norm_sqr()).collect());
            }
            record
        })
        .collect();
    let n = spec.realizations as f64;
    let mut mean = vec![vec![0.0; l]; steps.len()];
    let mut sq = vec![vec![0.0; l]; steps.len()];
    for run in &runs {
        for (k, p) in run.iter().enumerate() {
            for (i, &x) in p.iter().enumerate() {
                mean[k][i] += x;
                sq[k][i] += x * x;
            }
        }
    }
    let mut se = vec![vec![0.0; l]; steps.len()];
    for k in 0..steps.len() {
        for i in 0..l {
            let m = mean[k][i] / n;
            let var = if spec.realizations > 1 { ((sq[k][i] / n - m * m) * n / (n - 1.0)).max(0.0) } else { 0.0 };
            mean[k][i] = m;
            se[k][i] = (var / n).sqrt();
        }
    }
    let origin = first_argmax(&psi0.iter().map(|z| z.norm_sqr()).collect::<Vec<_>>());
    let mut traj = Trajectory::new(times.to_vec(), mean, origin, prop.boundary);
    let noisy = traj.distributions.iter().zip(&se).any(|(p, s)| {
        let signal = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        let err = s.iter().map(|x| x * x).sum::<f64>().sqrt();
        err > 0.1 * signal
    });
    if noisy && spec.randomize {
        traj.warnings.push(format!(
            "standard error exceeds 10% of the signal with {} realizations",
            spec.realizations
        ));
    }
    traj.standard_error = Some(se);
    Ok(traj)
}

/// One-step incoherent map `|U_nm(dt)|^2` reached by the ensemble mean.
pub fn phase_randomization_map(prop: &CoherentPropagator, dt: f64) -> Array2<f64> {
    prop.unitary(dt).mapv(|z| z.norm_sqr())
}

/// Least-squares slope of `ln sigma^2` against `ln t` over `window`.
pub fn fit_spreading_exponent(traj: &Trajectory, window: (f64, f64)) -> Result<LineFit> {
    let (x, y) = window_samples(traj, window)?;
    let lx: Vec<f64> = x.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|s| s.ln()).collect();
    if y.iter().any(|&s| s <= 0.0) || x.iter().any(|&t| t <= 0.0) {
        return Err(invalid("second moment and time must be positive on the fit window"));
    }
    fit_line(&lx, &ly)
}

/// Linear fit of `sigma^2(t)` with `D = slope / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionFit {
    pub diffusion: f64,
    pub fit: LineFit,
}

pub fn fit_diffusion(traj: &Trajectory, window: (f64, f64)) -> Result<DiffusionFit> {
    let (x, y) = window_samples(traj, window)?;
    let fit = fit_line(&x, &y)?;
    Ok(DiffusionFit { diffusion: fit.slope / 2.0, fit })
}

const MIN_FIT_SAMPLES: usize = 10;

fn window_samples(traj: &Trajectory, window: (f64, f64)) -> Result<(Vec<f64>, Vec<f64>)> {
    let limit = (traj.sites() as f64 / 4.0).powi(2);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (&t, &s) in traj.times.iter().zip(&traj.second_moment) {
        if t >= window.0 && t <= window.1 {
            if s >= limit {
                return Err(invalid(format!(
                    "second moment {s} at t = {t} reaches the boundary limit (L/4)^2 = {limit}"
                )));
            }
            x.push(t);
            y.push(s);
        }
    }
    if x.len() < MIN_FIT_SAMPLES {
        return Err(invalid(format!(
            "fit window holds {} samples, need at least {MIN_FIT_SAMPLES}",
            x.len()
        )));
    }
    Ok((x, y))
}

/// `n` points evenly spaced on `[t0, t1]`.
pub fn linear_times(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![t0],
        _ => (0..n).map(|i| t0 + (t1 - t0) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// `n` points log-spaced on `[t0, t1]`, `t0 > 0`.
pub fn log_times(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    linear_times(t0.ln(), t1.ln(), n).into_iter().map(f64::exp).collect()
}
