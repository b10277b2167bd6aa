//! Discrete-time photonic quantum walk in two coupled fiber loops.
//!
//! Amplitudes `u_n`, `v_n` live on a ring of `L` sites. One step:
//!
//! ```text
//! u'_n = (cos b_{n+1} u_{n+1} + i sin b_{n+1} v_{n+1}) exp(i phi_n)
//! v'_n =  i sin b_{n-1} u_{n-1} + cos b_{n-1} v_{n-1}
//! ```
//!
//! With fresh uniform phases every step the intensities `X_n = |u_n|^2` and
//! `Y_n = |v_{n+1}|^2` follow a column-stochastic linear map on
//! `(X_0..X_{L-1}, Y_0..Y_{L-1})`.

use std::f64::consts::{FRAC_PI_2, PI};

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{realization_rng, Trajectory};
use crate::error::{invalid, Result};
use crate::lattice::{build_markov, Boundary, FibonacciApproximant, HoppingProfile};
use crate::linalg::{self, RealEigen};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Dephasing {
    #[default]
    None,
    EveryStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkSpec {
    /// Coupling angles `beta_n`, one per site.
    pub angles: Vec<f64>,
    pub dephasing: Dephasing,
}

/// `beta_n = pi/2 - 2A - 2B cos(2 pi alpha n + theta)` on a ring of `size` sites.
pub fn coupling_angles(a: f64, b: f64, alpha: &FibonacciApproximant, theta: f64, size: usize) -> Vec<f64> {
    (0..size)
        .map(|n| FRAC_PI_2 - 2.0 * a - 2.0 * b * (alpha.phase(n) + theta).cos())
        .collect()
}

impl WalkSpec {
    pub fn new(angles: Vec<f64>, dephasing: Dephasing) -> Result<Self> {
        if angles.len() < 2 {
            return Err(invalid("walk needs at least 2 sites"));
        }
        let mut angles = angles;
        for b in angles.iter_mut() {
            // Absorb round-off at the perfect-coupler end.
            if *b > FRAC_PI_2 && *b - FRAC_PI_2 < 1e-12 {
                *b = FRAC_PI_2;
            }
            if !(*b > 0.0 && *b <= FRAC_PI_2) {
                return Err(invalid(format!("coupling angle {b} outside (0, pi/2]")));
            }
        }
        Ok(Self { angles, dephasing })
    }

    /// Off-diagonal quasiperiodic angles on a commensurate ring of `size` sites, `theta = 0`.
    pub fn off_diagonal(a: f64, b: f64, size: usize, dephasing: Dephasing) -> Result<Self> {
        let alpha = FibonacciApproximant::for_size(size)?;
        Self::new(coupling_angles(a, b, &alpha, 0.0, size), dephasing)
    }

    pub fn size(&self) -> usize {
        self.angles.len()
    }

    /// Lattice hoppings `J_n = cos(beta_{n+1}) / 2` of the mapped chain.
    pub fn mapped_hoppings(&self) -> Vec<f64> {
        let l = self.size();
        (0..l).map(|n| 0.5 * self.angles[(n + 1) % l].cos()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkState {
    pub u: Vec<Complex64>,
    pub v: Vec<Complex64>,
    pub step: usize,
}

impl WalkState {
    /// All amplitude in `u_site`.
    pub fn injected(size: usize, site: usize) -> Self {
        let mut u = vec![Complex64::new(0.0, 0.0); size];
        u[site] = Complex64::new(1.0, 0.0);
        Self { u, v: vec![Complex64::new(0.0, 0.0); size], step: 0 }
    }

    pub fn norm(&self) -> f64 {
        self.u.iter().chain(&self.v).map(|z| z.norm_sqr()).sum()
    }

    pub fn intensities(&self) -> IntensityState {
        let l = self.u.len();
        IntensityState {
            x: self.u.iter().map(|z| z.norm_sqr()).collect(),
            y: (0..l).map(|n| self.v[(n + 1) % l].norm_sqr()).collect(),
            step: self.step,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntensityState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub step: usize,
}

impl IntensityState {
    pub fn injected(size: usize, site: usize) -> Self {
        let mut x = vec![0.0; size];
        x[site] = 1.0;
        Self { x, y: vec![0.0; size], step: 0 }
    }

    pub fn total(&self) -> f64 {
        self.x.iter().sum::<f64>() + self.y.iter().sum::<f64>()
    }

    /// `P_n = X_n + Y_n`.
    pub fn populations(&self) -> Vec<f64> {
        self.x.iter().zip(&self.y).map(|(a, b)| a + b).collect()
    }

    pub fn as_vector(&self) -> Vec<f64> {
        self.x.iter().chain(&self.y).copied().collect()
    }
}

/// One coherent step with phases `phases[n]` applied to `u_n`.
pub fn step_coherent(state: &WalkState, spec: &WalkSpec, phases: &[f64]) -> WalkState {
    let l = spec.size();
    let b = &spec.angles;
    let i = Complex64::new(0.0, 1.0);
    let mut u = Vec::with_capacity(l);
    let mut v = Vec::with_capacity(l);
    for n in 0..l {
        let p = (n + 1) % l;
        let (s, c) = b[p].sin_cos();
        let mut z = state.u[p] * c + i * state.v[p] * s;
        if phases[n] != 0.0 {
            z *= Complex64::from_polar(1.0, phases[n]);
        }
        u.push(z);
        let q = (n + l - 1) % l;
        let (s, c) = b[q].sin_cos();
        v.push(i * state.u[q] * s + state.v[q] * c);
    }
    WalkState { u, v, step: state.step + 1 }
}

/// One step of the phase-averaged intensity map.
pub fn step_incoherent(state: &IntensityState, spec: &WalkSpec) -> IntensityState {
    let l = spec.size();
    let b = &spec.angles;
    let mut x = Vec::with_capacity(l);
    let mut y = Vec::with_capacity(l);
    for n in 0..l {
        let p = (n + 1) % l;
        let (c2, s2) = (b[p].cos().powi(2), b[p].sin().powi(2));
        x.push(c2 * state.x[p] + s2 * state.y[n]);
        let q = (n + l - 1) % l;
        let (c2, s2) = (b[n].cos().powi(2), b[n].sin().powi(2));
        y.push(s2 * state.x[n] + c2 * state.y[q]);
    }
    IntensityState { x, y, step: state.step + 1 }
}

/// `2L x 2L` matrix of [`step_incoherent`].
pub fn incoherent_matrix(spec: &WalkSpec) -> Array2<f64> {
    let l = spec.size();
    let b = &spec.angles;
    let mut m = Array2::<f64>::zeros((2 * l, 2 * l));
    for n in 0..l {
        let p = (n + 1) % l;
        m[[n, p]] += b[p].cos().powi(2);
        m[[n, l + n]] += b[p].sin().powi(2);
        let q = (n + l - 1) % l;
        m[[l + n, n]] += b[n].sin().powi(2);
        m[[l + n, l + q]] += b[n].cos().powi(2);
    }
    m
}

/// Incoherent propagator with its spectrum, states sorted by `|mu|` descending.
#[derive(Debug, Clone)]
pub struct IncoherentPropagator {
    pub matrix: Array2<f64>,
    pub eigenvalues: Vec<Complex64>,
    /// Site IPR `sum_n w_n^2 / (sum_n w_n)^2` with `w_n = |x_n|^2 + |y_n|^2`,
    /// the weight of site `n` in `P_n = X_n + Y_n`.
    pub ipr: Vec<f64>,
    /// IPR over all `2L` components separately.
    pub component_ipr: Vec<f64>,
    order: Vec<usize>,
    eigen: RealEigen,
}

impl IncoherentPropagator {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Unit-norm eigenvector `k` (in sorted order).
    pub fn eigenvector(&self, k: usize) -> Vec<Complex64> {
        let v = self.eigen.eigenvector(self.order[k]);
        let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        v.into_iter().map(|z| z / n).collect()
    }

    pub fn ipr_range(&self) -> (f64, f64) {
        let lo = self.ipr.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.ipr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

pub fn build_incoherent_propagator(spec: &WalkSpec) -> Result<IncoherentPropagator> {
    let matrix = incoherent_matrix(spec);
    let eigen = linalg::general_eigen(&matrix)?;
    let raw = eigen.eigenvalues();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    // |mu| is compared at 1e-10 resolution so that mu = 1 precedes mu = -1 on even rings.
    let level = |z: Complex64| (z.norm() * 1e10).round() as i64;
    order.sort_by(|&a, &b| {
        level(raw[b])
            .cmp(&level(raw[a]))
            .then(raw[b].re.total_cmp(&raw[a].re))
            .then(raw[b].im.total_cmp(&raw[a].im))
            .then(a.cmp(&b))
    });
    let eigenvalues = order.iter().map(|&j| raw[j]).collect();
    let l = spec.size();
    let (ipr, component_ipr) = order
        .iter()
        .map(|&j| {
            let w: Vec<f64> = eigen.eigenvector(j).iter().map(|z| z.norm_sqr()).collect();
            let site: Vec<f64> = (0..l).map(|n| w[n] + w[l + n]).collect();
            (normalized_ipr(&site), normalized_ipr(&w))
        })
        .unzip();
    Ok(IncoherentPropagator { matrix, eigenvalues, ipr, component_ipr, order, eigen })
}

fn normalized_ipr(w: &[f64]) -> f64 {
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x * x).sum::<f64>() / (s * s)
}

/// Intensities recorded at the requested steps.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkRecord {
    pub steps: Vec<usize>,
    pub states: Vec<IntensityState>,
    /// Per-component standard error of `(X, Y)` for ensemble means.
    pub standard_error: Option<Vec<Vec<f64>>>,
}

impl WalkRecord {
    /// `P_n = X_n + Y_n` trajectory with `sigma^2` about `origin` (ring).
    pub fn trajectory(&self, origin: usize) -> Trajectory {
        Trajectory::new(
            self.steps.iter().map(|&m| m as f64).collect(),
            self.states.iter().map(IntensityState::populations).collect(),
            origin,
            Boundary::Periodic,
        )
    }
}

fn check_steps(steps: &[usize]) -> Result<()> {
    if steps.is_empty() {
        return Err(invalid("no steps requested"));
    }
    if steps.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("steps must be non-decreasing"));
    }
    Ok(())
}

/// Deterministic incoherent evolution.
pub fn evolve_incoherent(spec: &WalkSpec, init: &IntensityState, steps: &[usize]) -> Result<WalkRecord> {
    check_steps(steps)?;
    let mut s = init.clone();
    let mut states = Vec::with_capacity(steps.len());
    for &m in steps {
        while s.step < m {
            s = step_incoherent(&s, spec);
        }
        states.push(s.clone());
    }
    Ok(WalkRecord { steps: steps.to_vec(), states, standard_error: None })
}

/// Phases for site `n` at step `m` of realization `r` come from stream `r`
/// at word offset `4 L m`; each step draws `L` values in site order.
fn step_phases(rng: &mut rand_chacha::ChaCha8Rng, l: usize, m: usize, out: &mut [f64]) {
    rng.set_word_pos(4 * (l as u128) * (m as u128));
    for p in out.iter_mut() {
        *p = rng.random_range(-PI..PI);
    }
}

/// Coherent amplitudes of one realization at the requested steps.
pub fn evolve_coherent_walk(
    spec: &WalkSpec,
    init: &WalkState,
    steps: &[usize],
    seed: u64,
    realization: usize,
) -> Result<Vec<WalkState>> {
    check_steps(steps)?;
    let l = spec.size();
    let mut rng = realization_rng(seed, realization);
    let mut phases = vec![0.0; l];
    let mut s = init.clone();
    let mut out = Vec::with_capacity(steps.len());
    for &m in steps {
        while s.step < m {
            if spec.dephasing == Dephasing::EveryStep {
                step_phases(&mut rng, l, s.step, &mut phases);
            }
            s = step_coherent(&s, spec, &phases);
        }
        out.push(s.clone());
    }
    Ok(out)
}

/// Ensemble mean of coherent-walk intensities over `realizations`.
pub fn evolve_walk_ensemble(
    spec: &WalkSpec,
    init: &WalkState,
    steps: &[usize],
    realizations: usize,
    seed: u64,
) -> Result<WalkRecord> {
    if realizations == 0 {
        return Err(invalid("need at least one realization"));
    }
    check_steps(steps)?;
    let runs: Vec<Vec<Vec<f64>>> = (0..realizations)
        .into_par_iter()
        .map(|r| {
            evolve_coherent_walk(spec, init, steps, seed, r)
                .map(|states| states.iter().map(|s| s.intensities().as_vector()).collect())
        })
        .collect::<Result<_>>()?;
    let l = spec.size();
    let n = realizations as f64;
    let mut states = Vec::with_capacity(steps.len());
    let mut errors = Vec::with_capacity(steps.len());
    for (k, &m) in steps.iter().enumerate() {
        let mut mean = vec![0.0; 2 * l];
        let mut sq = vec![0.0; 2 * l];
        for run in &runs {
            for (i, &x) in run[k].iter().enumerate() {
                mean[i] += x;
                sq[i] += x * x;
            }
        }
        let se: Vec<f64> = (0..2 * l)
            .map(|i| {
                let mu = mean[i] / n;
                if realizations > 1 {
                    (((sq[i] / n - mu * mu) * n / (n - 1.0)).max(0.0) / n).sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        for x in mean.iter_mut() {
            *x /= n;
        }
        states.push(IntensityState { x: mean[..l].to_vec(), y: mean[l..].to_vec(), step: m });
        errors.push(se);
    }
    Ok(WalkRecord { steps: steps.to_vec(), states, standard_error: Some(errors) })
}

/// Incoherent walk versus the mapped master equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    /// `max_n |pi/2 - beta_n|`.
    pub theta_max: f64,
    pub steps: usize,
    /// Largest `|P_n^(m) - P_n(t = m)|` over sites and steps.
    pub max_deviation: f64,
}

/// Largest tolerated `|pi/2 - beta_n|`.
pub const MAPPING_THETA_MAX: f64 = 0.25;

/// Compare `X_n + Y_n` from the incoherent map with the Markov chain of
/// hoppings `cos(beta_{n+1}) / 2` at `gamma = 1`, `t = m`, both from a single
/// injected site, over `round(scaled_horizon / theta_max^2)` steps.
pub fn verify_master_equation_reduction(spec: &WalkSpec, scaled_horizon: f64) -> Result<ReductionReport> {
    let l = spec.size();
    let theta_max = spec.angles.iter().map(|b| (FRAC_PI_2 - b).abs()).fold(0.0, f64::max);
    if theta_max > MAPPING_THETA_MAX {
        return Err(invalid(format!(
            "max |pi/2 - beta_n| = {theta_max} exceeds the mapping regime bound {MAPPING_THETA_MAX}"
        )));
    }
    if !(scaled_horizon > 0.0) {
        return Err(invalid("horizon must be positive"));
    }
    let steps = if theta_max > 0.0 { (scaled_horizon / (theta_max * theta_max)).round().max(1.0) as usize } else { 100 };
    let profile = HoppingProfile::new(spec.mapped_hoppings(), vec![0.0; l])?;
    let w = build_markov(&profile, 1.0, Boundary::Periodic)?;
    let prop = crate::dynamics::MarkovPropagator::new(&w)?;
    let origin = 0;
    let p0 = crate::dynamics::delta_distribution(l, origin);
    let mut s = IntensityState::injected(l, origin);
    let mut worst = 0.0f64;
    for m in 1..=steps {
        s = step_incoherent(&s, spec);
        let markov = prop.propagate(&p0, m as f64);
        for (a, b) in s.populations().iter().zip(&markov) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(ReductionReport { theta_max, steps, max_deviation: worst })
}

/// One row of a walk kappa sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkSweepRow {
    pub kappa: f64,
    pub ipr_min: Option<f64>,
    pub ipr_max: Option<f64>,
    /// Largest `|mu|` among eigenvectors with IPR above 0.1, if any.
    pub localized_mu_max: Option<f64>,
    #[serde(default)]
    pub error: Option<String>,
}

pub fn walk_kappa_sweep(a: f64, kappas: &[f64], size: usize) -> Vec<WalkSweepRow> {
    kappas.iter().map(|&kappa| walk_point(a, kappa, size)).collect()
}

/// Propagator IPR extrema at one `kappa`; failures become error rows.
pub fn walk_point(a: f64, kappa: f64, size: usize) -> WalkSweepRow {
    let run = || -> Result<WalkSweepRow> {
        let spec = WalkSpec::off_diagonal(a, kappa * a, size, Dephasing::EveryStep)?;
        let p = build_incoherent_propagator(&spec)?;
        let (ipr_min, ipr_max) = p.ipr_range();
        let localized_mu_max = (0..p.len())
            .filter(|&k| p.ipr[k] > 0.1)
            .map(|k| p.eigenvalues[k].norm())
            .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))));
        Ok(WalkSweepRow { kappa, ipr_min: Some(ipr_min), ipr_max: Some(ipr_max), localized_mu_max, error: None })
    };
    run().unwrap_or_else(|e| WalkSweepRow {
        kappa,
        ipr_min: None,
        ipr_max: None,
        localized_mu_max: None,
        error: Some(e.to_string()),
    })
}
