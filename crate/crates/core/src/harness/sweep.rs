use std::path::Path;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::io::PointStore;
use crate::dynamics::{delta_distribution, evolve_markov, fit_diffusion, fit_spreading_exponent, log_times};
use crate::error::{Error, Result};
use crate::lattice::{build_markov, build_profile, fibonacci_index, Boundary, LatticeSpec};
use crate::liouvillian::{liouvillian_point, LiouvillianSweepRow};
use crate::spectra::{
    beta_exponent, classify_beta, detect_mobility_edge, eigendecompose_symmetric, EdgeThresholds, Generator,
    LocalizedSide, ScalingClass,
};
use crate::walk::{walk_point, WalkSweepRow};

/// Evaluate `f` at every key in a work-stealing pool, reusing results already
/// in `store`. Returns the rows in key order and how many were reused.
pub fn run_points<T, F>(keys: &[String], store: Option<&PointStore>, f: F) -> Result<(Vec<T>, usize)>
where
    T: Serialize + DeserializeOwned + Send,
    F: Fn(usize) -> T + Sync,
{
    let out: Vec<Result<(T, bool)>> = keys
        .par_iter()
        .enumerate()
        .map(|(i, key)| {
            if let Some(hit) = store.and_then(|s| s.get::<T>(key)) {
                return Ok((hit, true));
            }
            let row = f(i);
            if let Some(s) = store {
                s.put(key, &row)?;
            }
            Ok((row, false))
        })
        .collect();
    let mut rows = Vec::with_capacity(out.len());
    let mut reused = 0;
    for r in out {
        let (row, hit) = r?;
        reused += hit as usize;
        rows.push(row);
    }
    Ok((rows, reused))
}

/// Diagnostics of the Markov matrix at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kappa: f64,
    pub gamma: f64,
    pub size: usize,
    pub ipr_min: Option<f64>,
    pub ipr_max: Option<f64>,
    /// Mobility edge `lambda_m`, when cleanly separated.
    pub edge: Option<f64>,
    pub localized_side: Option<LocalizedSide>,
    pub misclassified: Option<usize>,
    pub spreading_exponent: Option<f64>,
    pub diffusion: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub threshold: f64,
    /// First grid point with `IPR_max > threshold`.
    pub kappa_c: Option<f64>,
    /// Rows taken from an earlier, interrupted run.
    pub reused: usize,
}

/// First `kappa` in ascending order whose `ipr_max` exceeds `threshold`.
pub fn kappa_c(points: impl IntoIterator<Item = (f64, Option<f64>)>, threshold: f64) -> Option<f64> {
    let mut v: Vec<(f64, Option<f64>)> = points.into_iter().collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    v.into_iter().find(|(_, m)| m.is_some_and(|x| x > threshold)).map(|(k, _)| k)
}

fn markov_point(a: f64, gamma: f64, kappa: f64, size: usize, dynamics: bool) -> SweepRow {
    let mut row = SweepRow {
        kappa,
        gamma,
        size,
        ipr_min: None,
        ipr_max: None,
        edge: None,
        localized_side: None,
        misclassified: None,
        spreading_exponent: None,
        diffusion: None,
        error: None,
    };
    let mut run = || -> Result<()> {
        let spec = LatticeSpec::off_diagonal_aa(a, kappa * a, size)?;
        let profile = build_profile(&spec)?;
        let w = build_markov(&profile, gamma, spec.boundary)?;
        let s = eigendecompose_symmetric(&w)?;
        let ipr = s.iprs(2.0);
        let report = detect_mobility_edge(&s.eigenvalues, &ipr, size, &EdgeThresholds::default())?;
        row.ipr_min = Some(report.ipr_min);
        row.ipr_max = Some(report.ipr_max);
        row.edge = report.edge;
        row.localized_side = Some(report.localized_side);
        row.misclassified = Some(report.misclassified);
        if dynamics {
            let times = log_times(1.0, 1e5, 51);
            let traj = evolve_markov(&w, &delta_distribution(size, 0), &times)?;
            let limit = (size as f64 / 4.0).powi(2);
            let end = traj
                .times
                .iter()
                .zip(&traj.second_moment)
                .take_while(|(_, &s)| s < limit)
                .last()
                .map(|(t, _)| *t)
                .unwrap_or(0.0);
            let window = (10.0, end);
            row.spreading_exponent = fit_spreading_exponent(&traj, window).ok().map(|f| f.slope);
            row.diffusion = fit_diffusion(&traj, window).ok().map(|d| d.diffusion);
        }
        Ok(())
    };
    if let Err(e) = run() {
        row.error = Some(e.to_string());
    }
    row
}

fn kappa_key(kappa: f64) -> String {
    format!("kappa={kappa}")
}

/// Markov-matrix sweep of the off-diagonal model over `kappa = B / A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaSweep {
    pub a: f64,
    pub gamma: f64,
    pub kappas: Vec<f64>,
    pub size: usize,
    pub threshold: f64,
    /// Also fit the spreading of a single-site excitation at each point.
    pub dynamics: bool,
}

impl KappaSweep {
    pub fn new(a: f64, gamma: f64, kappas: &[f64], size: usize) -> Self {
        Self { a, gamma, kappas: kappas.to_vec(), size, threshold: 0.1, dynamics: false }
    }

    /// With `resume` the per-point results go to `resume/points` and a rerun
    /// skips the points already listed in `resume/manifest.json`.
    pub fn run(&self, resume: Option<&Path>) -> Result<SweepTable> {
        check_grid(&self.kappas)?;
        let store = match resume {
            Some(dir) => Some(PointStore::open(dir, self)?),
            None => None,
        };
        let keys: Vec<String> = self.kappas.iter().map(|&k| kappa_key(k)).collect();
        let (rows, reused) = run_points(&keys, store.as_ref(), |i| {
            markov_point(self.a, self.gamma, self.kappas[i], self.size, self.dynamics)
        })?;
        let kappa_c = kappa_c(rows.iter().map(|r| (r.kappa, r.ipr_max)), self.threshold);
        Ok(SweepTable { rows, threshold: self.threshold, kappa_c, reused })
    }
}

pub fn run_kappa_sweep(a: f64, gamma: f64, kappas: &[f64], size: usize) -> Result<SweepTable> {
    KappaSweep::new(a, gamma, kappas, size).run(None)
}

fn check_grid(kappas: &[f64]) -> Result<()> {
    if kappas.is_empty() {
        return Err(Error::Empty("kappa grid is empty"));
    }
    if let Some(k) = kappas.iter().find(|&&k| !(k > 0.0 && k <= 1.0)) {
        return Err(Error::InvalidParameter(format!("kappa = {k} outside (0, 1]")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiouvillianSweep {
    pub rows: Vec<LiouvillianSweepRow>,
    /// `(gamma, kappa_c)` in the order of the requested rates.
    pub kappa_c: Vec<(f64, Option<f64>)>,
    pub reused: usize,
}

#[derive(Serialize)]
struct LiouvillianParams<'a> {
    kind: &'static str,
    a: f64,
    gammas: &'a [f64],
    kappas: &'a [f64],
    size: usize,
}

/// Slow-branch population IPR of the Liouvillian over `gammas x kappas`.
pub fn run_liouvillian_sweep(
    a: f64,
    gammas: &[f64],
    kappas: &[f64],
    size: usize,
    threshold: f64,
    resume: Option<&Path>,
) -> Result<LiouvillianSweep> {
    check_grid(kappas)?;
    if gammas.is_empty() {
        return Err(Error::Empty("gamma grid is empty"));
    }
    let store = match resume {
        Some(dir) => Some(PointStore::open(dir, &LiouvillianParams { kind: "liouvillian", a, gammas, kappas, size })?),
        None => None,
    };
    let grid: Vec<(f64, f64)> = gammas.iter().flat_map(|&g| kappas.iter().map(move |&k| (g, k))).collect();
    let keys: Vec<String> = grid.iter().map(|(g, k)| format!("gamma={g}_kappa={k}")).collect();
    let (rows, reused) = run_points(&keys, store.as_ref(), |i| liouvillian_point(a, grid[i].0, grid[i].1, size))?;
    let kappa_c = gammas
        .iter()
        .map(|&g| (g, kappa_c(rows.iter().filter(|r| r.gamma == g).map(|r| (r.kappa, r.ipr_max)), threshold)))
        .collect();
    Ok(LiouvillianSweep { rows, kappa_c, reused })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkSweep {
    pub rows: Vec<WalkSweepRow>,
    pub kappa_c: Option<f64>,
    pub reused: usize,
}

#[derive(Serialize)]
struct WalkParams<'a> {
    kind: &'static str,
    a: f64,
    kappas: &'a [f64],
    size: usize,
}

/// Incoherent walk propagator over a `kappa` grid (`B = kappa A`).
pub fn run_walk_sweep(a: f64, kappas: &[f64], size: usize, threshold: f64, resume: Option<&Path>) -> Result<WalkSweep> {
    check_grid(kappas)?;
    let store = match resume {
        Some(dir) => Some(PointStore::open(dir, &WalkParams { kind: "walk", a, kappas, size })?),
        None => None,
    };
    let keys: Vec<String> = kappas.iter().map(|&k| kappa_key(k)).collect();
    let (rows, reused) = run_points(&keys, store.as_ref(), |i| walk_point(a, kappas[i], size))?;
    let kappa_c = kappa_c(rows.iter().map(|r| (r.kappa, r.ipr_max)), threshold);
    Ok(WalkSweep { rows, kappa_c, reused })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub target: f64,
    /// Eigenvalue tracked at the largest size.
    pub reference: Option<f64>,
    pub q: f64,
    pub beta: Option<f64>,
    pub raw_slope: Option<f64>,
    pub stderr: Option<f64>,
    /// `ln IPR^(q) / ln(1/L)` at the largest size alone.
    pub fixed_size_beta: Option<f64>,
    pub class: Option<ScalingClass>,
    pub error: Option<String>,
}

/// `(target, size, q, IPR^(q))`.
pub type ScalingSample = (f64, usize, f64, f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
    pub samples: Vec<ScalingSample>,
}

/// `beta^(q)` of each target state over Fibonacci `sizes` with open boundaries.
pub fn run_scaling_campaign(
    template: &LatticeSpec,
    generator: Generator,
    targets: &[f64],
    qs: &[f64],
    sizes: &[usize],
) -> Result<ScalingTable> {
    if template.boundary != Boundary::Open {
        return Err(Error::InvalidParameter("scaling campaigns use open boundaries".into()));
    }
    if let Some(s) = sizes.iter().find(|&&s| fibonacci_index(s as u64).is_none()) {
        return Err(Error::InvalidParameter(format!("size {s} is not a Fibonacci number")));
    }
    if targets.is_empty() {
        return Err(Error::Empty("no target eigenvalues"));
    }
    let largest = sizes.iter().copied().max().unwrap_or(0);
    let per_target: Vec<(Vec<ScalingRow>, Vec<ScalingSample>)> = targets
        .par_iter()
        .map(|&target| match beta_exponent(template, generator, target, qs, sizes) {
            Ok(fit) => {
                let rows = fit
                    .exponents
                    .iter()
                    .map(|b| {
                        let top = fit.samples.iter().find(|s| s.0 == largest && s.1 == b.q).map(|s| s.2);
                        ScalingRow {
                            target,
                            reference: Some(fit.reference),
                            q: b.q,
                            beta: Some(b.beta),
                            raw_slope: Some(b.raw_slope),
                            stderr: Some(b.stderr),
                            fixed_size_beta: top.map(|ipr| ipr.ln() / (1.0 / largest as f64).ln()),
                            class: Some(classify_beta(b.beta)),
                            error: None,
                        }
                    })
                    .collect();
                let samples = fit.samples.iter().map(|&(l, q, v)| (target, l, q, v)).collect();
                (rows, samples)
            }
            Err(e) => {
                let rows = qs
                    .iter()
                    .map(|&q| ScalingRow {
                        target,
                        reference: None,
                        q,
                        beta: None,
                        raw_slope: None,
                        stderr: None,
                        fixed_size_beta: None,
                        class: None,
                        error: Some(e.to_string()),
                    })
                    .collect();
                (rows, Vec::new())
            }
        })
        .collect();
    let mut rows = Vec::new();
    let mut samples = Vec::new();
    for (r, s) in per_target {
        rows.extend(r);
        samples.extend(s);
    }
    Ok(ScalingTable { rows, samples })
}
