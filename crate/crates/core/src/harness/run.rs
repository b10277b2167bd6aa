use serde::Serialize;

use super::config::{ExperimentConfig, Regime, WalkRegime};
use super::io::{num, opt, Bundle};
use super::sweep::{run_liouvillian_sweep, run_scaling_campaign, run_walk_sweep, KappaSweep, ScalingTable};
use crate::dynamics::{
    delta_distribution, delta_state, evolve_coherent, evolve_markov, evolve_phase_randomized, fit_diffusion,
    fit_spreading_exponent, DiffusionFit, StochasticEvolutionSpec, Trajectory,
};
use crate::error::Result;
use crate::lattice::{
    build_hamiltonian, build_markov, build_profile, mobility_edge_energy, write_matrix_csv, Boundary, LatticeSpec,
    Model,
};
use crate::linalg::LineFit;
use crate::liouvillian::{build_liouvillian_capped, eigendecompose_liouvillian, evolve_lindblad, DensityMatrix};
use crate::spectra::{
    detect_mobility_edge, eigendecompose_symmetric, level_statistics, lyapunov_exponents, pseudo_bands,
    track_state, Generator, MobilityEdgeReport, StateClass,
};
use crate::walk::{
    build_incoherent_propagator, evolve_incoherent, evolve_walk_ensemble, Dephasing, IncoherentPropagator,
    IntensityState, WalkRecord, WalkSpec, WalkState,
};

#[derive(Debug, Clone, Serialize)]
pub struct ProfileSummary {
    pub target: f64,
    pub eigenvalue: f64,
    pub ipr: f64,
    pub cluster: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BandSummary {
    pub band: usize,
    pub window: (f64, f64),
    pub levels: usize,
    /// Mean Lyapunov exponent over the band.
    pub lyapunov_mean: Option<f64>,
    /// Log-log ILSD slope over `[s0, 1e-2]`.
    pub ilsd_slope: Option<f64>,
    pub ilsd_slope_stderr: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumSummary {
    pub generator: Generator,
    pub size: usize,
    pub boundary: Boundary,
    pub kappa: f64,
    pub eigenvalue_range: (f64, f64),
    pub edge: MobilityEdgeReport,
    /// Analytic mobility edge of the diagonal model's Hamiltonian.
    pub expected_edge: Option<f64>,
    pub profiles: Vec<ProfileSummary>,
    pub bands: Vec<BandSummary>,
}

/// Eigenvalues, IPRs, classes and (open chains) Lyapunov exponents of one operator.
pub fn run_spectrum(
    cfg: &ExperimentConfig,
    spec: &LatticeSpec,
    generator: Generator,
    bundle: &mut Bundle,
    name: &str,
) -> Result<SpectrumSummary> {
    let sc = &cfg.spectrum;
    let op = generator.build(spec)?;
    let s = eigendecompose_symmetric(op.as_ref())?;
    let l = spec.size;
    let iprs: Vec<Vec<f64>> = sc.q.iter().map(|&q| s.iprs(q)).collect();
    let ipr2 = s.iprs(2.0);
    let edge = detect_mobility_edge(&s.eigenvalues, &ipr2, l, &sc.thresholds)?;
    let lyap = match (sc.lyapunov, generator.tridiagonal(spec)?) {
        (true, Some((_, off))) => Some(lyapunov_exponents(&s.eigenvalues, &off)?),
        _ => None,
    };
    let mut header = vec!["index".to_string(), "eigenvalue".to_string()];
    header.extend(sc.q.iter().map(|q| format!("ipr_q{q}")));
    header.push("class".into());
    if lyap.is_some() {
        header.push("lyapunov".into());
    }
    let rows: Vec<Vec<String>> = (0..l)
        .map(|i| {
            let mut r = vec![i.to_string(), num(s.eigenvalues[i])];
            r.extend(iprs.iter().map(|v| num(v[i])));
            r.push(class_name(sc.thresholds.classify(ipr2[i], l)).into());
            if let Some(ly) = &lyap {
                r.push(num(ly[i].value));
            }
            r
        })
        .collect();
    bundle.table(&format!("{name}_spectrum.csv"), &header, &rows)?;

    let mut profiles = Vec::new();
    if !sc.profiles.is_empty() {
        let mut cols = Vec::new();
        for &target in &sc.profiles {
            let st = track_state(spec, generator, target, f64::INFINITY)?;
            profiles.push(ProfileSummary { target, eigenvalue: st.eigenvalue, ipr: st.ipr(2.0), cluster: st.cluster });
            cols.push(st.vector);
        }
        let mut header = vec!["site".to_string()];
        header.extend(profiles.iter().map(|p| format!("psi2_{}", p.eigenvalue)));
        let rows: Vec<Vec<String>> = (0..l)
            .map(|n| std::iter::once(n.to_string()).chain(cols.iter().map(|c| num(c[n] * c[n]))).collect())
            .collect();
        bundle.table(&format!("{name}_profiles.csv"), &header, &rows)?;
    }

    let mut bands = Vec::new();
    if lyap.is_some() || sc.ilsd_cutoff.is_some() {
        let windows = pseudo_bands(&s.eigenvalues, sc.bands)?;
        let mut ilsd_rows = Vec::new();
        for (b, &(lo, hi)) in windows.iter().enumerate() {
            let inside: Vec<usize> = (0..l).filter(|&i| s.eigenvalues[i] >= lo && s.eigenvalues[i] <= hi).collect();
            let lyapunov_mean = lyap
                .as_ref()
                .map(|ly| inside.iter().map(|&i| ly[i].value).sum::<f64>() / inside.len() as f64);
            let mut summary = BandSummary {
                band: b + 1,
                window: (lo, hi),
                levels: inside.len(),
                lyapunov_mean,
                ilsd_slope: None,
                ilsd_slope_stderr: None,
                error: None,
            };
            if let Some(s0) = sc.ilsd_cutoff {
                match level_statistics(&s.eigenvalues, (lo, hi), s0) {
                    Ok(st) => {
                        summary.ilsd_slope = st.fit.map(|f| f.slope);
                        summary.ilsd_slope_stderr = st.fit.map(|f| f.slope_stderr);
                        for (x, y) in &st.ilsd {
                            ilsd_rows.push(vec![(b + 1).to_string(), num(*x), num(*y)]);
                        }
                    }
                    Err(e) => summary.error = Some(e.to_string()),
                }
            }
            bands.push(summary);
        }
        if sc.ilsd_cutoff.is_some() {
            let header = ["band", "s", "ilsd"].map(String::from);
            bundle.table(&format!("{name}_ilsd.csv"), &header, &ilsd_rows)?;
        }
    }
    let expected_edge = match (spec.model, generator) {
        (Model::DiagonalGaa, Generator::Hamiltonian) => mobility_edge_energy(spec).ok(),
        _ => None,
    };
    Ok(SpectrumSummary {
        generator,
        size: l,
        boundary: spec.boundary,
        kappa: spec.kappa(),
        eigenvalue_range: (s.eigenvalues[0], s.eigenvalues[l - 1]),
        edge,
        expected_edge,
        profiles,
        bands,
    })
}

fn class_name(c: StateClass) -> &'static str {
    match c {
        StateClass::Localized => "localized",
        StateClass::Extended => "extended",
        StateClass::Critical => "critical",
    }
}

/// Dense operator as CSV.
pub fn export_matrix(spec: &LatticeSpec, generator: Generator, bundle: &mut Bundle, name: &str) -> Result<()> {
    let op = generator.build(spec)?;
    let mut bytes = Vec::new();
    write_matrix_csv(op.matrix(), &mut bytes)?;
    let path = bundle.dir.join(format!("{name}_matrix.csv"));
    super::io::write_atomic(&path, &bytes)?;
    bundle.files.push(path);
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct DynamicsSummary {
    pub regime: Regime,
    pub size: usize,
    pub kappa: f64,
    pub samples: usize,
    pub max_norm_drift: f64,
    pub clamped: usize,
    pub warnings: Vec<String>,
    pub final_second_moment: f64,
    pub spreading: Option<LineFit>,
    pub diffusion: Option<DiffusionFit>,
    /// `2 J^2 / gamma` for uniform hopping.
    pub expected_diffusion: Option<f64>,
    pub fit_errors: Vec<String>,
}

/// Single-site excitation evolved in the configured regime.
pub fn run_dynamics(
    cfg: &ExperimentConfig,
    spec: &LatticeSpec,
    regime: Regime,
    bundle: &mut Bundle,
    name: &str,
) -> Result<DynamicsSummary> {
    let d = &cfg.dynamics;
    let times = d.times.values()?;
    let l = spec.size;
    let profile = build_profile(spec)?;
    let traj = match regime {
        Regime::Coherent => {
            evolve_coherent(&build_hamiltonian(&profile, spec.boundary), &delta_state(l, d.origin), &times)?
        }
        Regime::Markov => {
            evolve_markov(&build_markov(&profile, d.gamma, spec.boundary)?, &delta_distribution(l, d.origin), &times)?
        }
        Regime::Ensemble => {
            let mut st = StochasticEvolutionSpec::for_dephasing(d.gamma, d.realizations, cfg.seed);
            if let Some(dt) = d.dt {
                st.dt = dt;
            }
            evolve_phase_randomized(&build_hamiltonian(&profile, spec.boundary), &delta_state(l, d.origin), &st, &times)?
        }
        Regime::Lindblad => {
            let lv = build_liouvillian_capped(&profile, d.gamma, spec.boundary, d.cap)?;
            evolve_lindblad(&lv, &DensityMatrix::site(l, d.origin), &times)?
        }
    };
    bundle.trajectory(&format!("{name}_trajectory.csv"), &traj, "t")?;
    if let Some(se) = &traj.standard_error {
        write_standard_error(bundle, &format!("{name}_stderr.csv"), &traj.times, se, "t")?;
    }
    let mut fit_errors = Vec::new();
    let (mut spreading, mut diffusion) = (None, None);
    if let Some([t0, t1]) = d.fit_window {
        match fit_spreading_exponent(&traj, (t0, t1)) {
            Ok(f) => spreading = Some(f),
            Err(e) => fit_errors.push(format!("spreading: {e}")),
        }
        if regime != Regime::Coherent {
            match fit_diffusion(&traj, (t0, t1)) {
                Ok(f) => diffusion = Some(f),
                Err(e) => fit_errors.push(format!("diffusion: {e}")),
            }
        }
    }
    let expected_diffusion = match (spec.model, regime) {
        (Model::DiagonalGaa, Regime::Markov | Regime::Ensemble | Regime::Lindblad) => {
            Some(2.0 * spec.j * spec.j / d.gamma)
        }
        _ => None,
    };
    Ok(summarize(regime, spec, &traj, spreading, diffusion, expected_diffusion, fit_errors))
}

fn summarize(
    regime: Regime,
    spec: &LatticeSpec,
    traj: &Trajectory,
    spreading: Option<LineFit>,
    diffusion: Option<DiffusionFit>,
    expected_diffusion: Option<f64>,
    fit_errors: Vec<String>,
) -> DynamicsSummary {
    DynamicsSummary {
        regime,
        size: spec.size,
        kappa: spec.kappa(),
        samples: traj.len(),
        max_norm_drift: traj.max_norm_drift(),
        clamped: traj.clamped,
        warnings: traj.warnings.clone(),
        final_second_moment: traj.second_moment.last().copied().unwrap_or(0.0),
        spreading,
        diffusion,
        expected_diffusion,
        fit_errors,
    }
}

fn write_standard_error(bundle: &mut Bundle, name: &str, times: &[f64], se: &[Vec<f64>], label: &str) -> Result<()> {
    let width = se.first().map_or(0, Vec::len);
    let mut header = vec![label.to_string()];
    header.extend((0..width).map(|n| format!("se_{n}")));
    let rows: Vec<Vec<String>> = times
        .iter()
        .zip(se)
        .map(|(t, r)| std::iter::once(num(*t)).chain(r.iter().map(|x| num(*x))).collect())
        .collect();
    bundle.table(name, &header, &rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct LiouvillianSummary {
    pub size: usize,
    pub gamma: f64,
    pub kappa: f64,
    pub norm: f64,
    pub max_residual: Option<f64>,
    pub stationary_eigenvalue: (f64, f64),
    /// `max_n |p_n - 1/L|` of the stationary populations.
    pub stationary_deviation: f64,
    pub slow_states: usize,
    pub slow_ipr_range: Option<(f64, f64)>,
}

/// Full Liouvillian spectrum with population IPRs.
pub fn run_liouvillian(
    spec: &LatticeSpec,
    gamma: f64,
    cap: usize,
    bundle: &mut Bundle,
    name: &str,
) -> Result<LiouvillianSummary> {
    let profile = build_profile(spec)?;
    let lv = build_liouvillian_capped(&profile, gamma, spec.boundary, cap)?;
    let s = eigendecompose_liouvillian(&lv)?;
    let slow = s.slow_branch();
    let header = ["index", "re", "im", "ipr", "slow"].map(String::from);
    let rows: Vec<Vec<String>> = (0..s.eigenvalues.len())
        .map(|j| {
            let z = s.eigenvalues[j];
            vec![j.to_string(), num(z.re), num(z.im), opt(s.ipr[j]), slow.contains(&j).to_string()]
        })
        .collect();
    bundle.table(&format!("{name}_spectrum.csv"), &header, &rows)?;
    let l = spec.size as f64;
    let z = s.eigenvalues[s.stationary];
    Ok(LiouvillianSummary {
        size: spec.size,
        gamma,
        kappa: spec.kappa(),
        norm: s.norm,
        max_residual: s.max_residual,
        stationary_eigenvalue: (z.re, z.im),
        stationary_deviation: s.stationary_state.iter().map(|p| (p - 1.0 / l).abs()).fold(0.0, f64::max),
        slow_states: slow.len(),
        slow_ipr_range: s.slow_ipr_range(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct WalkSummary {
    pub kappa: f64,
    pub size: usize,
    pub mu1: (f64, f64),
    /// `max_k |v_k / sum(v) - 1/(2L)|` of the leading eigenvector.
    pub mu1_uniformity: f64,
    pub ipr_range: (f64, f64),
    pub localized_mu_max: Option<f64>,
    pub localized_states: usize,
}

pub fn stationary_deviation(p: &IncoherentPropagator) -> f64 {
    let v = p.eigenvector(0);
    let s: num_complex::Complex64 = v.iter().sum();
    let target = 1.0 / v.len() as f64;
    v.iter().map(|z| (z / s - target).norm()).fold(0.0, f64::max)
}

/// Spectrum of the incoherent walk propagator.
pub fn run_walk_spectrum(
    cfg: &ExperimentConfig,
    kappa: f64,
    rows: &mut Vec<Vec<String>>,
) -> Result<WalkSummary> {
    let w = &cfg.walk;
    let spec = WalkSpec::off_diagonal(w.a, kappa * w.a, w.size, Dephasing::EveryStep)?;
    let p = build_incoherent_propagator(&spec)?;
    for k in 0..p.len() {
        let mu = p.eigenvalues[k];
        rows.push(vec![
            num(kappa),
            k.to_string(),
            num(mu.re),
            num(mu.im),
            num(mu.norm()),
            num(p.ipr[k]),
            num(p.component_ipr[k]),
        ]);
    }
    let localized: Vec<usize> = (0..p.len()).filter(|&k| p.ipr[k] > w.threshold).collect();
    Ok(WalkSummary {
        kappa,
        size: w.size,
        mu1: (p.eigenvalues[0].re, p.eigenvalues[0].im),
        mu1_uniformity: stationary_deviation(&p),
        ipr_range: p.ipr_range(),
        localized_mu_max: localized.iter().map(|&k| p.eigenvalues[k].norm()).reduce(f64::max),
        localized_states: localized.len(),
    })
}

pub const WALK_SPECTRUM_HEADER: [&str; 7] = ["kappa", "k", "re", "im", "abs", "ipr", "component_ipr"];

#[derive(Debug, Clone, Serialize)]
pub struct WalkDynamicsSummary {
    pub kappa: f64,
    pub regime: WalkRegime,
    pub steps: usize,
    pub final_total: f64,
    pub final_second_moment: f64,
}

/// Intensities from a single injected pulse in loop `u`.
pub fn run_walk_dynamics(cfg: &ExperimentConfig, kappa: f64, bundle: &mut Bundle, name: &str) -> Result<WalkDynamicsSummary> {
    let w = &cfg.walk;
    let spec = WalkSpec::off_diagonal(w.a, kappa * w.a, w.size, Dephasing::EveryStep)?;
    let steps = w.steps()?;
    let rec: WalkRecord = match w.regime {
        WalkRegime::Incoherent => evolve_incoherent(&spec, &IntensityState::injected(w.size, w.origin), &steps)?,
        WalkRegime::Ensemble => {
            evolve_walk_ensemble(&spec, &WalkState::injected(w.size, w.origin), &steps, w.realizations, cfg.seed)?
        }
    };
    let traj = rec.trajectory(w.origin);
    bundle.trajectory(&format!("{name}_trajectory.csv"), &traj, "step")?;
    if let Some(se) = &rec.standard_error {
        write_standard_error(bundle, &format!("{name}_stderr.csv"), &traj.times, se, "step")?;
    }
    Ok(WalkDynamicsSummary {
        kappa,
        regime: w.regime,
        steps: steps.last().copied().unwrap_or(0),
        final_total: rec.states.last().map_or(0.0, IntensityState::total),
        final_second_moment: traj.second_moment.last().copied().unwrap_or(0.0),
    })
}

/// Markov sweep table plus `kappa_c`.
pub fn run_markov_sweep(cfg: &ExperimentConfig, bundle: &mut Bundle, name: &str) -> Result<super::SweepTable> {
    let s = &cfg.sweep;
    let sweep = KappaSweep {
        a: s.a,
        gamma: s.gamma,
        kappas: s.kappas.values()?,
        size: s.size,
        threshold: s.threshold,
        dynamics: s.dynamics,
    };
    let table = sweep.run(Some(&bundle.dir.join(format!("{name}_points"))))?;
    bundle.rows(&format!("{name}_sweep.csv"), &table.rows)?;
    Ok(table)
}

pub fn run_liouvillian_grid(cfg: &ExperimentConfig, bundle: &mut Bundle, name: &str) -> Result<super::LiouvillianSweep> {
    let c = &cfg.liouvillian;
    let t = run_liouvillian_sweep(
        c.a,
        &c.gammas,
        &c.kappas.values()?,
        c.size,
        c.threshold,
        Some(&bundle.dir.join(format!("{name}_points"))),
    )?;
    bundle.rows(&format!("{name}_sweep.csv"), &t.rows)?;
    Ok(t)
}

pub fn run_walk_grid(cfg: &ExperimentConfig, bundle: &mut Bundle, name: &str) -> Result<super::WalkSweep> {
    let w = &cfg.walk;
    let t = run_walk_sweep(w.a, &w.kappas.values()?, w.size, w.threshold, Some(&bundle.dir.join(format!("{name}_points"))))?;
    bundle.rows(&format!("{name}_sweep.csv"), &t.rows)?;
    Ok(t)
}

pub fn run_scaling(cfg: &ExperimentConfig, bundle: &mut Bundle, name: &str) -> Result<ScalingTable> {
    let sc = &cfg.scaling;
    let table = run_scaling_campaign(cfg.lattice()?, sc.generator, &sc.targets, &sc.qs, &sc.sizes)?;
    bundle.rows(&format!("{name}_beta.csv"), &table.rows)?;
    let header = ["target", "size", "q", "ipr"].map(String::from);
    let rows: Vec<Vec<String>> = table
        .samples
        .iter()
        .map(|&(t, l, q, v)| vec![num(t), l.to_string(), num(q), num(v)])
        .collect();
    bundle.table(&format!("{name}_samples.csv"), &header, &rows)?;
    Ok(table)
}
