use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;
use crate::liouvillian::DEFAULT_SIZE_CAP;
use crate::spectra::{EdgeThresholds, Generator};

/// Values rounded to this many decimals when a grid is expanded, so that
/// `0.05 + 6 * 0.05` prints as `0.35`.
const GRID_DECIMALS: i32 = 12;

/// A list of values or an inclusive arithmetic range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl Grid {
    pub fn range(start: f64, stop: f64, step: f64) -> Self {
        Grid::Range { start, stop, step }
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        let v = match *self {
            Grid::List(ref v) => v.clone(),
            Grid::Range { start, stop, step } => {
                if !(step > 0.0) || !(stop >= start) {
                    return Err(Error::Config(format!("bad range {start}..{stop} step {step}")));
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                let scale = 10f64.powi(GRID_DECIMALS);
                (0..=n).map(|i| ((start + i as f64 * step) * scale).round() / scale).collect()
            }
        };
        if v.is_empty() {
            return Err(Error::Config("grid is empty".into()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("grid holds a non-finite value".into()));
        }
        Ok(v)
    }

    fn resolve(&mut self) -> Result<()> {
        *self = Grid::List(self.values()?);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

/// Sample times: an explicit list or `count` points between `start` and `stop`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeGrid {
    List(Vec<f64>),
    Span {
        start: f64,
        stop: f64,
        count: usize,
        #[serde(default)]
        spacing: Spacing,
    },
}

impl TimeGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        let v = match *self {
            TimeGrid::List(ref v) => v.clone(),
            TimeGrid::Span { start, stop, count, spacing } => {
                if count < 2 || !(stop > start) || start < 0.0 {
                    return Err(Error::Config(format!("bad time span {start}..{stop} with {count} points")));
                }
                match spacing {
                    Spacing::Linear => crate::dynamics::linear_times(start, stop, count),
                    Spacing::Log => {
                        if !(start > 0.0) {
                            return Err(Error::Config("log time spacing needs start > 0".into()));
                        }
                        crate::dynamics::log_times(start, stop, count)
                    }
                }
            }
        };
        if v.is_empty() {
            return Err(Error::Config("time grid is empty".into()));
        }
        if v.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || v.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("times must be finite, non-negative and non-decreasing".into()));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSection {
    pub generator: Generator,
    /// IPR moments written per state; `q = 2` is always included.
    pub q: Vec<f64>,
    pub thresholds: EdgeThresholds,
    /// Lyapunov exponents (open chains only).
    pub lyapunov: bool,
    /// Eigenvalues whose nearest eigenvector profile is exported.
    pub profiles: Vec<f64>,
    /// Lower spacing cutoff for level statistics; no statistics when absent.
    pub ilsd_cutoff: Option<f64>,
    /// Pseudo-band count for level statistics.
    pub bands: usize,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self {
            generator: Generator::Hamiltonian,
            q: vec![2.0],
            thresholds: EdgeThresholds::default(),
            lyapunov: true,
            profiles: Vec::new(),
            ilsd_cutoff: None,
            bands: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    #[default]
    Coherent,
    Markov,
    /// Phase-randomized coherent runs.
    Ensemble,
    Lindblad,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsSection {
    pub regime: Regime,
    pub gamma: f64,
    pub times: TimeGrid,
    /// Excited site.
    pub origin: usize,
    pub realizations: usize,
    /// Randomization interval; `2 / gamma` when absent.
    pub dt: Option<f64>,
    /// Time window of the spreading and diffusion fits.
    pub fit_window: Option<[f64; 2]>,
    /// Size cap of the Lindblad regime.
    pub cap: usize,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        Self {
            regime: Regime::Coherent,
            gamma: 100.0,
            times: TimeGrid::Span { start: 0.0, stop: 100.0, count: 101, spacing: Spacing::Linear },
            origin: 0,
            realizations: 200,
            dt: None,
            fit_window: None,
            cap: DEFAULT_SIZE_CAP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    #[default]
    Markov,
    Liouvillian,
    Walk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub kind: SweepKind,
    #[serde(rename = "A")]
    pub a: f64,
    pub gamma: f64,
    #[serde(rename = "L")]
    pub size: usize,
    pub kappas: Grid,
    /// Individual `kappa` values shown as separate panels.
    pub panels: Vec<f64>,
    /// `IPR_max` level defining `kappa_c`.
    pub threshold: f64,
    /// Also evolve a single-site excitation at each point and fit its spreading.
    pub dynamics: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            kind: SweepKind::Markov,
            a: 1.0,
            gamma: 100.0,
            size: 987,
            kappas: Grid::range(0.05, 1.0, 0.05),
            panels: vec![0.5, 0.7, 0.9],
            threshold: 0.1,
            dynamics: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WalkRegime {
    /// Phase-averaged intensity map.
    #[default]
    Incoherent,
    /// Mean over coherent runs with fresh random phases every step.
    Ensemble,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WalkSection {
    #[serde(rename = "A")]
    pub a: f64,
    pub kappa: f64,
    #[serde(rename = "L")]
    pub size: usize,
    pub kappas: Grid,
    pub panels: Vec<f64>,
    pub regime: WalkRegime,
    pub max_step: usize,
    pub stride: usize,
    pub origin: usize,
    pub realizations: usize,
    pub threshold: f64,
}

impl Default for WalkSection {
    fn default() -> Self {
        Self {
            a: 0.1,
            kappa: 0.5,
            size: 377,
            kappas: Grid::range(0.05, 1.0, 0.05),
            panels: vec![0.2, 0.5, 0.95],
            regime: WalkRegime::Incoherent,
            max_step: 20000,
            stride: 200,
            origin: 0,
            realizations: 200,
            threshold: 0.1,
        }
    }
}

impl WalkSection {
    pub fn steps(&self) -> Result<Vec<usize>> {
        if self.stride == 0 {
            return Err(Error::Config("walk stride must be positive".into()));
        }
        Ok((0..=self.max_step).step_by(self.stride).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LiouvillianSection {
    #[serde(rename = "A")]
    pub a: f64,
    pub gamma: f64,
    pub gammas: Vec<f64>,
    pub kappas: Grid,
    #[serde(rename = "L")]
    pub size: usize,
    pub cap: usize,
    pub threshold: f64,
}

impl Default for LiouvillianSection {
    fn default() -> Self {
        Self {
            a: 1.0,
            gamma: 1.0,
            gammas: vec![0.1, 1.0, 100.0],
            kappas: Grid::range(0.1, 1.0, 0.1),
            size: 55,
            cap: DEFAULT_SIZE_CAP,
            threshold: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingSection {
    pub generator: Generator,
    pub sizes: Vec<usize>,
    pub qs: Vec<f64>,
    /// Eigenvalues of the states to track (at the largest size).
    pub targets: Vec<f64>,
}

impl Default for ScalingSection {
    fn default() -> Self {
        Self {
            generator: Generator::Markov { gamma: 100.0 },
            sizes: vec![34, 55, 89, 144, 233, 377, 610, 987, 1597, 2584, 4181],
            qs: vec![2.0],
            targets: Vec::new(),
        }
    }
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Figure preset the explicit sections were layered on.
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub lattice: Option<LatticeSpec>,
    #[serde(default)]
    pub spectrum: SpectrumSection,
    #[serde(default)]
    pub dynamics: DynamicsSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub scaling: ScalingSection,
    #[serde(default)]
    pub walk: WalkSection,
    #[serde(default)]
    pub liouvillian: LiouvillianSection,
}

impl ExperimentConfig {
    /// Parse TOML. A `preset` key starts from that figure preset and layers
    /// the remaining keys on top, table by table.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let preset = match user.get("preset") {
            None => None,
            Some(toml::Value::String(id)) => Some(id.clone()),
            Some(_) => return Err(Error::Config("`preset` must be a string".into())),
        };
        let merged = match preset {
            Some(id) => layer(&super::figure_preset(&id)?, user)?,
            None => user,
        };
        merged.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Preset `id` with the keys of `overrides` layered on top.
    pub fn with_overrides(id: &str, overrides: Option<&Path>) -> Result<Self> {
        match overrides {
            None => super::figure_preset(id),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                let user: toml::Table =
                    text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
                let mut merged = layer(&super::figure_preset(id)?, user)?;
                merged.insert("preset".into(), toml::Value::String(id.into()));
                merged.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
            }
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn lattice(&self) -> Result<&LatticeSpec> {
        self.lattice.as_ref().ok_or_else(|| Error::Config("missing [lattice] section".into()))
    }

    /// Expand every grid, check every section and return the result.
    pub fn resolved(&self) -> Result<Self> {
        let mut c = self.clone();
        c.sweep.kappas.resolve()?;
        c.walk.kappas.resolve()?;
        c.liouvillian.kappas.resolve()?;
        c.dynamics.times = TimeGrid::List(c.dynamics.times.values()?);
        if c.dynamics.regime == Regime::Ensemble {
            let dt = c.ensemble_dt()?;
            c.dynamics.dt = Some(dt);
            let snapped = c.dynamics.times.values()?.iter().map(|t| (t / dt).round() * dt).collect();
            c.dynamics.times = TimeGrid::List(snapped);
        }
        if let Some(l) = &c.lattice {
            l.validate()?;
            if c.dynamics.origin >= l.size {
                return Err(Error::Config(format!("origin {} outside lattice of {} sites", c.dynamics.origin, l.size)));
            }
        }
        if c.walk.origin >= c.walk.size {
            return Err(Error::Config(format!("walk origin {} outside {} sites", c.walk.origin, c.walk.size)));
        }
        for k in c.sweep.kappas.values()?.iter().chain(&c.sweep.panels) {
            check_kappa(*k)?;
        }
        for k in c.walk.kappas.values()?.iter().chain(&c.walk.panels).chain(std::iter::once(&c.walk.kappa)) {
            check_kappa(*k)?;
        }
        for k in c.liouvillian.kappas.values()? {
            check_kappa(k)?;
        }
        if c.liouvillian.gammas.is_empty() {
            return Err(Error::Config("liouvillian.gammas is empty".into()));
        }
        if c.scaling.qs.is_empty() {
            return Err(Error::Config("scaling.qs is empty".into()));
        }
        if !c.spectrum.q.contains(&2.0) {
            c.spectrum.q.insert(0, 2.0);
        }
        c.walk.steps()?;
        Ok(c)
    }

    fn ensemble_dt(&self) -> Result<f64> {
        let dt = self.dynamics.dt.unwrap_or(2.0 / self.dynamics.gamma);
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("randomization interval must be positive, got {dt}")));
        }
        Ok(dt)
    }
}

fn check_kappa(k: f64) -> Result<()> {
    if !(k > 0.0 && k <= 1.0) {
        return Err(Error::Config(format!("kappa = {k} outside (0, 1]")));
    }
    Ok(())
}

fn layer(base: &ExperimentConfig, user: toml::Table) -> Result<toml::Table> {
    let mut merged = toml::Table::try_from(base).map_err(|e| Error::Config(e.to_string()))?;
    // A new L without an explicit approximant takes the one matching L.
    if let Some(toml::Value::Table(l)) = user.get("lattice") {
        if l.contains_key("L") && !l.contains_key("alpha_index") {
            if let Some(toml::Value::Table(b)) = merged.get_mut("lattice") {
                b.remove("alpha_index");
            }
        }
    }
    merge(&mut merged, user);
    Ok(merged)
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
