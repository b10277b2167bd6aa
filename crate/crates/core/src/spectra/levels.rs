use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{fit_line, LineFit};

/// Minimum number of levels inside the window.
const MIN_LEVELS: usize = 50;
/// Points of the log-spaced grid used for the near-zero fit.
const FIT_POINTS: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStatistics {
    pub window: (f64, f64),
    pub level_count: usize,
    /// Normalized spacings `(E_{i+1} - E_i) / (W / N_E)` in ascending level order.
    pub spacings: Vec<f64>,
    pub cutoff: f64,
    /// `(s, ILSD(s))` at `s0` and just past each retained spacing.
    pub ilsd: Vec<(f64, f64)>,
    /// Log-log fit of ILSD over `[s0, 1e-2]`, when enough points are nonzero.
    pub fit: Option<LineFit>,
}

impl LevelStatistics {
    /// Fraction of spacings above the cutoff that exceed `s`.
    pub fn ilsd_at(&self, s: f64) -> f64 {
        let kept: Vec<f64> = self.retained();
        if kept.is_empty() {
            return 0.0;
        }
        let s = s.max(self.cutoff);
        let idx = kept.partition_point(|&x| x <= s);
        (kept.len() - idx) as f64 / kept.len() as f64
    }

    fn retained(&self) -> Vec<f64> {
        let mut kept: Vec<f64> = self.spacings.iter().copied().filter(|&s| s > self.cutoff).collect();
        kept.sort_by(f64::total_cmp);
        kept
    }

    /// Slope of `ln ILSD` against `ln s` on a log-spaced grid over `[lo, hi]`.
    pub fn fit_window(&self, lo: f64, hi: f64) -> Option<LineFit> {
        let kept = self.retained();
        if kept.is_empty() || !(lo > 0.0 && hi > lo) {
            return None;
        }
        let (ll, lh) = (lo.ln(), hi.ln());
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..FIT_POINTS {
            let x = ll + (lh - ll) * i as f64 / (FIT_POINTS - 1) as f64;
            let s = x.exp().max(self.cutoff);
            let idx = kept.partition_point(|&k| k <= s);
            let f = (kept.len() - idx) as f64 / kept.len() as f64;
            if f > 0.0 {
                xs.push(x);
                ys.push(f.ln());
            }
        }
        fit_line(&xs, &ys).ok()
    }
}

/// Spacing statistics of the levels inside `window = (e1, e2)`.
pub fn level_statistics(eigenvalues: &[f64], window: (f64, f64), cutoff: f64) -> Result<LevelStatistics> {
    level_statistics_fit(eigenvalues, window, cutoff, (cutoff, 1e-2))
}

/// As [`level_statistics`] with an explicit near-zero fit range.
pub fn level_statistics_fit(
    eigenvalues: &[f64],
    window: (f64, f64),
    cutoff: f64,
    fit_range: (f64, f64),
) -> Result<LevelStatistics> {
    let (e1, e2) = window;
    if !(e2 > e1) {
        return Err(Error::InvalidParameter(format!("empty level window ({e1}, {e2})")));
    }
    if !(cutoff > 0.0) {
        return Err(Error::InvalidParameter(format!("cutoff must be positive, got {cutoff}")));
    }
    let mut levels: Vec<f64> = eigenvalues.iter().copied().filter(|&e| e >= e1 && e <= e2).collect();
    if levels.is_empty() {
        return Err(Error::Empty("no levels inside the window"));
    }
    if levels.len() < MIN_LEVELS {
        return Err(Error::InvalidParameter(format!(
            "only {} levels in window, need at least {MIN_LEVELS}",
            levels.len()
        )));
    }
    levels.sort_by(f64::total_cmp);
    let n = levels.len();
    let mean = (e2 - e1) / n as f64;
    let spacings: Vec<f64> = levels.windows(2).map(|w| (w[1] - w[0]) / mean).collect();
    let mut stats = LevelStatistics {
        window,
        level_count: n,
        spacings,
        cutoff,
        ilsd: Vec::new(),
        fit: None,
    };
    let kept = stats.retained();
    let m = kept.len() as f64;
    stats.ilsd.push((cutoff, 1.0));
    for (i, &s) in kept.iter().enumerate() {
        stats.ilsd.push((s, (kept.len() - i - 1) as f64 / m));
    }
    stats.fit = stats.fit_window(fit_range.0, fit_range.1);
    Ok(stats)
}

/// Split a spectrum into `count` bands at its `count - 1` widest gaps, lowest band first.
pub fn pseudo_bands(eigenvalues: &[f64], count: usize) -> Result<Vec<(f64, f64)>> {
    if count == 0 || eigenvalues.len() < count {
        return Err(Error::InvalidParameter(format!(
            "cannot split {} levels into {count} bands",
            eigenvalues.len()
        )));
    }
    let mut e = eigenvalues.to_vec();
    e.sort_by(f64::total_cmp);
    let mut gaps: Vec<usize> = (1..e.len()).collect();
    gaps.sort_by(|&a, &b| (e[b] - e[b - 1]).total_cmp(&(e[a] - e[a - 1])).then(a.cmp(&b)));
    let mut cuts: Vec<usize> = gaps.into_iter().take(count - 1).collect();
    cuts.sort_unstable();
    let mut bands = Vec::with_capacity(count);
    let mut start = 0;
    for c in cuts.into_iter().chain(std::iter::once(e.len())) {
        bands.push((e[start], e[c - 1]));
        start = c;
    }
    Ok(bands)
}
