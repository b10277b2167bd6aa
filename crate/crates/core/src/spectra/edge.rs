use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateClass {
    Localized,
    Extended,
    /// Between the two thresholds.
    Critical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeThresholds {
    /// Localized iff `IPR > localized`.
    pub localized: f64,
    /// Extended iff `IPR < extended / L`.
    pub extended: f64,
    /// Largest misclassified fraction still reported as a clean edge.
    pub tolerance: f64,
}

impl Default for EdgeThresholds {
    fn default() -> Self {
        Self { localized: 0.1, extended: 10.0, tolerance: 0.02 }
    }
}

impl EdgeThresholds {
    pub fn classify(&self, ipr: f64, size: usize) -> StateClass {
        if ipr > self.localized {
            StateClass::Localized
        } else if ipr < self.extended / size as f64 {
            StateClass::Extended
        } else {
            StateClass::Critical
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalizedSide {
    /// Localized states sit below the edge.
    Below,
    Above,
    /// No localized states at all.
    NoneLocalized,
    /// No extended states at all.
    AllLocalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityEdgeReport {
    /// Midpoint of the separating gap; `None` when absent or not clean.
    pub edge: Option<f64>,
    pub localized_side: LocalizedSide,
    pub ipr_min: f64,
    pub ipr_max: f64,
    pub localized: usize,
    pub extended: usize,
    pub critical: usize,
    /// States on the wrong side of the best cut.
    pub misclassified: usize,
    /// Eigenvalue interval spanned by the misclassified states and the cut.
    pub crossing_band: Option<(f64, f64)>,
    pub notes: String,
}

/// Locate the eigenvalue separating localized from extended states.
///
/// `size` is the lattice size entering the extended threshold. The report
/// depends only on the multiset of `(eigenvalue, ipr)` pairs.
pub fn detect_mobility_edge(
    eigenvalues: &[f64],
    iprs: &[f64],
    size: usize,
    thresholds: &EdgeThresholds,
) -> Result<MobilityEdgeReport> {
    if eigenvalues.len() != iprs.len() {
        return Err(Error::InvalidParameter("eigenvalue and IPR counts differ".into()));
    }
    if eigenvalues.is_empty() {
        return Err(Error::Empty("mobility-edge detection needs at least one state"));
    }
    let mut states: Vec<(f64, f64)> = eigenvalues.iter().copied().zip(iprs.iter().copied()).collect();
    states.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let classes: Vec<StateClass> = states.iter().map(|s| thresholds.classify(s.1, size)).collect();
    let count = |c| classes.iter().filter(|&&x| x == c).count();
    let (localized, extended, critical) =
        (count(StateClass::Localized), count(StateClass::Extended), count(StateClass::Critical));
    let ipr_min = states.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let ipr_max = states.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let mut report = MobilityEdgeReport {
        edge: None,
        localized_side: LocalizedSide::NoneLocalized,
        ipr_min,
        ipr_max,
        localized,
        extended,
        critical,
        misclassified: 0,
        crossing_band: None,
        notes: String::new(),
    };
    if localized == 0 {
        report.notes = "no localized states".into();
        return Ok(report);
    }
    if extended == 0 {
        report.localized_side = LocalizedSide::AllLocalized;
        report.notes = "no extended states".into();
        return Ok(report);
    }

    // Prefix counts: cut k puts states 0..k below the edge.
    let n = states.len();
    let mut ext_below = vec![0usize; n + 1];
    let mut loc_below = vec![0usize; n + 1];
    for k in 0..n {
        ext_below[k + 1] = ext_below[k] + (classes[k] == StateClass::Extended) as usize;
        loc_below[k + 1] = loc_below[k] + (classes[k] == StateClass::Localized) as usize;
    }
    let mut best: Option<(usize, f64, usize, LocalizedSide)> = None;
    for k in 1..n {
        let gap = states[k].0 - states[k - 1].0;
        let below = ext_below[k] + (localized - loc_below[k]);
        let above = loc_below[k] + (extended - ext_below[k]);
        for (errors, side) in [(below, LocalizedSide::Below), (above, LocalizedSide::Above)] {
            let better = match best {
                None => true,
                Some((e, g, _, _)) => errors < e || (errors == e && gap > g),
            };
            if better {
                best = Some((errors, gap, k, side));
            }
        }
    }
    let (errors, _, k, side) = best.expect("at least one localized and one extended state");
    let edge = 0.5 * (states[k - 1].0 + states[k].0);
    report.localized_side = side;
    report.misclassified = errors;
    if errors > 0 {
        let wrong = |i: usize| {
            let below = i < k;
            match (side, classes[i]) {
                (LocalizedSide::Below, StateClass::Extended) => below,
                (LocalizedSide::Below, StateClass::Localized) => !below,
                (LocalizedSide::Above, StateClass::Extended) => !below,
                (LocalizedSide::Above, StateClass::Localized) => below,
                _ => false,
            }
        };
        let bad: Vec<f64> = (0..n).filter(|&i| wrong(i)).map(|i| states[i].0).collect();
        let lo = bad.iter().copied().fold(edge, f64::min);
        let hi = bad.iter().copied().fold(edge, f64::max);
        report.crossing_band = Some((lo, hi));
    }
    if errors as f64 <= thresholds.tolerance * n as f64 {
        report.edge = Some(edge);
        report.notes = format!("{errors} of {n} states on the wrong side of the edge");
    } else {
        report.notes = format!("no clean edge: {errors} of {n} states misclassified at the best cut");
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(n: usize, cut: f64, localized_below: bool) -> (Vec<f64>, Vec<f64>) {
        let lam: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let ipr = lam
            .iter()
            .map(|&x| if (x < cut) == localized_below { 0.5 } else { 1.0 / n as f64 })
            .collect();
        (lam, ipr)
    }

    #[test]
    fn clean_edges_both_orientations() {
        let (lam, ipr) = synthetic(200, 0.3, true);
        let r = detect_mobility_edge(&lam, &ipr, 200, &EdgeThresholds::default()).unwrap();
        assert_eq!(r.localized_side, LocalizedSide::Below);
        assert!((r.edge.unwrap() - 0.2975).abs() < 1e-12);
        assert_eq!(r.misclassified, 0);

        let (lam, ipr) = synthetic(200, 0.6, false);
        let r = detect_mobility_edge(&lam, &ipr, 200, &EdgeThresholds::default()).unwrap();
        assert_eq!(r.localized_side, LocalizedSide::Above);
        assert!((r.edge.unwrap() - 0.5975).abs() < 1e-12);
    }

    #[test]
    fn all_extended_has_no_edge() {
        let lam: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let ipr = vec![0.01; 100];
        let r = detect_mobility_edge(&lam, &ipr, 100, &EdgeThresholds::default()).unwrap();
        assert_eq!(r.edge, None);
        assert_eq!(r.localized_side, LocalizedSide::NoneLocalized);
    }

    #[test]
    fn interleaved_classes_are_not_clean() {
        let lam: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let ipr: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 0.5 } else { 0.01 }).collect();
        let r = detect_mobility_edge(&lam, &ipr, 100, &EdgeThresholds::default()).unwrap();
        assert_eq!(r.edge, None);
        assert!(r.crossing_band.is_some());
    }

    #[test]
    fn order_independent() {
        let (lam, ipr) = synthetic(50, 0.5, true);
        let a = detect_mobility_edge(&lam, &ipr, 50, &EdgeThresholds::default()).unwrap();
        let mut pairs: Vec<(f64, f64)> = lam.into_iter().zip(ipr).collect();
        pairs.reverse();
        pairs.swap(3, 40);
        let (l2, i2): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let b = detect_mobility_edge(&l2, &i2, 50, &EdgeThresholds::default()).unwrap();
        assert_eq!(a, b);
    }
}
