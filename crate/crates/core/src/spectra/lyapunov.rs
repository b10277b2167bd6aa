use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inverse localization length of one eigenstate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lyapunov {
    /// Difference of the two averages as computed; may dip slightly below 0.
    pub raw: f64,
    /// `max(raw, 0)`.
    pub value: f64,
}

/// Eigenvalues closer than this to `lambda_l` are left out of the log sum.
const COINCIDENT: f64 = 1e-14;

fn mean_log_hopping(hoppings: &[f64], size: usize) -> Result<f64> {
    if hoppings.len() != size - 1 {
        return Err(Error::InvalidParameter(format!(
            "open chain of {size} sites has {} bonds, got {}",
            size - 1,
            hoppings.len()
        )));
    }
    if hoppings.iter().any(|&w| w == 0.0 || !w.is_finite()) {
        return Err(Error::InvalidParameter("vanishing hopping breaks the chain".into()));
    }
    Ok(hoppings.iter().map(|w| w.abs().ln()).sum::<f64>() / (size - 1) as f64)
}

fn thouless(eigenvalues: &[f64], l: usize, mean_log_w: f64) -> Lyapunov {
    let lam = eigenvalues[l];
    let s: f64 = eigenvalues
        .iter()
        .enumerate()
        .filter(|&(n, &x)| n != l && (x - lam).abs() > COINCIDENT)
        .map(|(_, &x)| (x - lam).abs().ln())
        .sum();
    let raw = s / (eigenvalues.len() - 1) as f64 - mean_log_w;
    Lyapunov { raw, value: raw.max(0.0) }
}

/// Lyapunov exponent of state `l` of an open chain with nearest-neighbour
/// couplings `hoppings` (length `L - 1`), from the full spectrum.
pub fn lyapunov_exponent(eigenvalues: &[f64], hoppings: &[f64], l: usize) -> Result<Lyapunov> {
    let size = eigenvalues.len();
    if size < 2 {
        return Err(Error::Empty("Lyapunov exponent needs at least two levels"));
    }
    if l >= size {
        return Err(Error::InvalidParameter(format!("state index {l} out of range")));
    }
    Ok(thouless(eigenvalues, l, mean_log_hopping(hoppings, size)?))
}

/// [`lyapunov_exponent`] for every state.
pub fn lyapunov_exponents(eigenvalues: &[f64], hoppings: &[f64]) -> Result<Vec<Lyapunov>> {
    use rayon::prelude::*;
    let size = eigenvalues.len();
    if size < 2 {
        return Err(Error::Empty("Lyapunov exponent needs at least two levels"));
    }
    let w = mean_log_hopping(hoppings, size)?;
    Ok((0..size).into_par_iter().map(|l| thouless(eigenvalues, l, w)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_broken_chain() {
        assert!(lyapunov_exponent(&[0.0, 1.0, 2.0], &[1.0, 0.0], 0).is_err());
        assert!(lyapunov_exponent(&[0.0, 1.0, 2.0], &[1.0], 0).is_err());
    }

    #[test]
    fn dimer_value() {
        // Levels -J, +J with coupling J: log(2J)/1 - log(J) = log 2.
        let r = lyapunov_exponent(&[-0.5, 0.5], &[0.5], 0).unwrap();
        assert!((r.raw - 2f64.ln()).abs() < 1e-15);
    }
}
