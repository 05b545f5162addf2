//! The combined confidence-weighted objective.

use super::check_len;
use crate::error::{Error, Result};

/// `ℒ = (1/n)·Σᵢ σᵢ·ℓᵢ^DML + ω·ℓᵢ^SSL`.
///
/// σ is a constant for differentiation purposes: gradients flow through the
/// loss terms with per-sample weights σᵢ/n and ω/n respectively, never
/// through σ itself. The regularizer term is deliberately unscaled by σ.
pub fn procsim_objective(sigma: &[f64], dml: &[f64], ssl: &[f64], omega: f64) -> Result<f64> {
    let n = sigma.len();
    if n == 0 {
        return Err(Error::domain("procsim_objective: empty batch"));
    }
    check_len(dml, n, "procsim_objective dml")?;
    check_len(ssl, n, "procsim_objective ssl")?;
    if !(omega.is_finite() && omega >= 0.0) {
        return Err(Error::Domain(format!(
            "procsim_objective: omega must be nonnegative, got {omega}"
        )));
    }
    let total: f64 = sigma
        .iter()
        .zip(dml)
        .zip(ssl)
        .map(|((s, d), r)| s * d + omega * r)
        .sum();
    Ok(total / n as f64)
}
