//! Drift-parameter theory for the Subspace-CUSUM and its empirical calibration.

use crate::error::{Error, Result};

/// Admissible interval for the drift `d`: the increment has negative mean
/// before the change and positive (time-averaged) mean after it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftBounds {
    pub lower: f64,
    pub upper: f64,
    pub valid: bool,
}

impl DriftBounds {
    pub fn from_means(lower: f64, upper: f64) -> Self {
        Self {
            lower,
            upper,
            valid: upper > lower,
        }
    }

    pub fn midpoint(&self) -> Option<f64> {
        self.valid.then_some(0.5 * (self.lower + self.upper))
    }

    pub fn contains(&self, d: f64) -> bool {
        self.valid && self.lower < d && d < self.upper
    }
}

/// Expected squared estimation error of the unnormalized leading eigenvector,
/// `E‖v_t‖² ≈ (1+ρ)(k−1)/(wρ²)`.
pub fn eigvec_error_energy(rho: f64, k: usize, w: usize) -> f64 {
    (1.0 + rho) * (k as f64 - 1.0) / (w as f64 * rho * rho)
}

/// Pre-change mean of `(û_tᵀx̃_t)²`: the noise power.
pub fn prechange_mean(sigma2: f64) -> f64 {
    sigma2
}

/// Post-change mean of `(û_tᵀx̃_t)²` at a tick where `s²(t)/E₀ = energy_ratio`:
/// `σ²[1 + (s²(t)/E₀)·ρ(1 − (1+ρ)(k−1)/(wρ²))]`.
pub fn postchange_mean(sigma2: f64, rho: f64, k: usize, w: usize, energy_ratio: f64) -> f64 {
    sigma2 * (1.0 + energy_ratio * rho * (1.0 - eigvec_error_energy(rho, k, w)))
}

/// Closed-form drift interval `σ² < d < σ²[1 + ρ(1 − (1+ρ)(k−1)/(wρ²))]`.
pub fn drift_bounds(sigma2: f64, rho: f64, k: usize, w: usize) -> Result<DriftBounds> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::invalid(format!("sigma2 must be > 0, got {sigma2}")));
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::invalid(format!("rho must be > 0, got {rho}")));
    }
    if k < 2 || w < 1 {
        return Err(Error::invalid(format!("need k >= 2 and w >= 1, got k={k}, w={w}")));
    }
    let bracket = rho * (1.0 - eigvec_error_energy(rho, k, w));
    Ok(DriftBounds {
        lower: prechange_mean(sigma2),
        upper: postchange_mean(sigma2, rho, k, w, 1.0),
        valid: bracket > 0.0,
    })
}

/// Offset of the known-subspace CUSUM, `σ²(1 + 1/ρ) ln(1 + ρ)`.
pub fn known_subspace_offset(sigma2: f64, rho: f64) -> f64 {
    sigma2 * (1.0 + 1.0 / rho) * rho.ln_1p()
}

pub const DEFAULT_CALIBRATION_FACTOR: f64 = 1.5;

/// `factor × mean` of pre-change squared projections.
pub fn calibrate_drift(prechange: &[f64], factor: f64) -> Result<f64> {
    if prechange.is_empty() {
        return Err(Error::EmptyWindow);
    }
    if !(factor.is_finite() && factor > 0.0) {
        return Err(Error::invalid(format!("factor must be > 0, got {factor}")));
    }
    Ok(factor * prechange.iter().sum::<f64>() / prechange.len() as f64)
}
