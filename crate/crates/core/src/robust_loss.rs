//! Geman–McClure surrogate, its influence function, the soft inlier score,
//! and the anneal schedule arithmetic.
//!
//! All formulas consume the residual exactly as produced by the projection
//! module: the SQUARED pixel norm. The soft score divides `μ²` by
//! `r² + μ²`, so its denominator involves the fourth power of the pixel
//! error and `μ` carries units of squared pixels. Infinite residuals
//! saturate (surrogate 1, score 0) instead of raising.

use thiserror::Error;

use crate::projection::ResidualVector;

#[derive(Debug, Error)]
pub enum LossError {
    /// Residual or non-convexity value outside the admitted domain.
    #[error("domain error: {name} = {value} (require {requirement})")]
    Domain {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },
    /// Every residual was infinite, so no median exists.
    #[error("no finite residuals to seed the schedule")]
    NoFiniteResiduals,
}

fn check_domain(r: f64, mu: f64) -> Result<(), LossError> {
    if r < 0.0 || r.is_nan() {
        return Err(LossError::Domain {
            name: "r",
            value: r,
            requirement: "r >= 0",
        });
    }
    if mu <= 0.0 || mu.is_nan() {
        return Err(LossError::Domain {
            name: "mu",
            value: mu,
            requirement: "mu > 0",
        });
    }
    Ok(())
}

/// Surrogate loss `r / (r + μ)`, in [0, 1). Saturates to 1 at `r = +∞`.
pub fn gm_surrogate(r: f64, mu: f64) -> Result<f64, LossError> {
    check_domain(r, mu)?;
    if r.is_infinite() {
        return Ok(1.0);
    }
    Ok(r / (r + mu))
}

/// Influence `∂ρ/∂r = μ / (r + μ)²`. Vanishes at `r = +∞`.
pub fn gm_influence(r: f64, mu: f64) -> Result<f64, LossError> {
    check_domain(r, mu)?;
    if r.is_infinite() {
        return Ok(0.0);
    }
    let denom = r + mu;
    Ok(mu / (denom * denom))
}

/// Soft inlier score `μ² / (r² + μ²)`, in [0, 1]. Monotone non-increasing
/// in `r`, non-decreasing in `μ`; 0 at `r = +∞`.
pub fn gnc_score(r: f64, mu: f64) -> Result<f64, LossError> {
    check_domain(r, mu)?;
    if r.is_infinite() {
        return Ok(0.0);
    }
    let mu2 = mu * mu;
    Ok(mu2 / (r * r + mu2))
}

/// Schedule seed `κ · median(finite residuals) + ε`.
///
/// Infinite entries are excluded before taking the median; an even count
/// averages the two central order statistics.
pub fn initial_mu(residuals: &ResidualVector, kappa: f64, epsilon: f64) -> Result<f64, LossError> {
    if kappa <= 0.0 || kappa.is_nan() {
        return Err(LossError::Domain {
            name: "kappa",
            value: kappa,
            requirement: "kappa > 0",
        });
    }
    if epsilon < 0.0 || epsilon.is_nan() {
        return Err(LossError::Domain {
            name: "epsilon",
            value: epsilon,
            requirement: "epsilon >= 0",
        });
    }
    let mut finite: Vec<f64> = residuals.finite().collect();
    if finite.is_empty() {
        return Err(LossError::NoFiniteResiduals);
    }
    finite.sort_by(|a, b| a.partial_cmp(b).expect("finite residuals compare"));
    let n = finite.len();
    let median = if n % 2 == 1 {
        finite[n / 2]
    } else {
        0.5 * (finite[n / 2 - 1] + finite[n / 2])
    };
    Ok(kappa * median + epsilon)
}

/// One anneal step: `max(γ·μ, μ_final)`.
pub fn anneal_mu(mu: f64, gamma: f64, mu_final: f64) -> f64 {
    (gamma * mu).max(mu_final)
}

/// Non-convexity state carried across one run; `mu` never increases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GncState {
    pub mu: f64,
    pub iteration: usize,
}

impl GncState {
    pub fn new(mu: f64) -> Self {
        debug_assert!(mu > 0.0);
        Self { mu, iteration: 0 }
    }

    pub fn anneal(self, gamma: f64, mu_final: f64) -> Self {
        Self {
            mu: anneal_mu(self.mu, gamma, mu_final),
            iteration: self.iteration + 1,
        }
    }
}
