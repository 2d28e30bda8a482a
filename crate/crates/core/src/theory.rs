//! Closed-form tuning rules and bounds for DAT-SGD with linear weights.
//!
//! With `K = sqrt(5120) L` and `sigma_tilde^2 = 2 sigma^2 + zeta^2`, the
//! learning rate
//!
//! ```text
//! eta = min{ 1/(24 L T),  rho^2 / K,  D1 sqrt(M) / (sqrt(3) sigma T^{3/2}),
//!            sqrt(D1 / (2 K sigma_tilde)) rho / T }
//! ```
//!
//! guarantees
//!
//! ```text
//! E[f(xbar_T)] - f* <= 8 sqrt(3) D1 sigma / sqrt(M T)
//!                    + 8 sqrt(2) D1^{3/2} sqrt(K sigma_tilde) / (rho T)
//!                    + 96 L D1^2 / T
//!                    + 4 K D1^2 / (rho^2 T^2)
//! ```
//!
//! and, for any `eta <= rho^2 / (8 sqrt(80) L)` (note `8 sqrt(80) = sqrt(5120)`),
//! the query-point consensus distance stays below `2560 sigma_tilde^2 eta^2 / rho^4`.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::optim::Algorithm;

/// `K^2 / L^2`.
pub const K_SQUARED_OVER_L_SQUARED: f64 = 5120.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryInputs {
    /// Smoothness constant `L`.
    pub smoothness: f64,
    /// Number of rounds `T`.
    pub rounds: f64,
    /// Spectral gap `rho`.
    pub gap: f64,
    /// Machine count `M`.
    pub machines: f64,
    pub sigma: f64,
    pub zeta: f64,
    /// `D1 = ||w_1 - x*||`.
    pub initial_distance: f64,
}

impl TheoryInputs {
    /// `K = sqrt(5120) L`.
    pub fn k(&self) -> f64 {
        K_SQUARED_OVER_L_SQUARED.sqrt() * self.smoothness
    }

    /// `sigma_tilde = sqrt(2 sigma^2 + zeta^2)`.
    pub fn sigma_tilde(&self) -> f64 {
        sigma_tilde(self.sigma, self.zeta)
    }

    pub fn check(&self) -> Result<()> {
        let fields = [
            ("L", self.smoothness),
            ("T", self.rounds),
            ("rho", self.gap),
            ("M", self.machines),
            ("sigma", self.sigma),
            ("zeta", self.zeta),
            ("D1", self.initial_distance),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(param(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        if self.smoothness <= 0.0 {
            return Err(param(format!("L must be positive, got {}", self.smoothness)));
        }
        if self.initial_distance <= 0.0 {
            return Err(param(format!("D1 must be positive, got {}", self.initial_distance)));
        }
        if !(self.gap > 0.0 && self.gap <= 1.0) {
            return Err(param(format!("rho must lie in (0, 1], got {}", self.gap)));
        }
        if self.rounds < 1.0 {
            return Err(param(format!("T must be >= 1, got {}", self.rounds)));
        }
        if self.machines < 1.0 {
            return Err(param(format!("M must be >= 1, got {}", self.machines)));
        }
        Ok(())
    }
}

pub fn sigma_tilde(sigma: f64, zeta: f64) -> f64 {
    (2.0 * sigma * sigma + zeta * zeta).sqrt()
}

/// `a / b`, or `+inf` when `b == 0`.
fn ratio_or_inf(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        f64::INFINITY
    } else {
        a / b
    }
}

/// The four candidate rates, in order. Terms with a zero denominator are `+inf`.
pub fn learning_rate_terms(inputs: &TheoryInputs) -> Result<[f64; 4]> {
    inputs.check()?;
    let l = inputs.smoothness;
    let t = inputs.rounds;
    let rho = inputs.gap;
    let k = inputs.k();
    let d1 = inputs.initial_distance;
    let st = inputs.sigma_tilde();
    Ok([
        1.0 / (24.0 * l * t),
        rho * rho / k,
        ratio_or_inf(d1 * inputs.machines.sqrt(), 3f64.sqrt() * inputs.sigma * t.powf(1.5)),
        ratio_or_inf(d1, 2.0 * k * st).sqrt() * rho / t,
    ])
}

/// Minimum of [`learning_rate_terms`].
pub fn theoretical_lr(inputs: &TheoryInputs) -> Result<f64> {
    Ok(learning_rate_terms(inputs)?
        .into_iter()
        .fold(f64::INFINITY, f64::min))
}

/// Terms of the excess-loss bound, in order.
pub fn convergence_bound_terms(inputs: &TheoryInputs) -> Result<[f64; 4]> {
    inputs.check()?;
    let l = inputs.smoothness;
    let t = inputs.rounds;
    let rho = inputs.gap;
    let k = inputs.k();
    let d1 = inputs.initial_distance;
    Ok([
        8.0 * 3f64.sqrt() * d1 * inputs.sigma / (inputs.machines * t).sqrt(),
        8.0 * 2f64.sqrt() * d1.powf(1.5) * (k * inputs.sigma_tilde()).sqrt() / (rho * t),
        96.0 * l * d1 * d1 / t,
        4.0 * k * d1 * d1 / (rho * rho * t * t),
    ])
}

/// Upper bound on `E[f(xbar_T)] - f*`.
pub fn convergence_bound(inputs: &TheoryInputs) -> Result<f64> {
    Ok(convergence_bound_terms(inputs)?.iter().sum())
}

/// `2560 (2 sigma^2 + zeta^2) eta^2 / rho^4`.
pub fn gamma_bound(eta: f64, gap: f64, sigma: f64, zeta: f64) -> Result<f64> {
    if !(gap > 0.0 && gap <= 1.0) {
        return Err(param(format!("rho must lie in (0, 1], got {gap}")));
    }
    let st2 = 2.0 * sigma * sigma + zeta * zeta;
    Ok(2560.0 * st2 * eta * eta / gap.powi(4))
}

/// Largest learning rate for which [`gamma_bound`] applies: `rho^2 / (8 sqrt(80) L)`.
pub fn gamma_bound_threshold(gap: f64, smoothness: f64) -> f64 {
    gap * gap / (8.0 * 80f64.sqrt() * smoothness)
}

/// `5 (2 sigma^2 + zeta^2) + 10 L^2 Gamma`.
pub fn psi_bound(sigma: f64, zeta: f64, smoothness: f64, gamma: f64) -> f64 {
    5.0 * (2.0 * sigma * sigma + zeta * zeta) + 10.0 * smoothness * smoothness * gamma
}

/// Topology families with known parallelism bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyClass {
    Ring,
    Torus,
    NearComplete,
}

impl FromStr for TopologyClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ring" => Ok(TopologyClass::Ring),
            "torus" => Ok(TopologyClass::Torus),
            "near_complete" | "nc" => Ok(TopologyClass::NearComplete),
            other => Err(param(format!(
                "unknown topology class `{other}` (expected ring, torus or near_complete)"
            ))),
        }
    }
}

/// Largest machine count, as a function of the total sample count `N`, for
/// which adding machines does not slow the leading term (unit constants).
pub fn parallelism_bound(
    class: TopologyClass,
    algorithm: Algorithm,
    total_samples: f64,
    gap: f64,
) -> Result<f64> {
    if !(total_samples >= 1.0) {
        return Err(param(format!("N must be >= 1, got {total_samples}")));
    }
    let n = total_samples;
    Ok(match (class, algorithm) {
        (TopologyClass::Ring, Algorithm::Dsgd) => n.powf(1.0 / 8.0),
        (TopologyClass::Ring, Algorithm::Datsgd) => n.powf(1.0 / 6.0),
        (TopologyClass::Torus, Algorithm::Dsgd) => n.powf(1.0 / 6.0),
        (TopologyClass::Torus, Algorithm::Datsgd) => n.powf(1.0 / 4.0),
        (TopologyClass::NearComplete, Algorithm::Dsgd) => gap.sqrt() * n.powf(0.25),
        (TopologyClass::NearComplete, Algorithm::Datsgd) => gap * n.sqrt(),
    })
}

/// Rounds before the `sigma / sqrt(M T)` term dominates: `M / rho^2`.
pub fn transient_complexity(machines: f64, gap: f64) -> Result<f64> {
    if !(machines >= 1.0) {
        return Err(param(format!("M must be >= 1, got {machines}")));
    }
    if !(gap > 0.0 && gap <= 1.0) {
        return Err(param(format!("rho must lie in (0, 1], got {gap}")));
    }
    Ok(machines / (gap * gap))
}
