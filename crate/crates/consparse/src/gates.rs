//! Hard-concrete gating for L0 sparsification.
//!
//! Every trainable parameter is reparameterized as θ = θ̄ ⊙ z. During
//! training z is a stretched-and-clamped binary-concrete sample driven by
//! uniform noise u, so the expected number of active gates is
//! differentiable; at test time z is deterministic and lands exactly on 0
//! or 1 once the gate logit saturates, which is what makes pruned
//! parameters exact zeros rather than small numbers.

use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid_f, Var};
use crate::{Error, Result};

/// Stretch/temperature constants of the hard-concrete distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateConstants {
    pub gamma: f64,
    pub zeta: f64,
    pub beta: f64,
}

impl Default for GateConstants {
    fn default() -> Self {
        Self {
            gamma: -0.1,
            zeta: 1.1,
            beta: 2.0 / 3.0,
        }
    }
}

impl GateConstants {
    /// The constant shift −β·ln(−γ/ζ) inside the expected-L0 penalty.
    pub fn penalty_shift(&self) -> f64 {
        -self.beta * (-self.gamma / self.zeta).ln()
    }
}

/// A trainable magnitude paired with its gate logit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GatedParam {
    pub theta_bar: f64,
    pub log_alpha: f64,
}

impl GatedParam {
    pub fn new(theta_bar: f64, log_alpha: f64) -> Self {
        Self {
            theta_bar,
            log_alpha,
        }
    }

    /// Deterministic test-time gate in [0, 1]; exactly 0 once
    /// sigmoid(log α) ≤ γ/(γ−ζ) and exactly 1 once sigmoid(log α) ≥
    /// (1−γ)/(ζ−γ).
    pub fn test_gate(&self, c: &GateConstants) -> f64 {
        (sigmoid_f(self.log_alpha) * (c.zeta - c.gamma) + c.gamma).clamp(0.0, 1.0)
    }

    /// Effective parameter after deterministic gating.
    pub fn effective(&self, c: &GateConstants) -> f64 {
        self.theta_bar * self.test_gate(c)
    }
}

/// Stochastic training-time gate, recorded on the tape so gradients reach
/// log α. `u` is the uniform noise for this step.
pub fn sample_gate<'t>(log_alpha: Var<'t>, u: f64, c: &GateConstants) -> Result<Var<'t>> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::InvalidNoise { u });
    }
    let noise_logit = u.ln() - (1.0 - u).ln();
    let s = ((log_alpha + noise_logit) * (1.0 / c.beta)).sigmoid()?;
    let stretched = s * (c.zeta - c.gamma) + c.gamma;
    stretched.clamp01()
}

/// Expected contribution of one gate to the L0 penalty,
/// sigmoid(log α − β ln(−γ/ζ)). Differentiable in log α.
pub fn expected_l0_penalty<'t>(log_alpha: Var<'t>, c: &GateConstants) -> Result<Var<'t>> {
    (log_alpha + c.penalty_shift()).sigmoid()
}

/// Number of parameters that survive deterministic gating: open gate and
/// nonzero effective value.
pub fn active_count(params: &[GatedParam], c: &GateConstants) -> usize {
    params
        .iter()
        .filter(|p| p.test_gate(c) > 0.0 && p.effective(c) != 0.0)
        .count()
}
