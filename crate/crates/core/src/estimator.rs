//! Local target-velocity estimator driven by position measurements only.
//!
//! ```text
//! x̂' = −χ₁(x̂ − x_d) + v̂
//! v̂' = −χ₁χ₂(x̂ − x_d)
//! ```

use serde::{Deserialize, Serialize};

use crate::vector::VecN;

/// Fraction of ζ the velocity estimate is clamped to.
pub const CLAMP_FRACTION: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorState {
    pub x_hat: VecN,
    pub v_hat: VecN,
    pub chi1: f64,
    pub chi2: f64,
    /// Input limit the velocity estimate is kept strictly inside of.
    pub zeta: f64,
}

impl EstimatorState {
    /// Starts at the measured target position with zero velocity estimate.
    pub fn new(x_d: VecN, chi1: f64, chi2: f64, zeta: f64) -> Self {
        let n = x_d.dim();
        EstimatorState {
            x_hat: x_d,
            v_hat: VecN::zeros(n),
            chi1,
            chi2,
            zeta,
        }
    }

    /// Estimation error `(x̂ − x_d, v̂ − v_d)` stacked into one norm.
    pub fn error_norm(&self, x_d: &VecN, v_d: &VecN) -> f64 {
        let ex = &self.x_hat - x_d;
        let ev = &self.v_hat - v_d;
        (ex.dot(&ex) + ev.dot(&ev)).sqrt()
    }
}

/// One explicit-Euler step, then the componentwise clamp of `v̂`.
pub fn estimator_step(est: &EstimatorState, x_d_measured: &VecN, dt: f64) -> EstimatorState {
    let err = &est.x_hat - x_d_measured;
    let x_hat = est.x_hat.axpy(dt, &(&est.v_hat - &(&err * est.chi1)));
    let v_hat = est
        .v_hat
        .axpy(-dt * est.chi1 * est.chi2, &err)
        .clamp_inf(est.zeta * CLAMP_FRACTION);
    EstimatorState {
        x_hat,
        v_hat,
        ..est.clone()
    }
}

/// Whether `A = [[−χ₁, 1], [−χ₁χ₂, 0]]` is Hurwitz.
pub fn hurwitz_check(chi1: f64, chi2: f64) -> bool {
    chi1 > 0.0 && chi2 > 0.0
}
