//! Reduced flow on the invariant hyperplane {v = q = 0} and its closed-form
//! solutions.
//!
//! In the slow variable σ the reduced system is linear,
//!
//! ```text
//! w_σ = s + δ/(1+δ) (w - D s - a),    D s_σ = s,
//! ```
//!
//! with explicit solutions w(σ) = a + c₁D e^{σ/D} + (c₂ - c₁D) e^{δσ/(1+δ)},
//! s(σ) = c₁ e^{σ/D}, the first-integral form w(s) = a + Ds + k₁(s(1+δ))^{δD/(1+δ)},
//! and the return-segment variant used near the re-entry section.

use super::GsptError;
use crate::ode::{integrate, OdeOptions};

/// Parameters of the reduced slow system.
#[derive(Debug, Clone, Copy)]
pub struct SlowFlow {
    /// Base-point water level a = (1+δ)A.
    pub a: f64,
    /// Toxicity time-scale ratio D.
    pub d: f64,
    /// The small parameter δ (zero in the singular limit).
    pub delta: f64,
}

/// One sample of the reduced slow trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlowSample {
    pub sigma: f64,
    pub w: f64,
    pub s: f64,
}

impl SlowFlow {
    #[inline]
    fn rate(&self) -> f64 {
        self.delta / (1.0 + self.delta)
    }

    /// Integration constants (c₁, c₂) matching an initial condition (w₀, s₀)
    /// at σ = σ₀.
    pub fn constants_from_ic(&self, sigma0: f64, w0: f64, s0: f64) -> (f64, f64) {
        let c1 = s0 * (-sigma0 / self.d).exp();
        // w0 = a + c1 D e^{σ0/D} + (c2 - c1 D) e^{δσ0/(1+δ)}
        let e_slow = (sigma0 / self.d).exp();
        let e_super = (self.rate() * sigma0).exp();
        let c2 = (w0 - self.a - c1 * self.d * e_slow) / e_super + c1 * self.d;
        (c1, c2)
    }

    /// Closed-form solution at σ.
    pub fn closed_form(&self, sigma: f64, c1: f64, c2: f64) -> (f64, f64) {
        let e_slow = (sigma / self.d).exp();
        let e_super = (self.rate() * sigma).exp();
        let s = c1 * e_slow;
        let w = self.a + c1 * self.d * e_slow + (c2 - c1 * self.d) * e_super;
        (w, s)
    }

    /// Right-hand side of the reduced system, for the ODE route.
    #[inline]
    pub fn rhs(&self, y: &[f64; 2]) -> [f64; 2] {
        let (w, s) = (y[0], y[1]);
        [s + self.rate() * (w - self.d * s - self.a), s / self.d]
    }
}

/// First-integral form w(s) = a + Ds + k₁ (s(1+δ))^{δD/(1+δ)}; requires s > 0.
pub fn slow_w_of_s(s: f64, k1: f64, flow: &SlowFlow) -> Result<f64, GsptError> {
    if !(s > 0.0) {
        return Err(GsptError::SlowFlowDomain { s });
    }
    let expo = flow.delta * flow.d / (1.0 + flow.delta);
    Ok(flow.a + flow.d * s + k1 * (s * (1.0 + flow.delta)).powf(expo))
}

/// Return-segment form w₃*(s) = a + Ds (1 - (s*_δ/s)^{1 - δD/(1+δ)}).
pub fn slow_return_w3(s: f64, s_star_delta: f64, flow: &SlowFlow) -> Result<f64, GsptError> {
    if !(s > 0.0) {
        return Err(GsptError::SlowFlowDomain { s });
    }
    let expo = 1.0 - flow.delta * flow.d / (1.0 + flow.delta);
    Ok(flow.a + flow.d * s * (1.0 - (s_star_delta / s).powf(expo)))
}

/// Sample the reduced slow trajectory through (w₀, s₀) at σ₀ on the given
/// σ-grid, via the closed form or by integrating the linear system.
pub fn slow_flow(
    sigma_grid: &[f64],
    ic: (f64, f64, f64),
    flow: &SlowFlow,
    closed_form: bool,
) -> Result<Vec<SlowSample>, GsptError> {
    let (sigma0, w0, s0) = ic;
    if closed_form {
        let (c1, c2) = flow.constants_from_ic(sigma0, w0, s0);
        return Ok(sigma_grid
            .iter()
            .map(|&sigma| {
                let (w, s) = flow.closed_form(sigma, c1, c2);
                SlowSample { sigma, w, s }
            })
            .collect());
    }
    let rhs = |_t: f64, y: &[f64; 2]| flow.rhs(y);
    let opts = OdeOptions {
        rtol: 1e-12,
        atol: 1e-12,
        h_max: 10.0,
        ..OdeOptions::default()
    };
    let mut out = Vec::with_capacity(sigma_grid.len());
    for &sigma in sigma_grid {
        // The grid is not assumed monotone; integrate each target from the IC.
        let y = if (sigma - sigma0).abs() < 1e-15 {
            [w0, s0]
        } else if sigma > sigma0 {
            integrate(&rhs, sigma0, [w0, s0], sigma, &opts)?
        } else {
            // Reverse time for targets before σ₀.
            let back = |_t: f64, y: &[f64; 2]| {
                let d = flow.rhs(y);
                [-d[0], -d[1]]
            };
            integrate(&back, -sigma0, [w0, s0], -sigma, &opts)?
        };
        out.push(SlowSample {
            sigma,
            w: y[0],
            s: y[1],
        });
    }
    Ok(out)
}
