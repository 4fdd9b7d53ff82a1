//! Comoving-frame travelling-wave ODEs and the asymptotic rescaling between
//! the physical variables (U, V, Q, S) and the fast variables (w, v, q, s).
//!
//! Three equivalent right-hand sides are kept around: the pre-scaling
//! first-order system in ξ ([`tw_rhs`]), and the rescaled fast system in τ in
//! its u-form ([`fast_rhs_u`]) and w-form ([`fast_rhs_w`]). The w-form is the
//! canonical integration target; the u-form exists for cross-checks and for
//! exporting U-profiles.

use crate::model::NondimParams;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TwError {
    #[error("wave speed and toxicity scale must satisfy C·D > 0 (C = {c_big}, D = {d})")]
    DegenerateSpeed { c_big: f64, d: f64 },
    #[error("scaling map requires eps > 0 and c > 0 (eps = {eps}, c = {c})")]
    InvalidScaling { eps: f64, c: f64 },
    #[error("fast point does not carry its u-coordinate")]
    MissingU,
    #[error("w-identity violated by {gap:.3e} (tolerance 1e-12)")]
    BrokenWIdentity { gap: f64 },
}

/// A point of the 4D comoving-frame phase space, with Q = V_ξ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwPoint {
    pub u: f64,
    pub v: f64,
    pub q: f64,
    pub s: f64,
}

impl TwPoint {
    pub fn new(u: f64, v: f64, q: f64, s: f64) -> Self {
        Self { u, v, q, s }
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite() && self.q.is_finite() && self.s.is_finite()
    }
}

/// A point of the rescaled fast phase space in w-coordinates, optionally
/// carrying the u-coordinate of the pre-w form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FastPoint {
    pub w: f64,
    pub v: f64,
    pub q: f64,
    pub s: f64,
    /// u-coordinate when both representations are populated; then
    /// w = (1+δ)u + q + v + D·s holds to 1e-12.
    pub alt_u: Option<f64>,
}

impl FastPoint {
    pub fn new(w: f64, v: f64, q: f64, s: f64) -> Self {
        Self {
            w,
            v,
            q,
            s,
            alt_u: None,
        }
    }

    /// Construct from the u-form coordinates, deriving w from the identity.
    pub fn from_u_form(u: f64, v: f64, q: f64, s: f64, m: &ScalingMap, d: f64) -> Self {
        Self {
            w: (1.0 + m.delta) * u + q + v + d * s,
            v,
            q,
            s,
            alt_u: Some(u),
        }
    }

    /// Check the w-identity when the u-coordinate is present.
    pub fn check_w_identity(&self, m: &ScalingMap, d: f64) -> Result<(), TwError> {
        if let Some(u) = self.alt_u {
            let gap = (self.w - ((1.0 + m.delta) * u + self.q + self.v + d * self.s)).abs();
            let scale = 1.0 + self.w.abs();
            if gap > 1e-12 * scale {
                return Err(TwError::BrokenWIdentity { gap });
            }
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.w, self.v, self.q, self.s]
    }
}

/// The asymptotic rescaling connecting (U, V, Q, S; ξ, C) to (u/w, v, q, s; τ, c).
///
/// Holds the rescaled speed c, the small parameters ε and δ = ε^{2/3}·c, and
/// the shifted precipitation a = (1+δ)·A. The identity chain δ = ε·C with
/// C = ε^{-1/3}·c is maintained by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingMap {
    c: f64,
    eps: f64,
    delta: f64,
    a: f64,
}

impl ScalingMap {
    /// Build from the rescaled speed c and ε > 0.
    pub fn new(c: f64, eps: f64, big_a: f64) -> Result<Self, TwError> {
        if !(eps > 0.0 && c > 0.0) {
            return Err(TwError::InvalidScaling { eps, c });
        }
        let delta = eps.powf(2.0 / 3.0) * c;
        Ok(Self {
            c,
            eps,
            delta,
            a: (1.0 + delta) * big_a,
        })
    }

    /// Build from the physical wave speed C = ε^{-1/3}·c.
    pub fn from_wave_speed(c_big: f64, eps: f64, big_a: f64) -> Result<Self, TwError> {
        if !(eps > 0.0 && c_big > 0.0) {
            return Err(TwError::InvalidScaling { eps, c: c_big });
        }
        Self::new(eps.powf(1.0 / 3.0) * c_big, eps, big_a)
    }

    /// The singular limit δ = 0 (so a = A) at a prescribed rescaled speed.
    pub fn singular_limit(c: f64, big_a: f64) -> Self {
        Self {
            c,
            eps: 0.0,
            delta: 0.0,
            a: big_a,
        }
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// a = (1+δ)·A, the base-point water level of the fast system.
    pub fn a(&self) -> f64 {
        self.a
    }

    /// Physical wave speed C = ε^{-1/3}·c. Undefined in the singular limit.
    pub fn wave_speed(&self) -> f64 {
        assert!(self.eps > 0.0, "wave speed undefined in the singular limit");
        self.eps.powf(-1.0 / 3.0) * self.c
    }

    /// ξ-length of one unit of fast time τ.
    pub fn xi_per_tau(&self) -> f64 {
        assert!(self.eps > 0.0, "xi scale undefined in the singular limit");
        self.c * self.c * self.eps.powf(1.0 / 3.0)
    }
}

/// Right-hand side of the first-order comoving-frame system in ξ.
///
/// The S-equation is solved for S_ξ, which divides by C·D.
pub fn tw_rhs(p: &TwPoint, pars: &NondimParams, c_big: f64) -> Result<TwPoint, TwError> {
    if !(c_big * pars.d > 0.0) {
        return Err(TwError::DegenerateSpeed {
            c_big,
            d: pars.d,
        });
    }
    Ok(tw_rhs_unchecked(p, pars, c_big))
}

/// As [`tw_rhs`] without the C·D guard, for hot loops that validated upfront.
#[inline]
pub fn tw_rhs_unchecked(p: &TwPoint, pars: &NondimParams, c_big: f64) -> TwPoint {
    let uv2 = p.u * p.v * p.v;
    let hsv = pars.h * p.s * p.v;
    TwPoint {
        u: pars.eps / (1.0 + pars.eps * c_big) * (p.u - pars.a + uv2),
        v: p.q,
        q: pars.b * p.v - uv2 + hsv - c_big * p.q,
        s: (p.s - pars.b * p.v - hsv) / (c_big * pars.d),
    }
}

/// Map a comoving-frame point to fast coordinates.
pub fn to_fast(p: &TwPoint, m: &ScalingMap, pars: &NondimParams) -> FastPoint {
    let scale = m.c * m.eps.powf(2.0 / 3.0);
    FastPoint::from_u_form(p.u, scale * p.v, m.eps * p.q, scale * p.s, m, pars.d)
}

/// Map a fast point back to comoving-frame coordinates. The u-coordinate is
/// taken from `alt_u` when present and recovered from the w-identity otherwise.
pub fn from_fast(f: &FastPoint, m: &ScalingMap, pars: &NondimParams) -> TwPoint {
    let scale = m.c * m.eps.powf(2.0 / 3.0);
    let u = f
        .alt_u
        .unwrap_or_else(|| (f.w - f.q - f.v - pars.d * f.s) / (1.0 + m.delta));
    TwPoint {
        u,
        v: f.v / scale,
        q: f.q / m.eps,
        s: f.s / scale,
    }
}

/// Right-hand side of the fast system in w-form (τ-derivatives).
#[inline]
pub fn fast_rhs_w(f: &FastPoint, pars: &NondimParams, m: &ScalingMap) -> FastPoint {
    let delta = m.delta;
    let a = m.a;
    let excess = f.w - f.q - f.v - pars.d * f.s;
    let c3 = m.c * m.c * m.c;
    let hsv = pars.h * f.s * f.v;
    FastPoint {
        w: delta * f.s + delta * delta / (1.0 + delta) * (excess - a),
        v: c3 * f.q,
        q: delta * pars.b * f.v - excess * f.v * f.v / (1.0 + delta) + hsv - c3 * f.q,
        s: (delta * f.s - delta * pars.b * f.v - hsv) / pars.d,
        alt_u: None,
    }
}

/// Right-hand side of the fast system in u-form; requires `alt_u`.
///
/// Returns the derivative with `alt_u = Some(du/dτ)` and the w-component set
/// to the chained derivative (1+δ)·u̇ + q̇ + v̇ + D·ṡ.
pub fn fast_rhs_u(f: &FastPoint, pars: &NondimParams, m: &ScalingMap) -> Result<FastPoint, TwError> {
    let u = f.alt_u.ok_or(TwError::MissingU)?;
    let delta = m.delta;
    let c3 = m.c * m.c * m.c;
    let uv2 = u * f.v * f.v;
    let hsv = pars.h * f.s * f.v;
    let du = (uv2 + delta * delta * (u - pars.a)) / (1.0 + delta);
    let dv = c3 * f.q;
    let dq = delta * pars.b * f.v - uv2 + hsv - c3 * f.q;
    let ds = (delta * f.s - delta * pars.b * f.v - hsv) / pars.d;
    Ok(FastPoint {
        w: (1.0 + delta) * du + dq + dv + pars.d * ds,
        v: dv,
        q: dq,
        s: ds,
        alt_u: Some(du),
    })
}
