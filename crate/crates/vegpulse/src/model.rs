//! Model parameters, nondimensionalisation, pointwise kinetics and spatially
//! homogeneous equilibria of the water–biomass–toxicity system
//!
//! ```text
//! U_t = A - U - V²U + ε⁻¹ U_x
//! V_t = V²U - B V - H S V + V_xx
//! D S_t = B V + H S V - S
//! ```
//!
//! Everything here is a pure function over value types and safe to call from
//! any thread.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimensional parameter `{name}` must be strictly positive (got {value})")]
    NonPositiveParameter { name: &'static str, value: f64 },
    #[error("nondimensional parameter `{name}` out of range (got {value})")]
    InvalidNondim { name: &'static str, value: f64 },
}

/// Dimensional parameters of the water–biomass–toxicity model.
///
/// Units follow the conventional formulation: rates per day, densities in
/// kg/m², the biomass growth and water uptake rates in m⁴ d⁻¹ kg⁻².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionalParams {
    /// Growth rate of biomass due to water uptake (m⁴ d⁻¹ kg⁻²).
    pub c_growth: f64,
    /// Biomass death rate (d⁻¹).
    pub d_death: f64,
    /// Toxicity decay rate (d⁻¹).
    pub k_decay: f64,
    /// Water loss through evaporation or drainage (d⁻¹).
    pub l_loss: f64,
    /// Precipitation rate (kg d⁻¹ m⁻²).
    pub p_precip: f64,
    /// Proportion of toxins in dead biomass (dimensionless, may be zero).
    pub q_toxfrac: f64,
    /// Water uptake rate (m⁴ d⁻¹ kg⁻²).
    pub r_uptake: f64,
    /// Plant sensitivity to toxicity (m² d⁻¹ kg⁻¹, may be zero).
    pub s_sens: f64,
    /// Washout of toxins by precipitation (m² kg⁻¹, may be zero).
    pub w_washout: f64,
    /// Biomass diffusion coefficient (m² d⁻¹).
    pub diff_b: f64,
    /// Downhill water advection speed (m d⁻¹).
    pub nu_adv: f64,
}

impl DimensionalParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let strictly_positive = [
            ("c_growth", self.c_growth),
            ("d_death", self.d_death),
            ("k_decay", self.k_decay),
            ("l_loss", self.l_loss),
            ("p_precip", self.p_precip),
            ("r_uptake", self.r_uptake),
            ("diff_b", self.diff_b),
            ("nu_adv", self.nu_adv),
        ];
        for (name, value) in strictly_positive {
            if !(value > 0.0) {
                return Err(ModelError::NonPositiveParameter { name, value });
            }
        }
        for (name, value) in [
            ("q_toxfrac", self.q_toxfrac),
            ("s_sens", self.s_sens),
            ("w_washout", self.w_washout),
        ] {
            if !(value >= 0.0) {
                return Err(ModelError::NonPositiveParameter { name, value });
            }
        }
        Ok(())
    }
}

/// The five nondimensional parameters (A, B, D, H, ε).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NondimParams {
    /// Rescaled precipitation rate.
    pub a: f64,
    /// Biomass/water loss ratio.
    pub b: f64,
    /// Water/toxicity loss ratio (toxicity time-scale).
    pub d: f64,
    /// Toxicity sensitivity coupling (zero recovers the two-component model).
    pub h: f64,
    /// Ratio of biomass diffusion to water advection speed.
    pub eps: f64,
}

impl NondimParams {
    pub fn new(a: f64, b: f64, d: f64, h: f64, eps: f64) -> Result<Self, ModelError> {
        for (name, value) in [("A", a), ("B", b), ("D", d), ("eps", eps)] {
            if !(value > 0.0) {
                return Err(ModelError::InvalidNondim { name, value });
            }
        }
        if !(h >= 0.0) {
            return Err(ModelError::InvalidNondim { name: "H", value: h });
        }
        Ok(Self { a, b, d, h, eps })
    }

    /// Whether ε is small enough for the asymptotic analysis to be trusted.
    pub fn in_asymptotic_regime(&self) -> bool {
        self.eps < 0.1
    }
}

/// Multiplicative factors of the nondimensionalising substitution.
///
/// `x_scale`/`t_scale` convert metres and days to nondimensional space and
/// time; `u_scale`, `v_scale`, `s_scale` map the dimensional fields (W, B, T)
/// to (U, V, S).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleFactors {
    pub x_scale: f64,
    pub t_scale: f64,
    pub u_scale: f64,
    pub v_scale: f64,
    pub s_scale: f64,
}

/// Spatially homogeneous equilibria of the kinetics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibrium {
    pub u: f64,
    pub v: f64,
    pub s: f64,
}

/// The desert state plus (when they exist) the two vegetated states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumSet {
    /// (A, 0, 0); always present.
    pub desert: Equilibrium,
    pub vegetated_plus: Option<Equilibrium>,
    pub vegetated_minus: Option<Equilibrium>,
    /// Existence threshold 2B(H + √(1 + H²)); vegetated states require A above it.
    pub threshold: f64,
    /// Discriminant vanished to relative precision: the two roots coincide.
    pub tangent: bool,
    /// The S-component denominator 1 − H·V vanished; the state is reported
    /// as degenerate instead of returning an infinite toxicity value.
    pub degenerate_plus: bool,
    pub degenerate_minus: bool,
}

/// Relative tolerance used to classify the discriminant tangency and the
/// degenerate S-denominator.
const CLASSIFY_TOL: f64 = 1e-12;

/// Map dimensional parameters to (A, B, D, H, ε) and the field scale factors.
pub fn nondimensionalise(
    p: &DimensionalParams,
) -> Result<(NondimParams, ScaleFactors), ModelError> {
    p.validate()?;
    // The toxicity rescaling divides by q; a zero toxin fraction would make
    // the S-scale infinite. The Klausmeier limit is reachable via s_sens = 0.
    if !(p.q_toxfrac > 0.0) {
        return Err(ModelError::NonPositiveParameter {
            name: "q_toxfrac",
            value: p.q_toxfrac,
        });
    }
    let l = p.l_loss;
    let r = p.r_uptake;
    let k_eff = p.k_decay + p.p_precip * p.w_washout;
    let a = p.c_growth * p.p_precip / (l * (l * r).sqrt());
    let b = p.d_death / l;
    let d = l / k_eff;
    let h = p.s_sens * p.q_toxfrac * l.sqrt() / (k_eff * r.sqrt());
    let eps = (p.diff_b * l).sqrt() / p.nu_adv;
    let nd = NondimParams::new(a, b, d, h, eps)?;
    let scales = ScaleFactors {
        x_scale: (l / p.diff_b).sqrt(),
        t_scale: l,
        u_scale: p.c_growth / (l * r).sqrt(),
        v_scale: (r / l).sqrt(),
        s_scale: k_eff * r.sqrt() / (p.q_toxfrac * l * l.sqrt()),
    };
    Ok((nd, scales))
}

/// Reaction terms of the nondimensional system at a single point.
///
/// Returns (du, dv, ds) with the toxicity right side already divided by D.
/// Defined for all real inputs; callers enforce nonnegativity.
#[inline]
pub fn kinetics(u: f64, v: f64, s: f64, p: &NondimParams) -> [f64; 3] {
    let uptake = v * v * u;
    let toxloss = p.h * s * v;
    [
        p.a - u - uptake,
        uptake - p.b * v - toxloss,
        (p.b * v + toxloss - s) / p.d,
    ]
}

/// Spatially homogeneous equilibria for the given parameters.
pub fn equilibria(p: &NondimParams) -> EquilibriumSet {
    let threshold = 2.0 * p.b * (p.h + (1.0 + p.h * p.h).sqrt());
    let desert = Equilibrium {
        u: p.a,
        v: 0.0,
        s: 0.0,
    };
    let coeff = p.b + p.a * p.h;
    let disc = p.a * p.a - 4.0 * p.b * coeff;
    let disc_scale = (p.a * p.a).max(4.0 * p.b * coeff);
    let mut set = EquilibriumSet {
        desert,
        vegetated_plus: None,
        vegetated_minus: None,
        threshold,
        tangent: false,
        degenerate_plus: false,
        degenerate_minus: false,
    };
    if disc < -CLASSIFY_TOL * disc_scale {
        return set;
    }
    set.tangent = disc.abs() <= CLASSIFY_TOL * disc_scale;
    let root = disc.max(0.0).sqrt();
    let place = |v: f64, slot_state: &mut Option<Equilibrium>, degenerate: &mut bool| {
        let denom = 1.0 - p.h * v;
        if denom.abs() <= CLASSIFY_TOL * (1.0 + (p.h * v).abs()) {
            *degenerate = true;
            return;
        }
        *slot_state = Some(Equilibrium {
            u: p.a / (1.0 + v * v),
            v,
            s: p.b * v / denom,
        });
    };
    let v_plus = (p.a + root) / (2.0 * coeff);
    let v_minus = (p.a - root) / (2.0 * coeff);
    place(v_plus, &mut set.vegetated_plus, &mut set.degenerate_plus);
    place(v_minus, &mut set.vegetated_minus, &mut set.degenerate_minus);
    set
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reference_dimensional() -> DimensionalParams {
        DimensionalParams {
            c_growth: 1.0,
            d_death: 1.0,
            k_decay: 1.0,
            l_loss: 1.0,
            p_precip: 2.0,
            q_toxfrac: 1.0,
            r_uptake: 1.0,
            s_sens: 0.0,
            w_washout: 0.0,
            diff_b: 1.0,
            nu_adv: 200.0,
        }
    }

    fn fig4_params() -> NondimParams {
        NondimParams::new(1.2, 0.45, 4.5, 1.0, 0.005).unwrap()
    }

    #[test]
    fn nondimensionalise_hand_checked_values() {
        let (nd, scales) = nondimensionalise(&reference_dimensional()).unwrap();
        assert_relative_eq!(nd.a, 2.0, epsilon = 1e-15);
        assert_relative_eq!(nd.b, 1.0, epsilon = 1e-15);
        assert_relative_eq!(nd.d, 1.0, epsilon = 1e-15);
        assert_relative_eq!(nd.h, 0.0, epsilon = 1e-15);
        assert_relative_eq!(nd.eps, 0.005, epsilon = 1e-15);
        assert_relative_eq!(scales.x_scale, 1.0, epsilon = 1e-15);
        assert_relative_eq!(scales.t_scale, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_sensitivity_gives_zero_h() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let p = DimensionalParams {
                c_growth: rng.random_range(0.1..5.0),
                d_death: rng.random_range(0.1..5.0),
                k_decay: rng.random_range(0.1..5.0),
                l_loss: rng.random_range(0.1..5.0),
                p_precip: rng.random_range(0.1..5.0),
                q_toxfrac: rng.random_range(0.1..1.0),
                r_uptake: rng.random_range(0.1..5.0),
                s_sens: 0.0,
                w_washout: rng.random_range(0.0..2.0),
                diff_b: rng.random_range(0.1..5.0),
                nu_adv: rng.random_range(10.0..500.0),
            };
            let (nd, _) = nondimensionalise(&p).unwrap();
            assert_eq!(nd.h, 0.0);
        }
    }

    #[test]
    fn rejects_nonpositive_domain_parameters() {
        for field in ["l_loss", "r_uptake", "diff_b", "nu_adv", "q_toxfrac"] {
            let mut p = reference_dimensional();
            match field {
                "l_loss" => p.l_loss = 0.0,
                "r_uptake" => p.r_uptake = -1.0,
                "diff_b" => p.diff_b = 0.0,
                "nu_adv" => p.nu_adv = 0.0,
                "q_toxfrac" => p.q_toxfrac = 0.0,
                _ => unreachable!(),
            }
            assert!(nondimensionalise(&p).is_err(), "{field} should be rejected");
        }
    }

    /// Dimensional reaction terms, written directly from the dimensional
    /// model. This is the independent oracle for the rescaling algebra.
    fn dimensional_kinetics(w: f64, b: f64, t: f64, p: &DimensionalParams) -> [f64; 3] {
        [
            p.p_precip - p.r_uptake * b * b * w - p.l_loss * w,
            p.c_growth * b * b * w - (p.d_death + p.s_sens * t) * b,
            p.q_toxfrac * (p.d_death + p.s_sens * t) * b - (p.k_decay + p.w_washout * p.p_precip) * t,
        ]
    }

    #[test]
    fn equilibria_map_back_to_dimensional_steady_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut hits = 0;
        while hits < 100 {
            let p = DimensionalParams {
                c_growth: rng.random_range(0.2..3.0),
                d_death: rng.random_range(0.05..0.6),
                k_decay: rng.random_range(0.1..3.0),
                l_loss: rng.random_range(0.2..3.0),
                p_precip: rng.random_range(0.5..6.0),
                q_toxfrac: rng.random_range(0.1..1.0),
                r_uptake: rng.random_range(0.2..3.0),
                s_sens: rng.random_range(0.0..0.5),
                w_washout: rng.random_range(0.0..1.0),
                diff_b: rng.random_range(0.1..3.0),
                nu_adv: rng.random_range(20.0..400.0),
            };
            let (nd, scales) = nondimensionalise(&p).unwrap();
            let set = equilibria(&nd);
            let mut states = vec![set.desert];
            states.extend(set.vegetated_plus);
            states.extend(set.vegetated_minus);
            if states.len() < 3 {
                continue;
            }
            hits += 1;
            for eq in states {
                // Nondimensional kinetics vanish at the equilibrium...
                let kin = kinetics(eq.u, eq.v, eq.s, &nd);
                for r in kin {
                    assert!(r.abs() < 1e-12, "nondim residual {r:e}");
                }
                // ...and the inverse field scaling lands on a dimensional steady state.
                let (w, b, t) = (eq.u / scales.u_scale, eq.v / scales.v_scale, eq.s / scales.s_scale);
                let dim = dimensional_kinetics(w, b, t, &p);
                let scale = p.p_precip.max(1.0);
                for r in dim {
                    assert!(
                        r.abs() < 1e-10 * scale,
                        "dimensional residual {r:e} for {p:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn kinetics_vanish_at_desert() {
        let p = fig4_params();
        assert_eq!(kinetics(p.a, 0.0, 0.0, &p), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn kinetics_hand_substitution() {
        let p = fig4_params();
        let [du, dv, ds] = kinetics(1.0, 1.0, 0.0, &p);
        assert_relative_eq!(du, -0.8, epsilon = 1e-15);
        assert_relative_eq!(dv, 0.55, epsilon = 1e-15);
        assert_relative_eq!(ds, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn fig4_parameters_admit_only_the_desert_state() {
        // discriminant = 1.44 - 1.8 * 1.65 = -1.53 < 0
        let set = equilibria(&fig4_params());
        assert!(set.vegetated_plus.is_none());
        assert!(set.vegetated_minus.is_none());
        assert!(!set.tangent);
        assert_eq!(set.desert.u, 1.2);
    }

    #[test]
    fn vegetated_states_match_quadratic_formula_at_h_zero() {
        let p = NondimParams::new(2.0, 0.45, 1.0, 0.0, 0.005).unwrap();
        let set = equilibria(&p);
        let plus = set.vegetated_plus.unwrap();
        let minus = set.vegetated_minus.unwrap();
        assert_relative_eq!(plus.v, 4.20673, epsilon = 1e-5);
        assert_relative_eq!(minus.v, 0.23771, epsilon = 1e-5);
        assert_relative_eq!(plus.u, 0.10698, epsilon = 1e-5);
        assert_relative_eq!(plus.s, 0.45 * plus.v, epsilon = 1e-12);
        assert_relative_eq!(minus.s, 0.45 * minus.v, epsilon = 1e-12);
        assert_relative_eq!(set.threshold, 0.9, epsilon = 1e-12);
    }

    #[test]
    fn tangency_reported_as_boundary_case() {
        // H = 0, A = 2B: single degenerate root V = 1.
        let p = NondimParams::new(0.9, 0.45, 1.0, 0.0, 0.005).unwrap();
        let set = equilibria(&p);
        assert!(set.tangent);
        let plus = set.vegetated_plus.unwrap();
        let minus = set.vegetated_minus.unwrap();
        assert_relative_eq!(plus.v, 1.0, epsilon = 1e-7);
        assert_relative_eq!(minus.v, 1.0, epsilon = 1e-7);
    }

    #[test]
    fn equilibria_zero_the_kinetics() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let b = rng.random_range(0.05..1.5);
            let h = rng.random_range(0.0..3.0);
            let thr = 2.0 * b * (h + (1.0f64 + h * h).sqrt());
            let a = thr * rng.random_range(1.01..4.0);
            let p = NondimParams::new(a, b, rng.random_range(0.5..8.0), h, 0.01).unwrap();
            let set = equilibria(&p);
            for eq in [set.vegetated_plus, set.vegetated_minus].into_iter().flatten() {
                for r in kinetics(eq.u, eq.v, eq.s, &p) {
                    assert!(r.abs() < 1e-12, "residual {r:e} at A={a} B={b} H={h}");
                }
            }
        }
    }

    #[test]
    fn nonnegative_region_is_invariant() {
        let p = fig4_params();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let u = rng.random_range(0.0..5.0);
            let v = rng.random_range(0.0..5.0);
            let s = rng.random_range(0.0..5.0);
            let [_, dv0, _] = kinetics(u, 0.0, s, &p);
            assert_eq!(dv0, 0.0, "v = 0 must pin dv to zero");
            let [_, _, ds0] = kinetics(u, v, 0.0, &p);
            assert!(ds0 >= 0.0, "s = 0 must give ds >= 0");
            let [du0, _, _] = kinetics(0.0, v, s, &p);
            assert_eq!(du0, p.a, "u = 0 must give du = A");
        }
    }

    #[test]
    fn existence_boundary_is_located_by_bisection() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let b = rng.random_range(0.05..1.5);
            let h = rng.random_range(0.0..3.0);
            let formula = 2.0 * b * (h + (1.0f64 + h * h).sqrt());
            let exists = |a: f64| {
                let p = NondimParams::new(a, b, 1.0, h, 0.01).unwrap();
                equilibria(&p).vegetated_plus.is_some()
            };
            let (mut lo, mut hi) = (formula * 0.5, formula * 2.0);
            assert!(!exists(lo) && exists(hi));
            while hi - lo > 1e-9 {
                let mid = 0.5 * (lo + hi);
                if exists(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            assert!(
                (0.5 * (lo + hi) - formula).abs() < 1e-8,
                "boundary {} vs formula {formula}",
                0.5 * (lo + hi)
            );
        }
    }

    #[test]
    fn doubling_precipitation_doubles_a_only() {
        let p0 = reference_dimensional();
        let mut p1 = p0;
        p1.p_precip *= 2.0;
        let (nd0, _) = nondimensionalise(&p0).unwrap();
        let (nd1, _) = nondimensionalise(&p1).unwrap();
        assert_relative_eq!(nd1.a, 2.0 * nd0.a, epsilon = 1e-14);
        assert_relative_eq!(nd1.b, nd0.b, epsilon = 1e-15);
        assert_relative_eq!(nd1.eps, nd0.eps, epsilon = 1e-15);
    }
}
