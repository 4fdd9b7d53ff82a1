//! Assembly of the singular skeleton orbit: the δ = 0 concatenation of a
//! superslow segment, a slow segment, and the two fast heteroclinics, closing
//! a loop homoclinic to the desert base point (a, 0, 0, 0).

use super::shooting::{default_bracket, pi_heteroclinic, shoot_theta0, ShootConfig};
use super::{GsptError, LayerParams};
use crate::model::NondimParams;
use crate::tw::ScalingMap;

/// Which asymptotic scale a skeleton segment lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleTag {
    /// On the line {v = q = s = 0}, w running from a to 0.
    Superslow,
    /// On the fibre {v = q = 0, w = D s}, from the origin to p3(a, s*).
    Slow,
    /// The toxicity-plane heteroclinic p3(a, s*) → p2(a).
    Fast1,
    /// The {s = 0} front heteroclinic p2(a) → p1(a) at c = c*.
    Fast2,
}

impl ScaleTag {
    pub fn label(self) -> &'static str {
        match self {
            ScaleTag::Superslow => "superslow",
            ScaleTag::Slow => "slow",
            ScaleTag::Fast1 => "fast1",
            ScaleTag::Fast2 => "fast2",
        }
    }
}

/// A tagged polyline sampled in (w, v, q, s).
#[derive(Debug, Clone)]
pub struct SkeletonSegment {
    pub tag: ScaleTag,
    /// Per-point parameter: arclength surrogate for the reduced segments,
    /// fast time τ for the heteroclinics.
    pub param: Vec<f64>,
    pub points: Vec<[f64; 4]>,
}

/// The singular homoclinic skeleton with its characteristic constants.
#[derive(Debug, Clone)]
pub struct SingularSkeleton {
    pub segments: Vec<SkeletonSegment>,
    /// s* = a/D, the toxicity level of the departure equilibrium.
    pub s_star: f64,
    /// c* = (a·θ0)^{2/3}, the rescaled speed of the front connection.
    pub c_star: f64,
    pub theta0: f64,
}

impl SingularSkeleton {
    /// All points of all segments, in traversal order.
    pub fn all_points(&self) -> Vec<[f64; 4]> {
        self.segments
            .iter()
            .flat_map(|seg| seg.points.iter().copied())
            .collect()
    }

    /// Largest endpoint mismatch between consecutive segments (cyclically).
    pub fn max_junction_gap(&self) -> f64 {
        let mut gap = 0.0f64;
        let n = self.segments.len();
        for i in 0..n {
            let end = self.segments[i].points.last().unwrap();
            let start = self.segments[(i + 1) % n].points.first().unwrap();
            let d = end
                .iter()
                .zip(start)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            gap = gap.max(d);
        }
        gap
    }
}

/// Points sampled on each reduced (superslow/slow) segment.
const REDUCED_SAMPLES: usize = 200;

/// The scaling map consistent with its own front speed at finite ε: the base
/// level a = (1+δ)A feeds the front speed c = (a·θ0)^{2/3}, which feeds
/// δ = ε^{2/3}c. The contraction is O(δ), so a few sweeps converge to
/// machine precision. θ0 is w-independent and is shot once at w = A.
pub fn self_consistent_scaling(p: &NondimParams) -> Result<ScalingMap, GsptError> {
    let shot = shoot_theta0(p.a, default_bracket(p.a), &ShootConfig::default())?;
    let theta0 = shot.theta0;
    let mut c = shot.c_star;
    let mut m = ScalingMap::new(c, p.eps, p.a).expect("valid scaling");
    for _ in 0..6 {
        c = (m.a() * theta0).powf(2.0 / 3.0);
        m = ScalingMap::new(c, p.eps, p.a).expect("valid scaling");
    }
    Ok(m)
}

/// Build the singular skeleton for the given parameters. The base level is
/// a = (1+δ)A from the scaling map (δ = 0 in the singular limit); the front
/// speed c* and θ0 come from the planar shooting at w = a.
pub fn assemble_skeleton(
    p: &NondimParams,
    m: &ScalingMap,
) -> Result<SingularSkeleton, GsptError> {
    if !(p.h > 0.0) {
        return Err(GsptError::DegeneratePiPlane);
    }
    let a = m.a();
    let shot = shoot_theta0(a, default_bracket(a), &ShootConfig::default())?;
    let c_star = shot.c_star;
    let s_star = a / p.d;

    // (i) superslow: the line {v = q = s = 0} from p1(a) down to the origin.
    let mut superslow = SkeletonSegment {
        tag: ScaleTag::Superslow,
        param: Vec::with_capacity(REDUCED_SAMPLES + 1),
        points: Vec::with_capacity(REDUCED_SAMPLES + 1),
    };
    for i in 0..=REDUCED_SAMPLES {
        let w = a * (1.0 - i as f64 / REDUCED_SAMPLES as f64);
        superslow.param.push(a - w);
        superslow.points.push([w, 0.0, 0.0, 0.0]);
    }

    // (ii) slow: the fibre w = D s from the origin up to p3(a, s*).
    let mut slow = SkeletonSegment {
        tag: ScaleTag::Slow,
        param: Vec::with_capacity(REDUCED_SAMPLES + 1),
        points: Vec::with_capacity(REDUCED_SAMPLES + 1),
    };
    for i in 0..=REDUCED_SAMPLES {
        let s = s_star * i as f64 / REDUCED_SAMPLES as f64;
        slow.param.push(s);
        slow.points.push([p.d * s, 0.0, 0.0, s]);
    }

    // (iii) fast1: the Π-plane heteroclinic p3(a, s*) → p2(a).
    let lp = LayerParams::new(a, c_star, p.d, p.h)?;
    let pi_orbit = pi_heteroclinic(&lp)?;
    let fast1 = SkeletonSegment {
        tag: ScaleTag::Fast1,
        param: pi_orbit.iter().map(|(t, _)| *t).collect(),
        points: pi_orbit.iter().map(|(_, f)| f.as_array()).collect(),
    };

    // (iv) fast2: the {s = 0} front heteroclinic p2(a) → p1(a) at c = c*.
    let fast2 = SkeletonSegment {
        tag: ScaleTag::Fast2,
        param: shot.orbit.iter().map(|(t, _)| *t).collect(),
        points: shot.orbit.iter().map(|(_, f)| f.as_array()).collect(),
    };

    Ok(SingularSkeleton {
        segments: vec![superslow, slow, fast1, fast2],
        s_star,
        c_star,
        theta0: shot.theta0,
    })
}
