//! Hausdorff distance between a computed orbit and the singular skeleton,
//! measured in (v, s, w)-space with each coordinate normalised by the
//! skeleton's range so the comparison is scale-free.

use super::SingularSkeleton;

/// Directed Hausdorff distance max_a min_b ‖a - b‖ over 3D point sets.
fn directed(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    let min_dist_sq = |pa: &[f64; 3]| {
        b.iter()
            .map(|pb| {
                let dx = pa[0] - pb[0];
                let dy = pa[1] - pb[1];
                let dz = pa[2] - pb[2];
                dx * dx + dy * dy + dz * dz
            })
            .fold(f64::INFINITY, f64::min)
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        a.par_iter().map(min_dist_sq).reduce(|| 0.0, f64::max).sqrt()
    }
    #[cfg(not(feature = "parallel"))]
    {
        a.iter().map(min_dist_sq).fold(0.0f64, f64::max).sqrt()
    }
}

/// Sequential twin of the symmetric Hausdorff distance, for benches and the
/// parallel-consistency tests.
pub fn hausdorff_distance_seq(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    let directed_seq = |xs: &[[f64; 3]], ys: &[[f64; 3]]| {
        xs.iter()
            .map(|pa| {
                ys.iter()
                    .map(|pb| {
                        let dx = pa[0] - pb[0];
                        let dy = pa[1] - pb[1];
                        let dz = pa[2] - pb[2];
                        dx * dx + dy * dy + dz * dz
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0f64, f64::max)
            .sqrt()
    };
    directed_seq(a, b).max(directed_seq(b, a))
}

/// Symmetric Hausdorff distance between two 3D point sets.
pub fn hausdorff_distance(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    directed(a, b).max(directed(b, a))
}

fn normalised_point_sets(
    orbit: &[[f64; 4]],
    sk: &SingularSkeleton,
) -> Option<(Vec<[f64; 3]>, Vec<[f64; 3]>)> {
    let sk_points = sk.all_points();
    if orbit.is_empty() || sk_points.is_empty() {
        return None;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    let project = |p: &[f64; 4]| [p[1], p[3], p[0]]; // (v, s, w)
    for p in &sk_points {
        let q = project(p);
        for i in 0..3 {
            lo[i] = lo[i].min(q[i]);
            hi[i] = hi[i].max(q[i]);
        }
    }
    let mut range = [0.0; 3];
    for i in 0..3 {
        range[i] = (hi[i] - lo[i]).max(1e-12);
    }
    let normalise = |p: &[f64; 4]| {
        let q = project(p);
        [q[0] / range[0], q[1] / range[1], q[2] / range[2]]
    };
    Some((
        orbit.iter().map(normalise).collect(),
        sk_points.iter().map(normalise).collect(),
    ))
}

/// Symmetric Hausdorff distance between a sampled 4D orbit (w, v, q, s) and
/// the skeleton, in (v, s, w)-space normalised by the skeleton's ranges.
pub fn skeleton_distance(orbit: &[[f64; 4]], sk: &SingularSkeleton) -> f64 {
    match normalised_point_sets(orbit, sk) {
        Some((a, b)) => hausdorff_distance(&a, &b),
        None => 0.0,
    }
}

/// Directed (orbit → skeleton) Hausdorff distance in the same normalisation:
/// how far the worst orbit point strays from the singular skeleton. The
/// perturbed orbit cuts the skeleton's corner at the origin by a margin of
/// order δ·log δ, so the symmetric distance is dominated by skeleton points
/// the orbit legitimately never visits; this one-sided distance is the
/// quantity that stays O(δ).
pub fn skeleton_distance_directed(orbit: &[[f64; 4]], sk: &SingularSkeleton) -> f64 {
    match normalised_point_sets(orbit, sk) {
        Some((a, b)) => directed(&a, &b),
        None => 0.0,
    }
}
