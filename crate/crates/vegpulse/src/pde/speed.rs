//! Wave-speed extraction from a sequence of snapshots by tracking the biomass
//! peak with sub-cell accuracy.

use super::{FieldState, Grid1D, SimError};

/// Result of the least-squares speed fit.
#[derive(Debug, Clone, Copy)]
pub struct SpeedEstimate {
    pub speed: f64,
    pub r2: f64,
    /// Time window actually used by the fit.
    pub window: (f64, f64),
    /// False when r² < 0.999: the pulse is not travelling at constant speed.
    pub constant_speed: bool,
}

/// Peak position by quadratic interpolation of log V around the argmax cell.
fn peak_position(state: &FieldState, grid: &Grid1D) -> Result<f64, SimError> {
    let n = state.v.len();
    let (i_max, &v_max) = state
        .v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .expect("nonempty field");
    if v_max < 1e-6 {
        return Err(SimError::PulseExtinct { max_v: v_max });
    }
    let im = (i_max + n - 1) % n;
    let ip = (i_max + 1) % n;
    let (lm, l0, lp) = (
        state.v[im].max(1e-300).ln(),
        v_max.ln(),
        state.v[ip].max(1e-300).ln(),
    );
    let denom = lm - 2.0 * l0 + lp;
    let frac = if denom.abs() > 1e-14 {
        (0.5 * (lm - lp) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    Ok(grid.x(i_max) + frac * grid.dx())
}

/// Track the (unwrapped, periodic) peak location over the snapshots and fit a
/// line over the requested window.
///
/// `window = None` discards the first 20% of the snapshots as transient.
pub fn estimate_wave_speed(
    snapshots: &[FieldState],
    grid: &Grid1D,
    window: Option<(f64, f64)>,
) -> Result<SpeedEstimate, SimError> {
    let l = grid.length();
    let mut track: Vec<(f64, f64)> = Vec::with_capacity(snapshots.len());
    let mut offset = 0.0;
    let mut prev: Option<f64> = None;
    for snap in snapshots {
        let raw = peak_position(snap, grid)?;
        if let Some(p) = prev {
            let prev_wrapped = p - offset;
            let mut delta = raw - prev_wrapped;
            // Unwrap: the peak cannot jump more than half the domain per
            // snapshot; a larger jump is a periodic wrap.
            if delta < -0.5 * l {
                delta += l;
            } else if delta > 0.5 * l {
                delta -= l;
            }
            offset = p + delta - raw;
        }
        let unwrapped = raw + offset;
        track.push((snap.t, unwrapped));
        prev = Some(unwrapped);
    }
    let (t0, t1) = window.unwrap_or_else(|| {
        let t_begin = track.first().map(|p| p.0).unwrap_or(0.0);
        let t_end = track.last().map(|p| p.0).unwrap_or(0.0);
        (t_begin + 0.2 * (t_end - t_begin), t_end)
    });
    let fit: Vec<(f64, f64)> = track
        .iter()
        .copied()
        .filter(|(t, _)| *t >= t0 - 1e-12 && *t <= t1 + 1e-12)
        .collect();
    if fit.len() < 10 {
        return Err(SimError::TooFewSnapshots(fit.len()));
    }
    let n = fit.len() as f64;
    let mean_t = fit.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_x = fit.iter().map(|p| p.1).sum::<f64>() / n;
    let mut stt = 0.0;
    let mut stx = 0.0;
    let mut sxx = 0.0;
    for (t, x) in &fit {
        stt += (t - mean_t) * (t - mean_t);
        stx += (t - mean_t) * (x - mean_x);
        sxx += (x - mean_x) * (x - mean_x);
    }
    let speed = stx / stt;
    let r2 = if sxx > 0.0 {
        (stx * stx) / (stt * sxx)
    } else {
        // A perfectly stationary track: the zero-slope fit is exact.
        1.0
    };
    Ok(SpeedEstimate {
        speed,
        r2,
        window: (t0, t1),
        constant_speed: r2 >= 0.999,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::Grid1D;

    fn gaussian_state(t: f64, center: f64, grid: &Grid1D) -> FieldState {
        let l = grid.length();
        let v = (0..grid.n_cells())
            .map(|i| {
                let mut dx = (grid.x(i) - center).abs();
                if dx > 0.5 * l {
                    dx = l - dx;
                }
                5.0 * (-dx * dx / 8.0).exp()
            })
            .collect();
        FieldState {
            t,
            u: vec![1.0; grid.n_cells()],
            v,
            s: vec![0.0; grid.n_cells()],
        }
    }

    #[test]
    fn frozen_profile_has_zero_speed() {
        let grid = Grid1D::new(100.0, 256).unwrap();
        let snaps: Vec<FieldState> = (0..20)
            .map(|k| gaussian_state(k as f64, 40.0, &grid))
            .collect();
        let est = estimate_wave_speed(&snaps, &grid, None).unwrap();
        assert!(est.speed.abs() < 1e-10, "speed {}", est.speed);
        assert!(est.constant_speed);
    }

    #[test]
    fn translating_profile_recovers_exact_speed_through_the_wrap() {
        let grid = Grid1D::new(100.0, 512).unwrap();
        let c = 3.2;
        let snaps: Vec<FieldState> = (0..40)
            .map(|k| {
                let t = k as f64 * 0.5;
                gaussian_state(t, (70.0 + c * t) % 100.0, &grid)
            })
            .collect();
        let est = estimate_wave_speed(&snaps, &grid, None).unwrap();
        assert!((est.speed - c).abs() < 1e-6, "speed {}", est.speed);
        assert!(est.r2 > 0.999999);
    }

    #[test]
    fn extinct_pulse_is_an_error() {
        let grid = Grid1D::new(100.0, 256).unwrap();
        let mut state = gaussian_state(0.0, 40.0, &grid);
        for v in &mut state.v {
            *v *= 1e-9;
        }
        let snaps = vec![state.clone(), state];
        assert!(matches!(
            estimate_wave_speed(&snaps, &grid, None),
            Err(SimError::PulseExtinct { .. })
        ));
    }

    #[test]
    fn accelerating_track_is_flagged_nonconstant() {
        let grid = Grid1D::new(100.0, 512).unwrap();
        let snaps: Vec<FieldState> = (0..40)
            .map(|k| {
                let t = k as f64 * 0.5;
                gaussian_state(t, (10.0 + 0.15 * t * t) % 100.0, &grid)
            })
            .collect();
        let est = estimate_wave_speed(&snaps, &grid, None).unwrap();
        assert!(!est.constant_speed, "r2 = {}", est.r2);
    }
}
