//! Adaptive explicit Runge–Kutta integration (Dormand–Prince 5(4)).
//!
//! The heteroclinic shooting and the scaling-conjugacy checks need an embedded
//! pair with tight tolerances and step-level control, so the stepper exposes
//! both a one-shot [`integrate`] and a manual [`Dopri5`] loop that callers can
//! interleave with event detection.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("non-finite state encountered at t = {t}")]
    NonFinite { t: f64 },
    #[error("step size underflow at t = {t} (h = {h:.3e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("step budget of {max_steps} exhausted at t = {t}")]
    TooManySteps { t: f64, max_steps: usize },
}

#[derive(Debug, Clone)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-10,
            h_init: 1e-4,
            h_max: 1.0,
            max_steps: 20_000_000,
        }
    }
}

// Dormand–Prince coefficients.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 35.0 / 384.0 - 5179.0 / 57600.0;
const E3: f64 = 500.0 / 1113.0 - 7571.0 / 16695.0;
const E4: f64 = 125.0 / 192.0 - 393.0 / 640.0;
const E5: f64 = -2187.0 / 6784.0 + 92097.0 / 339200.0;
const E6: f64 = 11.0 / 84.0 - 187.0 / 2100.0;
const E7: f64 = -1.0 / 40.0;

#[inline]
fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] += h * acc;
    }
    out
}

/// One trial Dormand–Prince step. Returns the 5th-order solution, the embedded
/// error estimate per component, and the FSAL derivative at the endpoint.
pub fn dopri5_step<const N: usize, F>(
    rhs: &F,
    t: f64,
    y: &[f64; N],
    k1: &[f64; N],
    h: f64,
) -> ([f64; N], [f64; N], [f64; N])
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let k2 = rhs(t + h / 5.0, &axpy(y, h, &[(A21, k1)]));
    let k3 = rhs(t + 3.0 * h / 10.0, &axpy(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = rhs(
        t + 4.0 * h / 5.0,
        &axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]),
    );
    let k5 = rhs(
        t + 8.0 * h / 9.0,
        &axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    );
    let k6 = rhs(
        t + h,
        &axpy(
            y,
            h,
            &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        ),
    );
    let y_new = axpy(y, h, &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
    let k7 = rhs(t + h, &y_new);
    let mut err = [0.0; N];
    for i in 0..N {
        err[i] = h
            * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    (y_new, err, k7)
}

/// Manual adaptive stepper with FSAL reuse.
pub struct Dopri5<'a, F, const N: usize>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    rhs: &'a F,
    pub t: f64,
    pub y: [f64; N],
    h: f64,
    k1: [f64; N],
    opts: OdeOptions,
    steps: usize,
}

impl<'a, F, const N: usize> Dopri5<'a, F, N>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    pub fn new(rhs: &'a F, t0: f64, y0: [f64; N], opts: OdeOptions) -> Self {
        let k1 = rhs(t0, &y0);
        let h = opts.h_init.min(opts.h_max);
        Self {
            rhs,
            t: t0,
            y: y0,
            h,
            k1,
            opts,
            steps: 0,
        }
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Advance by one accepted step; returns the state before the step.
    pub fn step(&mut self) -> Result<(f64, [f64; N]), OdeError> {
        let (t_prev, y_prev) = (self.t, self.y);
        loop {
            self.steps += 1;
            if self.steps > self.opts.max_steps {
                return Err(OdeError::TooManySteps {
                    t: self.t,
                    max_steps: self.opts.max_steps,
                });
            }
            let (y_new, err, k7) = dopri5_step(self.rhs, self.t, &self.y, &self.k1, self.h);
            if !y_new.iter().all(|v| v.is_finite()) {
                self.h *= 0.25;
                if self.h < 1e-14 * (1.0 + self.t.abs()) {
                    return Err(OdeError::NonFinite { t: self.t });
                }
                continue;
            }
            let mut norm_sq = 0.0;
            for i in 0..N {
                let scale =
                    self.opts.atol + self.opts.rtol * self.y[i].abs().max(y_new[i].abs());
                let r = err[i] / scale;
                norm_sq += r * r;
            }
            let err_norm = (norm_sq / N as f64).sqrt();
            if err_norm <= 1.0 {
                self.t += self.h;
                self.y = y_new;
                self.k1 = k7;
                let factor = if err_norm == 0.0 {
                    5.0
                } else {
                    (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
                };
                self.h = (self.h * factor).min(self.opts.h_max);
                return Ok((t_prev, y_prev));
            }
            let factor = (0.9 * err_norm.powf(-0.2)).clamp(0.2, 1.0);
            self.h *= factor;
            if self.h < 1e-14 * (1.0 + self.t.abs()) {
                return Err(OdeError::StepUnderflow { t: self.t, h: self.h });
            }
        }
    }

    /// Restart the FSAL cache after the caller mutated `t` or `y`.
    pub fn reset_state(&mut self, t: f64, y: [f64; N]) {
        self.t = t;
        self.y = y;
        self.k1 = (self.rhs)(t, &y);
    }
}

/// Integrate from `t0` to `t1`, landing on `t1` exactly.
pub fn integrate<const N: usize, F>(
    rhs: &F,
    t0: f64,
    y0: [f64; N],
    t1: f64,
    opts: &OdeOptions,
) -> Result<[f64; N], OdeError>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let mut path_cb = |_t: f64, _y: &[f64; N]| {};
    integrate_observed(rhs, t0, y0, t1, opts, &mut path_cb)
}

/// Integrate to `t1`, invoking `observer` at every accepted step (including
/// the clipped final one).
pub fn integrate_observed<const N: usize, F, O>(
    rhs: &F,
    t0: f64,
    y0: [f64; N],
    t1: f64,
    opts: &OdeOptions,
    observer: &mut O,
) -> Result<[f64; N], OdeError>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
    O: FnMut(f64, &[f64; N]),
{
    assert!(t1 > t0, "integrate: t1 must exceed t0");
    let mut stepper = Dopri5::new(rhs, t0, y0, opts.clone());
    observer(t0, &y0);
    loop {
        let remaining = t1 - stepper.t;
        if remaining <= 1e-14 * (1.0 + t1.abs()) {
            return Ok(stepper.y);
        }
        if stepper.h > remaining {
            stepper.h = remaining;
        }
        stepper.step()?;
        observer(stepper.t, &stepper.y);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exponential_decay_matches_exact_solution() {
        let rhs = |_t: f64, y: &[f64; 1]| [-y[0]];
        let y = integrate(&rhs, 0.0, [1.0], 5.0, &OdeOptions::default()).unwrap();
        assert_relative_eq!(y[0], (-5.0f64).exp(), max_relative = 1e-8);
    }

    #[test]
    fn harmonic_oscillator_energy_is_preserved() {
        let rhs = |_t: f64, y: &[f64; 2]| [y[1], -y[0]];
        let y = integrate(&rhs, 0.0, [1.0, 0.0], 20.0 * std::f64::consts::PI, &OdeOptions::default())
            .unwrap();
        assert_relative_eq!(y[0], 1.0, epsilon = 1e-7);
        assert_relative_eq!(y[1], 0.0, epsilon = 1e-7);
    }

    #[test]
    fn observer_sees_monotone_times_ending_at_t1() {
        let rhs = |_t: f64, y: &[f64; 1]| [y[0]];
        let mut times = Vec::new();
        let mut obs = |t: f64, _y: &[f64; 1]| times.push(t);
        integrate_observed(&rhs, 0.0, [1.0], 1.0, &OdeOptions::default(), &mut obs).unwrap();
        assert!(times.windows(2).all(|w| w[1] > w[0]));
        assert_relative_eq!(*times.last().unwrap(), 1.0, epsilon = 1e-12);
    }
}
