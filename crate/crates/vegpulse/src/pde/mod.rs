//! Direct numerical integration of the nondimensional system on a periodic
//! 1D domain.
//!
//! Spatial discretisation: first-order upwind for the water advection term
//! ε⁻¹U_x (characteristic speed -ε⁻¹, so the stencil takes the right-hand
//! neighbour), second-order central differences for biomass diffusion, and
//! pointwise kinetics for the toxicity. Time stepping is explicit SSP-RK3 in
//! Shu–Osher form.
//!
//! The per-cell update reads only the previous stage, so the parallel and
//! sequential kernels produce bit-identical fields for any partition count.

mod speed;

pub use speed::{estimate_wave_speed, SpeedEstimate};

use crate::model::{kinetics, NondimParams};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("grid must have at least 16 cells (got {0})")]
    TooFewCells(usize),
    #[error("grid length must be positive (got {0})")]
    BadLength(f64),
    #[error("initial condition invalid: {0}")]
    BadInitialCondition(String),
    #[error(
        "time step {dt:.3e} violates the stability bound {bound:.3e} \
         (advection {adv:.3e}, diffusion {diff:.3e}, reaction {reac:.3e})"
    )]
    CflViolation {
        dt: f64,
        bound: f64,
        adv: f64,
        diff: f64,
        reac: f64,
    },
    #[error("non-finite {field} at t = {t}, cell {cell}")]
    NonFinite {
        field: &'static str,
        t: f64,
        cell: usize,
    },
    #[error("negative {field} = {value:.3e} at t = {t}, cell {cell}")]
    NegativeField {
        field: &'static str,
        value: f64,
        t: f64,
        cell: usize,
    },
    #[error("pulse extinct: max V = {max_v:.3e} below 1e-6")]
    PulseExtinct { max_v: f64 },
    #[error("speed fit needs at least 10 snapshots after the transient (got {0})")]
    TooFewSnapshots(usize),
}

/// Uniform periodic grid; the stored length is exactly dx·n_cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    n_cells: usize,
    dx: f64,
}

impl Grid1D {
    pub fn new(length: f64, n_cells: usize) -> Result<Self, SimError> {
        if n_cells < 16 {
            return Err(SimError::TooFewCells(n_cells));
        }
        if !(length > 0.0) {
            return Err(SimError::BadLength(length));
        }
        Ok(Self {
            n_cells,
            dx: length / n_cells as f64,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn length(&self) -> f64 {
        self.dx * self.n_cells as f64
    }

    /// Cell-centre coordinate.
    pub fn x(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }
}

/// Discretised (U, V, S) profiles at one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub t: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub s: Vec<f64>,
}

impl FieldState {
    pub fn n_cells(&self) -> usize {
        self.u.len()
    }

    pub fn max_v(&self) -> f64 {
        fold_max(&self.v)
    }

    pub fn max_s(&self) -> f64 {
        fold_max(&self.s)
    }

    fn validate(&self, n: usize) -> Result<(), SimError> {
        if self.u.len() != n || self.v.len() != n || self.s.len() != n {
            return Err(SimError::BadInitialCondition(format!(
                "field lengths ({}, {}, {}) do not match the grid ({n})",
                self.u.len(),
                self.v.len(),
                self.s.len()
            )));
        }
        Ok(())
    }

    fn check_finite_nonnegative(&self, assert_nonneg: bool) -> Result<(), SimError> {
        for (name, data) in [("U", &self.u), ("V", &self.v), ("S", &self.s)] {
            for (i, &val) in data.iter().enumerate() {
                if !val.is_finite() {
                    return Err(SimError::NonFinite {
                        field: name,
                        t: self.t,
                        cell: i,
                    });
                }
                if assert_nonneg && val < 0.0 {
                    return Err(SimError::NegativeField {
                        field: name,
                        value: val,
                        t: self.t,
                        cell: i,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Biomass initial data: constant or a Gaussian bump over a flat background.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum V0Spec {
    Constant(f64),
    GaussianPulse {
        center: f64,
        sigma: f64,
        amplitude: f64,
    },
}

/// Constant water and toxicity levels plus the biomass profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialCondition {
    pub u0: f64,
    pub s0: f64,
    pub v0: V0Spec,
}

impl InitialCondition {
    pub fn build(&self, grid: &Grid1D) -> Result<FieldState, SimError> {
        if let V0Spec::GaussianPulse {
            sigma, amplitude, ..
        } = self.v0
        {
            if !(sigma > 0.0) {
                return Err(SimError::BadInitialCondition(format!(
                    "gaussian sigma must be positive (got {sigma})"
                )));
            }
            if !(amplitude >= 0.0) {
                return Err(SimError::BadInitialCondition(format!(
                    "gaussian amplitude must be nonnegative (got {amplitude})"
                )));
            }
        }
        let n = grid.n_cells();
        let l = grid.length();
        let v = match self.v0 {
            V0Spec::Constant(c) => vec![c; n],
            V0Spec::GaussianPulse {
                center,
                sigma,
                amplitude,
            } => (0..n)
                .map(|i| {
                    // Periodic minimum-image distance to the pulse centre.
                    let mut dx = (grid.x(i) - center).abs();
                    if dx > 0.5 * l {
                        dx = l - dx;
                    }
                    amplitude * (-dx * dx / (2.0 * sigma * sigma)).exp()
                })
                .collect(),
        };
        Ok(FieldState {
            t: 0.0,
            u: vec![self.u0; n],
            v,
            s: vec![self.s0; n],
        })
    }
}

/// Time-stepping configuration. `dt = None` selects the largest stable step
/// at each stage of the run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub dt: Option<f64>,
    pub t_end: f64,
    pub output_every: f64,
    pub cfl_safety: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: None,
            t_end: 100.0,
            output_every: 2.0,
            cfl_safety: 0.9,
        }
    }
}

impl SimConfig {
    /// Scheme descriptor recorded in run metadata.
    pub fn scheme_description() -> &'static str {
        "advection: first-order upwind; diffusion: second-order central; time: explicit SSP-RK3"
    }
}

/// The three stability rates at a given state: advection ε⁻¹/dx, diffusion
/// 2/dx², and the stiffest pointwise reaction rate. The advection bound alone
/// (ε·dx) is not sufficient once the biomass peak grows: the U-equation decay
/// rate 1 + V² rivals ε⁻¹/dx there, so the usable step also caps the reaction
/// rates to keep forward-Euler stages positivity-preserving.
#[derive(Debug, Clone, Copy)]
pub struct StabilityRates {
    pub advection: f64,
    pub diffusion: f64,
    pub reaction: f64,
}

impl StabilityRates {
    pub fn at(state: &FieldState, p: &NondimParams, grid: &Grid1D) -> Self {
        let v_max = state.max_v();
        let s_max = state.max_s();
        let reaction_u = 1.0 + v_max * v_max;
        let reaction_v = p.b + p.h * s_max;
        let reaction_s = (p.h * v_max + 1.0) / p.d;
        Self {
            advection: 1.0 / (p.eps * grid.dx()),
            diffusion: 2.0 / (grid.dx() * grid.dx()),
            reaction: reaction_u.max(reaction_v).max(reaction_s),
        }
    }

    /// Largest step satisfying every forward-Euler positivity bound.
    pub fn dt_bound(&self) -> f64 {
        1.0 / (self.advection + self.reaction).max(self.diffusion + self.reaction)
    }
}

#[inline]
fn fold_max(data: &[f64]) -> f64 {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        data.par_iter().copied().reduce(|| f64::NEG_INFINITY, f64::max)
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Semi-discrete right-hand side into preallocated buffers. Sequential twin
/// of [`rhs_into`]; both produce bit-identical output.
pub fn rhs_into_seq(
    u: &[f64],
    v: &[f64],
    s: &[f64],
    p: &NondimParams,
    grid: &Grid1D,
    du: &mut [f64],
    dv: &mut [f64],
    ds: &mut [f64],
) {
    let n = grid.n_cells();
    let inv_eps_dx = 1.0 / (p.eps * grid.dx());
    let inv_dx2 = 1.0 / (grid.dx() * grid.dx());
    for i in 0..n {
        let (dui, dvi, dsi) = cell_rhs(u, v, s, p, n, inv_eps_dx, inv_dx2, i);
        du[i] = dui;
        dv[i] = dvi;
        ds[i] = dsi;
    }
}

/// Semi-discrete right-hand side into preallocated buffers (parallel when the
/// `parallel` feature is enabled).
pub fn rhs_into(
    u: &[f64],
    v: &[f64],
    s: &[f64],
    p: &NondimParams,
    grid: &Grid1D,
    du: &mut [f64],
    dv: &mut [f64],
    ds: &mut [f64],
) {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let n = grid.n_cells();
        let inv_eps_dx = 1.0 / (p.eps * grid.dx());
        let inv_dx2 = 1.0 / (grid.dx() * grid.dx());
        du.par_iter_mut()
            .zip(dv.par_iter_mut())
            .zip(ds.par_iter_mut())
            .enumerate()
            .for_each(|(i, ((dui, dvi), dsi))| {
                let (a, b, c) = cell_rhs(u, v, s, p, n, inv_eps_dx, inv_dx2, i);
                *dui = a;
                *dvi = b;
                *dsi = c;
            });
    }
    #[cfg(not(feature = "parallel"))]
    {
        rhs_into_seq(u, v, s, p, grid, du, dv, ds);
    }
}

#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn cell_rhs(
    u: &[f64],
    v: &[f64],
    s: &[f64],
    p: &NondimParams,
    n: usize,
    inv_eps_dx: f64,
    inv_dx2: f64,
    i: usize,
) -> (f64, f64, f64) {
    let ip = if i + 1 == n { 0 } else { i + 1 };
    let im = if i == 0 { n - 1 } else { i - 1 };
    let [ku, kv, ks] = kinetics(u[i], v[i], s[i], p);
    // +ε⁻¹U_x transports water downhill (-x): upwind uses the right neighbour.
    let adv = (u[ip] - u[i]) * inv_eps_dx;
    let diff = (v[ip] - 2.0 * v[i] + v[im]) * inv_dx2;
    (ku + adv, kv + diff, ks)
}

/// Scratch buffers reused across steps.
struct StageBuffers {
    du: Vec<f64>,
    dv: Vec<f64>,
    ds: Vec<f64>,
    u1: Vec<f64>,
    v1: Vec<f64>,
    s1: Vec<f64>,
}

impl StageBuffers {
    fn new(n: usize) -> Self {
        Self {
            du: vec![0.0; n],
            dv: vec![0.0; n],
            ds: vec![0.0; n],
            u1: vec![0.0; n],
            v1: vec![0.0; n],
            s1: vec![0.0; n],
        }
    }
}

#[inline]
fn euler_stage(out: &mut [f64], base: &[f64], deriv: &[f64], dt: f64) {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        out.par_iter_mut()
            .zip(base.par_iter().zip(deriv.par_iter()))
            .for_each(|(o, (b, d))| *o = b + dt * d);
    }
    #[cfg(not(feature = "parallel"))]
    {
        for i in 0..out.len() {
            out[i] = base[i] + dt * deriv[i];
        }
    }
}

#[inline]
fn blend_stage(out: &mut [f64], base: &[f64], wa: f64, wb: f64, deriv: &[f64], dt: f64) {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        out.par_iter_mut()
            .zip(base.par_iter().zip(deriv.par_iter()))
            .for_each(|(o, (b, d))| *o = wa * b + wb * (*o + dt * d));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for i in 0..out.len() {
            out[i] = wa * base[i] + wb * (out[i] + dt * deriv[i]);
        }
    }
}

fn ssp_rk3_step(
    state: &FieldState,
    p: &NondimParams,
    grid: &Grid1D,
    dt: f64,
    buf: &mut StageBuffers,
) -> FieldState {
    // Stage 1: y1 = y + dt L(y)
    rhs_into(&state.u, &state.v, &state.s, p, grid, &mut buf.du, &mut buf.dv, &mut buf.ds);
    euler_stage(&mut buf.u1, &state.u, &buf.du, dt);
    euler_stage(&mut buf.v1, &state.v, &buf.dv, dt);
    euler_stage(&mut buf.s1, &state.s, &buf.ds, dt);
    // Stage 2: y2 = 3/4 y + 1/4 (y1 + dt L(y1)), written into the y1 buffers.
    rhs_into(&buf.u1, &buf.v1, &buf.s1, p, grid, &mut buf.du, &mut buf.dv, &mut buf.ds);
    blend_stage(&mut buf.u1, &state.u, 0.75, 0.25, &buf.du, dt);
    blend_stage(&mut buf.v1, &state.v, 0.75, 0.25, &buf.dv, dt);
    blend_stage(&mut buf.s1, &state.s, 0.75, 0.25, &buf.ds, dt);
    // Stage 3: y = 1/3 y + 2/3 (y2 + dt L(y2)).
    rhs_into(&buf.u1, &buf.v1, &buf.s1, p, grid, &mut buf.du, &mut buf.dv, &mut buf.ds);
    let c13 = 1.0 / 3.0;
    let c23 = 2.0 / 3.0;
    blend_stage(&mut buf.u1, &state.u, c13, c23, &buf.du, dt);
    blend_stage(&mut buf.v1, &state.v, c13, c23, &buf.dv, dt);
    blend_stage(&mut buf.s1, &state.s, c13, c23, &buf.ds, dt);
    FieldState {
        t: state.t + dt,
        u: buf.u1.clone(),
        v: buf.v1.clone(),
        s: buf.s1.clone(),
    }
}

fn check_dt(dt: f64, rates: &StabilityRates, cfl_safety: f64) -> Result<(), SimError> {
    let bound = cfl_safety * rates.dt_bound();
    if dt > bound * (1.0 + 1e-12) {
        return Err(SimError::CflViolation {
            dt,
            bound,
            adv: rates.advection,
            diff: rates.diffusion,
            reac: rates.reaction,
        });
    }
    Ok(())
}

/// Advance the fields by one step of size `cfg.dt` (which must satisfy the
/// stability bound; no automatic reduction here).
pub fn step(
    state: &FieldState,
    p: &NondimParams,
    grid: &Grid1D,
    cfg: &SimConfig,
) -> Result<FieldState, SimError> {
    state.validate(grid.n_cells())?;
    let rates = StabilityRates::at(state, p, grid);
    let dt = cfg.dt.unwrap_or(cfg.cfl_safety * rates.dt_bound());
    check_dt(dt, &rates, cfg.cfl_safety)?;
    let mut buf = StageBuffers::new(grid.n_cells());
    let next = ssp_rk3_step(state, p, grid, dt, &mut buf);
    next.check_finite_nonnegative(false)?;
    Ok(next)
}

/// A completed run: snapshots at the requested cadence plus bookkeeping.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<FieldState>,
    pub total_steps: usize,
    pub wall_seconds: f64,
    pub dt_min: f64,
    pub dt_max: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> &FieldState {
        self.snapshots.last().expect("trajectory has snapshots")
    }
}

/// Run the simulation from the given initial condition, emitting snapshots
/// every `cfg.output_every` time units (snapshot times are hit exactly).
///
/// Nonnegativity of all fields is asserted at every accepted step; initial
/// data must be nonnegative.
pub fn simulate(
    ic: &InitialCondition,
    p: &NondimParams,
    grid: &Grid1D,
    cfg: &SimConfig,
) -> Result<Trajectory, SimError> {
    let state = ic.build(grid)?;
    simulate_from(state, p, grid, cfg)
}

/// As [`simulate`], starting from an explicit field state (t is reset to 0).
pub fn simulate_from(
    mut state: FieldState,
    p: &NondimParams,
    grid: &Grid1D,
    cfg: &SimConfig,
) -> Result<Trajectory, SimError> {
    state.validate(grid.n_cells())?;
    state.t = 0.0;
    state.check_finite_nonnegative(true)?;
    let start = Instant::now();
    let mut buf = StageBuffers::new(grid.n_cells());
    let mut snapshots = vec![state.clone()];
    let mut total_steps = 0usize;
    let mut dt_min = f64::INFINITY;
    let mut dt_max: f64 = 0.0;
    let mut next_output = cfg.output_every.min(cfg.t_end);
    // The stability rates drift slowly with the fields; refresh periodically.
    let mut rates = StabilityRates::at(&state, p, grid);
    let mut steps_since_rates = 0usize;
    while state.t < cfg.t_end - 1e-12 {
        if steps_since_rates >= 16 {
            rates = StabilityRates::at(&state, p, grid);
            steps_since_rates = 0;
        }
        let dt_stable = cfg.cfl_safety * rates.dt_bound();
        let mut dt = match cfg.dt {
            Some(fixed) => {
                check_dt(fixed, &rates, cfg.cfl_safety)?;
                fixed
            }
            None => dt_stable,
        };
        // Land exactly on the next snapshot time and on t_end.
        let t_target = next_output.min(cfg.t_end);
        if state.t + dt >= t_target - 1e-12 {
            dt = t_target - state.t;
        }
        state = ssp_rk3_step(&state, p, grid, dt, &mut buf);
        state.check_finite_nonnegative(true)?;
        total_steps += 1;
        steps_since_rates += 1;
        dt_min = dt_min.min(dt);
        dt_max = dt_max.max(dt);
        if (state.t - next_output).abs() < 1e-9 || state.t >= cfg.t_end - 1e-12 {
            snapshots.push(state.clone());
            while next_output <= state.t + 1e-9 {
                next_output += cfg.output_every;
            }
        }
    }
    Ok(Trajectory {
        snapshots,
        total_steps,
        wall_seconds: start.elapsed().as_secs_f64(),
        dt_min,
        dt_max,
    })
}

#[cfg(test)]
mod tests;
