use super::*;
use crate::model::NondimParams;
use approx::assert_relative_eq;

fn fig4_params() -> NondimParams {
    NondimParams::new(1.2, 0.45, 4.5, 1.0, 0.005).unwrap()
}

fn desert_state(grid: &Grid1D, a: f64) -> FieldState {
    FieldState {
        t: 0.0,
        u: vec![a; grid.n_cells()],
        v: vec![0.0; grid.n_cells()],
        s: vec![0.0; grid.n_cells()],
    }
}

#[test]
fn grid_invariants() {
    assert!(Grid1D::new(1000.0, 8).is_err());
    assert!(Grid1D::new(-1.0, 64).is_err());
    let g = Grid1D::new(1000.0, 4096).unwrap();
    assert_eq!(g.length(), g.dx() * 4096.0);
}

#[test]
fn desert_is_a_fixed_point_of_one_step() {
    let p = fig4_params();
    let grid = Grid1D::new(100.0, 128).unwrap();
    let state = desert_state(&grid, p.a);
    let cfg = SimConfig {
        dt: Some(5e-4),
        ..SimConfig::default()
    };
    let next = step(&state, &p, &grid, &cfg).unwrap();
    for i in 0..grid.n_cells() {
        assert!((next.u[i] - p.a).abs() < 1e-14);
        assert!(next.v[i].abs() < 1e-14);
        assert!(next.s[i].abs() < 1e-14);
    }
}

#[test]
fn uniform_water_relaxes_like_the_exact_linear_solution() {
    // V ≡ 0 removes advection of a constant and all nonlinear terms:
    // U(t) = A + (U0 - A) e^{-t}.
    let p = fig4_params();
    let grid = Grid1D::new(50.0, 64).unwrap();
    let ic = InitialCondition {
        u0: 0.5,
        s0: 0.0,
        v0: V0Spec::Constant(0.0),
    };
    let cfg = SimConfig {
        dt: Some(1e-4),
        t_end: 1.0,
        output_every: 1.0,
        cfl_safety: 0.9,
    };
    let traj = simulate(&ic, &p, &grid, &cfg).unwrap();
    let exact = p.a + (0.5 - p.a) * (-1.0f64).exp();
    for &u in &traj.final_state().u {
        assert!((u - exact).abs() < 1e-6, "u = {u}, exact = {exact}");
    }
}

#[test]
fn cyclic_shift_commutes_with_stepping() {
    let p = fig4_params();
    let grid = Grid1D::new(100.0, 128).unwrap();
    let ic = InitialCondition {
        u0: 0.5,
        s0: 0.1,
        v0: V0Spec::GaussianPulse {
            center: 30.0,
            sigma: 2.0,
            amplitude: 3.0,
        },
    };
    let state = ic.build(&grid).unwrap();
    let k = 17usize;
    let shift = |data: &[f64]| -> Vec<f64> {
        let n = data.len();
        (0..n).map(|i| data[(i + n - k) % n]).collect()
    };
    let shifted = FieldState {
        t: 0.0,
        u: shift(&state.u),
        v: shift(&state.v),
        s: shift(&state.s),
    };
    let cfg = SimConfig {
        dt: Some(2e-4),
        ..SimConfig::default()
    };
    let mut a = state;
    let mut b = shifted;
    for _ in 0..50 {
        a = step(&a, &p, &grid, &cfg).unwrap();
        b = step(&b, &p, &grid, &cfg).unwrap();
    }
    let a_shifted = FieldState {
        t: a.t,
        u: shift(&a.u),
        v: shift(&a.v),
        s: shift(&a.s),
    };
    for i in 0..grid.n_cells() {
        assert!((a_shifted.u[i] - b.u[i]).abs() <= 1e-13);
        assert!((a_shifted.v[i] - b.v[i]).abs() <= 1e-13);
        assert!((a_shifted.s[i] - b.s[i]).abs() <= 1e-13);
    }
}

#[test]
fn zero_amplitude_pulse_converges_to_the_desert() {
    let p = fig4_params();
    let grid = Grid1D::new(50.0, 64).unwrap();
    let ic = InitialCondition {
        u0: 0.5,
        s0: 0.2,
        v0: V0Spec::GaussianPulse {
            center: 25.0,
            sigma: 1.0,
            amplitude: 0.0,
        },
    };
    // S decays at rate 1/D = 0.22, the slowest mode here; t = 120 brings the
    // 0.2 initial level below 1e-10.
    let cfg = SimConfig {
        t_end: 120.0,
        output_every: 120.0,
        ..SimConfig::default()
    };
    let traj = simulate(&ic, &p, &grid, &cfg).unwrap();
    let last = traj.final_state();
    for i in 0..grid.n_cells() {
        assert!((last.u[i] - p.a).abs() < 1e-10);
        assert!(last.v[i].abs() < 1e-12);
        assert!(last.s[i].abs() < 1e-10, "s = {:e}", last.s[i]);
    }
}

#[test]
fn cfl_violation_is_refused() {
    let p = fig4_params();
    let grid = Grid1D::new(1000.0, 4096).unwrap();
    let state = desert_state(&grid, p.a);
    let cfg = SimConfig {
        dt: Some(0.05),
        ..SimConfig::default()
    };
    assert!(matches!(
        step(&state, &p, &grid, &cfg),
        Err(SimError::CflViolation { .. })
    ));
}

#[test]
fn non_finite_fields_abort_with_diagnostic() {
    let p = fig4_params();
    let grid = Grid1D::new(100.0, 64).unwrap();
    let mut state = desert_state(&grid, p.a);
    state.u[10] = f64::NAN;
    let cfg = SimConfig {
        t_end: 1.0,
        ..SimConfig::default()
    };
    let err = simulate_from(state, &p, &grid, &cfg).unwrap_err();
    assert!(matches!(err, SimError::NonFinite { field: "U", .. }));
}

#[test]
fn parallel_and_sequential_rhs_agree_bitwise() {
    let p = fig4_params();
    let grid = Grid1D::new(100.0, 256).unwrap();
    let ic = InitialCondition {
        u0: 0.5,
        s0: 0.05,
        v0: V0Spec::GaussianPulse {
            center: 30.0,
            sigma: 2.0,
            amplitude: 4.0,
        },
    };
    let state = ic.build(&grid).unwrap();
    let n = grid.n_cells();
    let (mut du_a, mut dv_a, mut ds_a) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut du_b, mut dv_b, mut ds_b) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    rhs_into(&state.u, &state.v, &state.s, &p, &grid, &mut du_a, &mut dv_a, &mut ds_a);
    rhs_into_seq(&state.u, &state.v, &state.s, &p, &grid, &mut du_b, &mut dv_b, &mut ds_b);
    assert_eq!(du_a, du_b);
    assert_eq!(dv_a, dv_b);
    assert_eq!(ds_a, ds_b);
}

/// Two-component reference stepper (toxicity dropped), used as the oracle for
/// the H = 0 decoupling check. Same scheme, independently written update.
fn klausmeier_reference_step(
    u: &[f64],
    v: &[f64],
    p: &NondimParams,
    grid: &Grid1D,
    dt: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = grid.n_cells();
    let inv_eps_dx = 1.0 / (p.eps * grid.dx());
    let inv_dx2 = 1.0 / (grid.dx() * grid.dx());
    let rhs = |u: &[f64], v: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut du = vec![0.0; n];
        let mut dv = vec![0.0; n];
        for i in 0..n {
            let ip = (i + 1) % n;
            let im = (i + n - 1) % n;
            du[i] = p.a - u[i] - v[i] * v[i] * u[i] + (u[ip] - u[i]) * inv_eps_dx;
            dv[i] = v[i] * v[i] * u[i] - p.b * v[i] + (v[ip] - 2.0 * v[i] + v[im]) * inv_dx2;
        }
        (du, dv)
    };
    let stage = |u: &[f64], v: &[f64], du: &[f64], dv: &[f64]| -> (Vec<f64>, Vec<f64>) {
        (
            (0..n).map(|i| u[i] + dt * du[i]).collect(),
            (0..n).map(|i| v[i] + dt * dv[i]).collect(),
        )
    };
    let (du, dv) = rhs(u, v);
    let (u1, v1) = stage(u, v, &du, &dv);
    let (du1, dv1) = rhs(&u1, &v1);
    let (u1e, v1e) = stage(&u1, &v1, &du1, &dv1);
    let u2: Vec<f64> = (0..n).map(|i| 0.75 * u[i] + 0.25 * u1e[i]).collect();
    let v2: Vec<f64> = (0..n).map(|i| 0.75 * v[i] + 0.25 * v1e[i]).collect();
    let (du2, dv2) = rhs(&u2, &v2);
    let (u2e, v2e) = stage(&u2, &v2, &du2, &dv2);
    (
        (0..n).map(|i| u[i] / 3.0 + 2.0 / 3.0 * u2e[i]).collect(),
        (0..n).map(|i| v[i] / 3.0 + 2.0 / 3.0 * v2e[i]).collect(),
    )
}

#[test]
fn h_zero_decouples_the_uv_subsystem() {
    let p = NondimParams::new(1.2, 0.45, 4.5, 0.0, 0.005).unwrap();
    let grid = Grid1D::new(100.0, 512).unwrap();
    let ic = InitialCondition {
        u0: 0.5,
        s0: 0.0,
        v0: V0Spec::GaussianPulse {
            center: 30.0,
            sigma: 0.4,
            amplitude: 10.0,
        },
    };
    let state0 = ic.build(&grid).unwrap();
    let dt = 2e-4;
    let steps = 5000; // t = 1.0
    let cfg = SimConfig {
        dt: Some(dt),
        t_end: dt * steps as f64,
        output_every: dt * steps as f64,
        cfl_safety: 0.95,
    };
    let traj = simulate_from(state0.clone(), &p, &grid, &cfg).unwrap();
    let (mut u_ref, mut v_ref) = (state0.u.clone(), state0.v.clone());
    for _ in 0..steps {
        let (u_next, v_next) = klausmeier_reference_step(&u_ref, &v_ref, &p, &grid, dt);
        u_ref = u_next;
        v_ref = v_next;
    }
    let last = traj.final_state();
    for i in 0..grid.n_cells() {
        assert!(
            (last.u[i] - u_ref[i]).abs() < 1e-10,
            "U mismatch {:e} at cell {i}",
            (last.u[i] - u_ref[i]).abs()
        );
        assert!(
            (last.v[i] - v_ref[i]).abs() < 1e-10,
            "V mismatch {:e} at cell {i}",
            (last.v[i] - v_ref[i]).abs()
        );
    }
}

#[test]
fn snapshots_land_exactly_on_the_cadence() {
    let p = fig4_params();
    let grid = Grid1D::new(50.0, 64).unwrap();
    let ic = InitialCondition {
        u0: 0.4,
        s0: 0.0,
        v0: V0Spec::Constant(0.2),
    };
    let cfg = SimConfig {
        t_end: 2.0,
        output_every: 0.5,
        ..SimConfig::default()
    };
    let traj = simulate(&ic, &p, &grid, &cfg).unwrap();
    let times: Vec<f64> = traj.snapshots.iter().map(|s| s.t).collect();
    assert_eq!(times.len(), 5);
    for (k, t) in times.iter().enumerate() {
        assert_relative_eq!(*t, 0.5 * k as f64, epsilon = 1e-9);
    }
}
