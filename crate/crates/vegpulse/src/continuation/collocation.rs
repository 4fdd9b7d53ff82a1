//! Gauss-collocation discretisation of the periodic comoving-frame boundary
//! value problem, with a bordered Newton solver.
//!
//! The linearised collocation system is condensed interval by interval: the
//! twelve interior node unknowns of each interval are eliminated locally
//! (Gauss–Jordan with row pivoting), which also folds their entries out of
//! the dense border rows (phase condition, pseudo-arclength). What remains
//! is a dense bordered system in the N+1 interval-boundary values plus the
//! free parameters, solved by LU with partial pivoting; interior unknowns
//! are then recovered by back-substitution. Pivoting stays global in the
//! condensed solve, which keeps the huge-domain periodic problem stable where
//! a banded one-sided elimination would blow up on its exponential dichotomy.

use super::mesh::{lagrange_value, Basis, NCOL, NDIM, NNODE};
use super::{ContParam, ContinuationError};
use crate::model::NondimParams;
use nalgebra::{DMatrix, DVector};

/// Mesh + basis: everything needed to evaluate the piecewise-polynomial
/// representation.
#[derive(Debug, Clone)]
pub struct Discretisation {
    pub basis: Basis,
    /// Interval breakpoints, breaks[0] = 0 and breaks[N] = L.
    pub breaks: Vec<f64>,
}

impl Discretisation {
    pub fn new(breaks: Vec<f64>) -> Self {
        assert!(breaks.len() >= 5, "need at least 4 mesh intervals");
        assert!(breaks.windows(2).all(|w| w[1] > w[0]));
        Self {
            basis: Basis::new(),
            breaks,
        }
    }

    pub fn n_intervals(&self) -> usize {
        self.breaks.len() - 1
    }

    pub fn n_nodes(&self) -> usize {
        self.n_intervals() * NCOL + 1
    }

    pub fn nx(&self) -> usize {
        NDIM * self.n_nodes()
    }

    pub fn length(&self) -> f64 {
        *self.breaks.last().unwrap()
    }

    pub fn h(&self, j: usize) -> f64 {
        self.breaks[j + 1] - self.breaks[j]
    }

    /// ξ-coordinate of global representation node k.
    pub fn node_xi(&self, k: usize) -> f64 {
        let j = (k / NCOL).min(self.n_intervals() - 1);
        let i = k - j * NCOL;
        self.breaks[j] + self.h(j) * i as f64 / NCOL as f64
    }

    /// Locate the interval containing ξ (ξ must lie in [0, L]).
    fn locate(&self, xi: f64) -> usize {
        let n = self.n_intervals();
        match self
            .breaks
            .binary_search_by(|b| b.partial_cmp(&xi).unwrap())
        {
            Ok(j) => j.min(n - 1),
            Err(j) => j.saturating_sub(1).min(n - 1),
        }
    }

    /// Evaluate the represented profile at ξ.
    pub fn eval(&self, nodes: &[f64], xi: f64) -> [f64; NDIM] {
        let j = self.locate(xi);
        let rho = (xi - self.breaks[j]) / self.h(j);
        let base = NDIM * NCOL * j;
        let mut out = [0.0; NDIM];
        for i in 0..NNODE {
            let w = lagrange_value(i, rho);
            for (c, item) in out.iter_mut().enumerate() {
                *item += w * nodes[base + NDIM * i + c];
            }
        }
        out
    }

    /// Resample a profile represented on `other` onto this mesh's nodes.
    pub fn resample_nodes(&self, other: &Discretisation, other_nodes: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nx()];
        for k in 0..self.n_nodes() {
            let xi = self.node_xi(k).min(other.length());
            let y = other.eval(other_nodes, xi);
            out[NDIM * k..NDIM * k + NDIM].copy_from_slice(&y);
        }
        out
    }

    /// Dense samples (ξ, state) with `per_interval` points per interval plus
    /// the final break.
    pub fn sample(&self, nodes: &[f64], per_interval: usize) -> Vec<(f64, [f64; NDIM])> {
        let n = self.n_intervals();
        let mut out = Vec::with_capacity(n * per_interval + 1);
        for j in 0..n {
            for k in 0..per_interval {
                let rho = k as f64 / per_interval as f64;
                let xi = self.breaks[j] + rho * self.h(j);
                out.push((xi, self.eval(nodes, xi)));
            }
        }
        out.push((self.length(), self.eval(nodes, self.length())));
        out
    }
}

/// The comoving-frame vector field and its derivatives, with the continued
/// parameter wired through. `kappa` is the ε/(1+εC) advection factor.
pub struct TwSystem {
    pub pars: NondimParams,
    pub c_big: f64,
    pub continued: Option<ContParam>,
}

impl TwSystem {
    #[inline]
    fn kappa(&self) -> f64 {
        self.pars.eps / (1.0 + self.pars.eps * self.c_big)
    }

    #[inline]
    pub fn f(&self, y: &[f64; 4]) -> [f64; 4] {
        let p = &self.pars;
        let c = self.c_big;
        let uv2 = y[0] * y[1] * y[1];
        let hsv = p.h * y[3] * y[1];
        [
            self.kappa() * (y[0] - p.a + uv2),
            y[2],
            p.b * y[1] - uv2 + hsv - c * y[2],
            (y[3] - p.b * y[1] - hsv) / (c * p.d),
        ]
    }

    /// 4x4 state Jacobian.
    #[inline]
    pub fn df_dy(&self, y: &[f64; 4]) -> [[f64; 4]; 4] {
        let p = &self.pars;
        let c = self.c_big;
        let k = self.kappa();
        let (u, v, s) = (y[0], y[1], y[3]);
        [
            [k * (1.0 + v * v), k * 2.0 * u * v, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [-v * v, p.b - 2.0 * u * v + p.h * s, -c, p.h * v],
            [
                0.0,
                (-p.b - p.h * s) / (c * p.d),
                0.0,
                (1.0 - p.h * v) / (c * p.d),
            ],
        ]
    }

    /// Derivative with respect to the wave speed C.
    #[inline]
    pub fn df_dc(&self, y: &[f64; 4]) -> [f64; 4] {
        let p = &self.pars;
        let c = self.c_big;
        let denom = 1.0 + p.eps * c;
        let dkappa = -p.eps * p.eps / (denom * denom);
        let uv2 = y[0] * y[1] * y[1];
        let hsv = p.h * y[3] * y[1];
        [
            dkappa * (y[0] - p.a + uv2),
            0.0,
            -y[2],
            -(y[3] - p.b * y[1] - hsv) / (c * c * p.d),
        ]
    }

    /// Derivative with respect to the continued parameter (zero when frozen).
    #[inline]
    pub fn df_dlambda(&self, y: &[f64; 4]) -> [f64; 4] {
        let p = &self.pars;
        let c = self.c_big;
        match self.continued {
            None => [0.0; 4],
            Some(ContParam::A) => [-self.kappa(), 0.0, 0.0, 0.0],
            Some(ContParam::H) => {
                let sv = y[3] * y[1];
                [0.0, 0.0, sv, -sv / (c * p.d)]
            }
            Some(ContParam::D) => {
                let hsv = p.h * y[3] * y[1];
                [0.0, 0.0, 0.0, -(y[3] - p.b * y[1] - hsv) / (c * p.d * p.d)]
            }
            Some(ContParam::Eps) => {
                let denom = 1.0 + p.eps * c;
                let dkappa = 1.0 / (denom * denom);
                let uv2 = y[0] * y[1] * y[1];
                [dkappa * (y[0] - p.a + uv2), 0.0, 0.0, 0.0]
            }
        }
    }
}

/// Integral phase condition against the ξ-derivative of a reference profile:
/// ∫ ⟨y(ξ), ref'(ξ)⟩ dξ = ∫ ⟨ref(ξ), ref'(ξ)⟩ dξ.
pub(crate) struct PhaseRef {
    /// Reference derivative at each Gauss point of each interval.
    pub dref: Vec<[f64; NDIM]>,
    /// Right-hand constant ∫ ⟨ref, ref'⟩.
    pub constant: f64,
}

impl PhaseRef {
    pub fn build(disc: &Discretisation, ref_nodes: &[f64]) -> Self {
        let n = disc.n_intervals();
        let basis = &disc.basis;
        let mut dref = vec![[0.0; NDIM]; n * NCOL];
        let mut constant = 0.0;
        for j in 0..n {
            let h = disc.h(j);
            let base = NDIM * NCOL * j;
            for g in 0..NCOL {
                let mut y = [0.0; NDIM];
                let mut dy = [0.0; NDIM];
                for i in 0..NNODE {
                    for c in 0..NDIM {
                        let v = ref_nodes[base + NDIM * i + c];
                        y[c] += basis.val[g][i] * v;
                        dy[c] += basis.der[g][i] / h * v;
                    }
                }
                dref[j * NCOL + g] = dy;
                let dot: f64 = (0..NDIM).map(|c| y[c] * dy[c]).sum();
                constant += h * basis.weight[g] * dot;
            }
        }
        Self { dref, constant }
    }
}

/// Pseudo-arclength constraint ⟨X - X₀, τ⟩_w = ds, where the node block of
/// the inner product is averaged so the parameters keep O(1) weight.
pub(crate) struct ArcConstraint {
    pub tangent_x: Vec<f64>,
    pub tangent_c: f64,
    pub tangent_l: f64,
    pub x0: Vec<f64>,
    pub c0: f64,
    pub l0: f64,
    pub ds: f64,
}

impl ArcConstraint {
    pub fn residual(&self, x: &[f64], c_big: f64, lambda: f64) -> f64 {
        let nx = self.x0.len() as f64;
        let mut dot = 0.0;
        for i in 0..self.x0.len() {
            dot += self.tangent_x[i] * (x[i] - self.x0[i]);
        }
        dot / nx + self.tangent_c * (c_big - self.c0) + self.tangent_l * (lambda - self.l0)
            - self.ds
    }
}

/// One Newton setup: discretisation, parameters, optional continued
/// parameter, phase reference and optional arclength row.
pub(crate) struct NewtonProblem<'a> {
    pub disc: &'a Discretisation,
    pub pars: NondimParams,
    pub continued: Option<ContParam>,
    pub phase: &'a PhaseRef,
    pub arc: Option<&'a ArcConstraint>,
}

pub(crate) struct NewtonReport {
    pub residual_norm: f64,
    pub iterations: usize,
    pub history: Vec<f64>,
}

const INTERIOR: usize = NDIM * (NNODE - 2); // 12 interior unknowns per interval
const LOCAL_ROWS: usize = NDIM * NCOL; // 16 collocation rows per interval
const LOCAL_COLS: usize = NDIM * NNODE; // 20 node columns per interval

struct LocalBlock {
    w: [[f64; LOCAL_COLS]; LOCAL_ROWS],
    p: [[f64; 2]; LOCAL_ROWS],
    r: [f64; LOCAL_ROWS],
    /// (interior column, pivot row) pairs in elimination order.
    pivots: [(usize, usize); INTERIOR],
    condensed: [usize; NDIM],
}

impl<'a> NewtonProblem<'a> {
    fn system(&self, c_big: f64, lambda: f64) -> TwSystem {
        let mut pars = self.pars;
        if let Some(cp) = self.continued {
            cp.set(&mut pars, lambda);
        }
        TwSystem {
            pars,
            c_big,
            continued: self.continued,
        }
    }

    /// Per-component merit weights. The comoving variables carry the
    /// asymptotic magnitudes V, S ~ ε^{-2/3} and Q ~ ε^{-1}, so an unweighted
    /// merit is dominated by the stiff biomass components and damped Newton
    /// crawls. Weighting the residual by [1, εC, ε, εC] measures it in the
    /// rescaled fast variables, where all components are order one.
    fn merit_weights(&self, c_big: f64) -> [f64; 4] {
        let eps = self.pars.eps;
        [1.0, eps * c_big, eps, eps * c_big]
    }

    /// (infinity norm, weighted euclidean norm) of the full residual. The
    /// former is the convergence criterion; the latter the line-search merit,
    /// for which the Newton direction is always descent.
    pub fn residual_norms(&self, x: &[f64], c_big: f64, lambda: f64) -> (f64, f64) {
        let sys = self.system(c_big, lambda);
        let disc = self.disc;
        let basis = &disc.basis;
        let weights = self.merit_weights(c_big);
        let mut worst = 0.0f64;
        let mut sum_sq = 0.0f64;
        let mut take = |r: f64, w: f64| {
            worst = worst.max(r.abs());
            sum_sq += (w * r) * (w * r);
        };
        for j in 0..disc.n_intervals() {
            let h = disc.h(j);
            let base = NDIM * NCOL * j;
            for g in 0..NCOL {
                let mut y = [0.0; NDIM];
                let mut dy = [0.0; NDIM];
                for i in 0..NNODE {
                    for c in 0..NDIM {
                        let v = x[base + NDIM * i + c];
                        y[c] += basis.val[g][i] * v;
                        dy[c] += basis.der[g][i] / h * v;
                    }
                }
                let f = sys.f(&y);
                for c in 0..NDIM {
                    take(dy[c] - f[c], weights[c]);
                }
            }
        }
        let last = NDIM * (disc.n_nodes() - 1);
        for c in 0..NDIM {
            take(x[last + c] - x[c], weights[c]);
        }
        take(self.phase_residual(x), 1.0);
        if let Some(arc) = self.arc {
            take(arc.residual(x, c_big, lambda), 1.0);
        }
        (worst, sum_sq.sqrt())
    }

    pub fn phase_residual(&self, x: &[f64]) -> f64 {
        let disc = self.disc;
        let basis = &disc.basis;
        let mut acc = 0.0;
        for j in 0..disc.n_intervals() {
            let h = disc.h(j);
            let base = NDIM * NCOL * j;
            for g in 0..NCOL {
                let dref = self.phase.dref[j * NCOL + g];
                let mut dot = 0.0;
                for i in 0..NNODE {
                    for c in 0..NDIM {
                        dot += basis.val[g][i] * x[base + NDIM * i + c] * dref[c];
                    }
                }
                acc += h * basis.weight[g] * dot;
            }
        }
        acc - self.phase.constant
    }

    /// One Newton direction (δx, δC, δλ) at the current iterate.
    fn newton_direction(
        &self,
        x: &[f64],
        c_big: f64,
        lambda: f64,
    ) -> Result<(Vec<f64>, f64, f64), ContinuationError> {
        let sys = self.system(c_big, lambda);
        let disc = self.disc;
        let basis = &disc.basis;
        let n = disc.n_intervals();
        let nx = disc.nx();
        let npar = if self.arc.is_some() { 2 } else { 1 };

        // Border rows over all node unknowns, folded down during elimination.
        let mut phase_nodes = vec![0.0f64; nx];
        let mut phase_par = [0.0f64; 2];
        let mut phase_rhs = -self.phase_residual(x);
        let mut arc_nodes = vec![0.0f64; nx];
        let mut arc_par = [0.0f64; 2];
        let mut arc_rhs = 0.0;
        if let Some(arc) = self.arc {
            let nxf = nx as f64;
            for i in 0..nx {
                arc_nodes[i] = arc.tangent_x[i] / nxf;
            }
            arc_par = [arc.tangent_c, arc.tangent_l];
            arc_rhs = -arc.residual(x, c_big, lambda);
        }

        let mut blocks: Vec<LocalBlock> = Vec::with_capacity(n);
        for j in 0..n {
            let h = disc.h(j);
            let base = NDIM * NCOL * j;
            let mut w = [[0.0f64; LOCAL_COLS]; LOCAL_ROWS];
            let mut p = [[0.0f64; 2]; LOCAL_ROWS];
            let mut r = [0.0f64; LOCAL_ROWS];
            for g in 0..NCOL {
                let mut y = [0.0; NDIM];
                let mut dy = [0.0; NDIM];
                for i in 0..NNODE {
                    for c in 0..NDIM {
                        let v = x[base + NDIM * i + c];
                        y[c] += basis.val[g][i] * v;
                        dy[c] += basis.der[g][i] / h * v;
                    }
                }
                let f = sys.f(&y);
                let jf = sys.df_dy(&y);
                let fc = sys.df_dc(&y);
                let fl = sys.df_dlambda(&y);
                for c in 0..NDIM {
                    let row = NDIM * g + c;
                    r[row] = -(dy[c] - f[c]);
                    for i in 0..NNODE {
                        for c2 in 0..NDIM {
                            let mut entry = -jf[c][c2] * basis.val[g][i];
                            if c2 == c {
                                entry += basis.der[g][i] / h;
                            }
                            w[row][NDIM * i + c2] = entry;
                        }
                    }
                    p[row][0] = -fc[c];
                    p[row][1] = -fl[c];
                }
                // Phase-row entries contributed by this Gauss point.
                let dref = self.phase.dref[j * NCOL + g];
                for i in 0..NNODE {
                    for c in 0..NDIM {
                        phase_nodes[base + NDIM * i + c] +=
                            h * basis.weight[g] * basis.val[g][i] * dref[c];
                    }
                }
            }

            // Gauss–Jordan elimination of the interior columns 4..16, with
            // row pivoting over the local collocation rows only.
            let mut used = [false; LOCAL_ROWS];
            let mut pivots = [(0usize, 0usize); INTERIOR];
            for (step, kcol) in (NDIM..NDIM + INTERIOR).enumerate() {
                let mut prow = usize::MAX;
                let mut best = 0.0;
                for (row, &u) in used.iter().enumerate() {
                    if !u && w[row][kcol].abs() > best {
                        best = w[row][kcol].abs();
                        prow = row;
                    }
                }
                if prow == usize::MAX || best < 1e-300 {
                    return Err(ContinuationError::SingularSystem { interval: j });
                }
                used[prow] = true;
                pivots[step] = (kcol, prow);
                let pivot = w[prow][kcol];
                for row in 0..LOCAL_ROWS {
                    if row == prow {
                        continue;
                    }
                    let factor = w[row][kcol] / pivot;
                    if factor == 0.0 {
                        continue;
                    }
                    for col in 0..LOCAL_COLS {
                        w[row][col] -= factor * w[prow][col];
                    }
                    for q in 0..npar {
                        p[row][q] -= factor * p[prow][q];
                    }
                    r[row] -= factor * r[prow];
                }
                // Fold the pivot row out of the border rows' local windows.
                let fold = |nodes: &mut [f64], par: &mut [f64; 2], rhs: &mut f64| {
                    let factor = nodes[base + kcol] / pivot;
                    if factor == 0.0 {
                        return;
                    }
                    for col in 0..LOCAL_COLS {
                        nodes[base + col] -= factor * w[prow][col];
                    }
                    for q in 0..npar {
                        par[q] -= factor * p[prow][q];
                    }
                    *rhs -= factor * r[prow];
                };
                fold(&mut phase_nodes, &mut phase_par, &mut phase_rhs);
                if self.arc.is_some() {
                    fold(&mut arc_nodes, &mut arc_par, &mut arc_rhs);
                }
            }
            let mut condensed = [0usize; NDIM];
            let mut slot = 0;
            for (row, &u) in used.iter().enumerate() {
                if !u {
                    condensed[slot] = row;
                    slot += 1;
                }
            }
            blocks.push(LocalBlock {
                w,
                p,
                r,
                pivots,
                condensed,
            });
        }

        // Dense bordered system in the interval-boundary values + parameters.
        let nbnd = NDIM * (n + 1);
        let ncond = nbnd + npar;
        let mut mat = DMatrix::<f64>::zeros(ncond, ncond);
        let mut rhs = DVector::<f64>::zeros(ncond);
        for (j, block) in blocks.iter().enumerate() {
            for (slot, &row) in block.condensed.iter().enumerate() {
                let grow = NDIM * j + slot;
                for c in 0..NDIM {
                    mat[(grow, NDIM * j + c)] = block.w[row][c];
                    mat[(grow, NDIM * (j + 1) + c)] = block.w[row][NDIM * (NNODE - 1) + c];
                }
                for q in 0..npar {
                    mat[(grow, nbnd + q)] = block.p[row][q];
                }
                rhs[grow] = block.r[row];
            }
        }
        // Periodicity: x(L) - x(0) = 0.
        let last = NDIM * (disc.n_nodes() - 1);
        for c in 0..NDIM {
            let grow = NDIM * n + c;
            mat[(grow, NDIM * n + c)] = 1.0;
            mat[(grow, c)] -= 1.0;
            rhs[grow] = -(x[last + c] - x[c]);
        }
        // Phase row: only boundary-node entries survive the condensation.
        let phase_row = NDIM * n + NDIM;
        for j in 0..=n {
            let xbase = NDIM * NCOL * j;
            for c in 0..NDIM {
                mat[(phase_row, NDIM * j + c)] = phase_nodes[xbase + c];
            }
        }
        for q in 0..npar {
            mat[(phase_row, nbnd + q)] = phase_par[q];
        }
        rhs[phase_row] = phase_rhs;
        // Arclength row.
        if self.arc.is_some() {
            let arc_row = phase_row + 1;
            for j in 0..=n {
                let xbase = NDIM * NCOL * j;
                for c in 0..NDIM {
                    mat[(arc_row, NDIM * j + c)] = arc_nodes[xbase + c];
                }
            }
            for q in 0..npar {
                mat[(arc_row, nbnd + q)] = arc_par[q];
            }
            rhs[arc_row] = arc_rhs;
        }

        let lu = mat.lu();
        let sol = lu
            .solve(&rhs)
            .ok_or(ContinuationError::SingularCondensedSystem)?;

        // Scatter boundary values and back-substitute the interior unknowns.
        let mut dx = vec![0.0f64; nx];
        for j in 0..=n {
            let xbase = NDIM * NCOL * j;
            for c in 0..NDIM {
                dx[xbase + c] = sol[NDIM * j + c];
            }
        }
        let dc = sol[nbnd];
        let dl = if npar == 2 { sol[nbnd + 1] } else { 0.0 };
        for (j, block) in blocks.iter().enumerate() {
            let base = NDIM * NCOL * j;
            for &(kcol, prow) in &block.pivots {
                let mut acc = block.r[prow];
                for c in 0..NDIM {
                    acc -= block.w[prow][c] * sol[NDIM * j + c];
                    acc -= block.w[prow][NDIM * (NNODE - 1) + c] * sol[NDIM * (j + 1) + c];
                }
                acc -= block.p[prow][0] * dc;
                if npar == 2 {
                    acc -= block.p[prow][1] * dl;
                }
                dx[base + kcol] = acc / block.w[prow][kcol];
            }
        }
        Ok((dx, dc, dl))
    }

    /// Damped Newton iteration until the residual infinity norm drops below
    /// `tol`. Updates `x`, `c_big` and `lambda` in place.
    pub fn solve(
        &self,
        x: &mut Vec<f64>,
        c_big: &mut f64,
        lambda: &mut f64,
        tol: f64,
        max_iter: usize,
    ) -> Result<NewtonReport, ContinuationError> {
        let (mut res_inf, mut merit) = self.residual_norms(x, *c_big, *lambda);
        let mut history = vec![res_inf];
        for iter in 0..max_iter {
            if res_inf < tol {
                return Ok(NewtonReport {
                    residual_norm: res_inf,
                    iterations: iter,
                    history,
                });
            }
            let (dx, dc, dl) = self.newton_direction(x, *c_big, *lambda)?;
            let mut accepted = false;
            let mut alpha = 1.0;
            for _ in 0..14 {
                let trial_x: Vec<f64> =
                    x.iter().zip(&dx).map(|(xi, di)| xi + alpha * di).collect();
                let trial_c = *c_big + alpha * dc;
                let trial_l = *lambda + alpha * dl;
                if trial_c > 0.0 && self.lambda_admissible(trial_l) {
                    let (trial_inf, trial_merit) =
                        self.residual_norms(&trial_x, trial_c, trial_l);
                    // Armijo condition on the least-squares merit.
                    if trial_merit.is_finite()
                        && trial_merit < merit * (1.0 - 1e-4 * alpha)
                    {
                        *x = trial_x;
                        *c_big = trial_c;
                        *lambda = trial_l;
                        res_inf = trial_inf;
                        merit = trial_merit;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            history.push(res_inf);
            if !accepted {
                return Err(ContinuationError::NewtonStagnation { history });
            }
        }
        if res_inf < tol {
            Ok(NewtonReport {
                residual_norm: res_inf,
                iterations: max_iter,
                history,
            })
        } else {
            Err(ContinuationError::NewtonStagnation { history })
        }
    }

    fn lambda_admissible(&self, lambda: f64) -> bool {
        match self.continued {
            None => true,
            Some(ContParam::H) => lambda >= 0.0,
            Some(_) => lambda > 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The condensed bordered solve must return an exact Newton direction:
    /// along it, the full nonlinear residual contracts like (1 - t) for
    /// small step fractions t.
    #[test]
    fn newton_direction_solves_the_linearisation() {
        let pars = NondimParams::new(1.2, 0.45, 4.5, 1.0, 0.005).unwrap();
        let n = 16;
        let l = 60.0;
        let breaks: Vec<f64> = (0..=n).map(|j| l * j as f64 / n as f64).collect();
        let disc = Discretisation::new(breaks);
        let nx = disc.nx();
        // A smooth synthetic single-pulse state, nowhere near a solution.
        let mut x = vec![0.0; nx];
        for k in 0..disc.n_nodes() {
            let xi = disc.node_xi(k);
            let bump = (-(xi - 25.0) * (xi - 25.0) / 12.0).exp();
            x[NDIM * k] = pars.a - 0.9 * bump;
            x[NDIM * k + 1] = 4.0 * bump;
            x[NDIM * k + 2] = -0.6 * (xi - 25.0) / 6.0 * bump;
            x[NDIM * k + 3] = 1.5 * bump;
        }
        let phase = PhaseRef::build(&disc, &x.clone());
        let problem = NewtonProblem {
            disc: &disc,
            pars,
            continued: None,
            phase: &phase,
            arc: None,
        };
        let c_big = 4.0;
        let (_, merit0) = problem.residual_norms(&x, c_big, 0.0);
        let (dx, dc, _) = problem.newton_direction(&x, c_big, 0.0).unwrap();
        for t in [1e-6, 1e-4, 1e-3] {
            let xt: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + t * b).collect();
            let (_, merit_t) = problem.residual_norms(&xt, c_big + t * dc, 0.0);
            let predicted = (1.0 - t) * merit0;
            assert!(
                (merit_t - predicted).abs() < 40.0 * t * t * merit0.max(1.0) + 1e-9,
                "t = {t}: merit {merit_t} vs linear prediction {predicted}"
            );
        }
    }

    /// The analytic parameter derivatives against central differences of the
    /// residual function.
    #[test]
    fn jacobian_columns_match_finite_differences() {
        let pars = NondimParams::new(1.3, 0.5, 3.0, 0.8, 0.01).unwrap();
        let y = [0.9, 1.7, -0.4, 0.6];
        for continued in [
            None,
            Some(ContParam::A),
            Some(ContParam::H),
            Some(ContParam::D),
            Some(ContParam::Eps),
        ] {
            let sys = TwSystem {
                pars,
                c_big: 4.2,
                continued,
            };
            // df/dy columns.
            let jf = sys.df_dy(&y);
            for col in 0..4 {
                let h = 1e-6;
                let mut yp = y;
                let mut ym = y;
                yp[col] += h;
                ym[col] -= h;
                let fp = sys.f(&yp);
                let fm = sys.f(&ym);
                for row in 0..4 {
                    let fd = (fp[row] - fm[row]) / (2.0 * h);
                    assert!(
                        (jf[row][col] - fd).abs() < 1e-7 * (1.0 + fd.abs()),
                        "df/dy[{row}][{col}]"
                    );
                }
            }
            // df/dC.
            let h = 1e-6;
            let sys_p = TwSystem {
                pars,
                c_big: 4.2 + h,
                continued,
            };
            let sys_m = TwSystem {
                pars,
                c_big: 4.2 - h,
                continued,
            };
            let (fp, fm) = (sys_p.f(&y), sys_m.f(&y));
            let fc = sys.df_dc(&y);
            for row in 0..4 {
                let fd = (fp[row] - fm[row]) / (2.0 * h);
                assert!((fc[row] - fd).abs() < 1e-6 * (1.0 + fd.abs()), "df/dC[{row}]");
            }
            // df/dλ.
            if let Some(cp) = continued {
                let mut pp = pars;
                let mut pm = pars;
                cp.set(&mut pp, cp.get(&pars) + h);
                cp.set(&mut pm, cp.get(&pars) - h);
                let sys_p = TwSystem {
                    pars: pp,
                    c_big: 4.2,
                    continued,
                };
                let sys_m = TwSystem {
                    pars: pm,
                    c_big: 4.2,
                    continued,
                };
                let (fp, fm) = (sys_p.f(&y), sys_m.f(&y));
                let fl = sys.df_dlambda(&y);
                for row in 0..4 {
                    let fd = (fp[row] - fm[row]) / (2.0 * h);
                    assert!(
                        (fl[row] - fd).abs() < 1e-6 * (1.0 + fd.abs()),
                        "df/dλ[{row}] for {cp:?}"
                    );
                }
            }
        }
    }
}

