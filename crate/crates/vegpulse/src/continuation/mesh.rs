//! Collocation basis and mesh machinery: degree-4 Lagrange representation on
//! equally spaced interval nodes, collocation at the 4-point Gauss–Legendre
//! abscissae, and curvature-equidistributed mesh generation.

/// Collocation points per mesh interval (= polynomial degree).
pub const NCOL: usize = 4;
/// Lagrange nodes per interval, endpoints shared with the neighbours.
pub const NNODE: usize = NCOL + 1;
/// Components of the travelling-wave state (U, V, Q, S).
pub const NDIM: usize = 4;

/// Gauss–Legendre nodes and weights on [0, 1] together with the Lagrange
/// value/derivative tables at those nodes.
#[derive(Debug, Clone)]
pub struct Basis {
    /// Gauss abscissae on [0, 1].
    pub rho: [f64; NCOL],
    /// Gauss weights on [0, 1].
    pub weight: [f64; NCOL],
    /// val[g][i] = L_i(rho_g).
    pub val: [[f64; NNODE]; NCOL],
    /// der[g][i] = L_i'(rho_g) (per unit local coordinate; divide by h).
    pub der: [[f64; NNODE]; NCOL],
}

/// Equally spaced representation nodes on [0, 1].
fn rep_node(i: usize) -> f64 {
    i as f64 / NCOL as f64
}

/// Lagrange basis polynomial L_i over the representation nodes, at x.
pub fn lagrange_value(i: usize, x: f64) -> f64 {
    let xi = rep_node(i);
    let mut p = 1.0;
    for j in 0..NNODE {
        if j != i {
            let xj = rep_node(j);
            p *= (x - xj) / (xi - xj);
        }
    }
    p
}

/// Derivative of L_i at x.
pub fn lagrange_derivative(i: usize, x: f64) -> f64 {
    let xi = rep_node(i);
    let mut sum = 0.0;
    for k in 0..NNODE {
        if k == i {
            continue;
        }
        let xk = rep_node(k);
        let mut term = 1.0 / (xi - xk);
        for j in 0..NNODE {
            if j != i && j != k {
                let xj = rep_node(j);
                term *= (x - xj) / (xi - xj);
            }
        }
        sum += term;
    }
    sum
}

/// Second derivative of L_i at x.
pub fn lagrange_second_derivative(i: usize, x: f64) -> f64 {
    let xi = rep_node(i);
    let mut sum = 0.0;
    for k in 0..NNODE {
        if k == i {
            continue;
        }
        let xk = rep_node(k);
        for m in 0..NNODE {
            if m == i || m == k {
                continue;
            }
            let xm = rep_node(m);
            let mut term = 1.0 / ((xi - xk) * (xi - xm));
            for j in 0..NNODE {
                if j != i && j != k && j != m {
                    let xj = rep_node(j);
                    term *= (x - xj) / (xi - xj);
                }
            }
            sum += term;
        }
    }
    sum
}

impl Basis {
    pub fn new() -> Self {
        // 4-point Gauss–Legendre on [-1, 1], mapped to [0, 1].
        let a = (3.0f64 / 7.0 - 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
        let b = (3.0f64 / 7.0 + 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
        let w_inner = (18.0 + 30.0f64.sqrt()) / 36.0;
        let w_outer = (18.0 - 30.0f64.sqrt()) / 36.0;
        let nodes = [-b, -a, a, b];
        let weights = [w_outer, w_inner, w_inner, w_outer];
        let mut rho = [0.0; NCOL];
        let mut weight = [0.0; NCOL];
        let mut val = [[0.0; NNODE]; NCOL];
        let mut der = [[0.0; NNODE]; NCOL];
        for g in 0..NCOL {
            rho[g] = 0.5 * (1.0 + nodes[g]);
            weight[g] = 0.5 * weights[g];
            for i in 0..NNODE {
                val[g][i] = lagrange_value(i, rho[g]);
                der[g][i] = lagrange_derivative(i, rho[g]);
            }
        }
        Self {
            rho,
            weight,
            val,
            der,
        }
    }
}

impl Default for Basis {
    fn default() -> Self {
        Self::new()
    }
}

/// Equidistribute `n` mesh intervals over [0, L] against the density implied
/// by samples of |V''|, with a uniform floor so the quiescent far field keeps
/// a bounded interval width.
///
/// `xi` must be ascending within [0, L); the density between samples is
/// treated as piecewise linear.
pub fn equidistribute(xi: &[f64], v: &[f64], l: f64, n: usize) -> Vec<f64> {
    assert!(xi.len() == v.len() && xi.len() >= 8 && n >= 4);
    let m = xi.len();
    // |V''| by second differences on the (possibly nonuniform) sample grid,
    // periodic wrap at the ends.
    let mut density = vec![0.0f64; m];
    for k in 0..m {
        let km = (k + m - 1) % m;
        let kp = (k + 1) % m;
        let mut h_m = xi[k] - xi[km];
        if h_m <= 0.0 {
            h_m += l;
        }
        let mut h_p = xi[kp] - xi[k];
        if h_p <= 0.0 {
            h_p += l;
        }
        // Degenerate sample spacing would put unbounded mass on one point.
        if h_m < 1e-8 * l || h_p < 1e-8 * l {
            continue;
        }
        let d2 =
            2.0 * (v[kp] * h_m - v[k] * (h_m + h_p) + v[km] * h_p) / (h_m * h_p * (h_m + h_p));
        density[k] = d2.abs().sqrt();
    }
    let seg_len = |k: usize| -> f64 {
        let kp = (k + 1) % m;
        let mut h = xi[kp] - xi[k];
        if h <= 0.0 {
            h += l;
        }
        h
    };
    // Uniform floor: ~30% of the mesh mass is spread evenly over the domain.
    let mut mass_curv = 0.0;
    for k in 0..m {
        let kp = (k + 1) % m;
        mass_curv += 0.5 * (density[k] + density[kp]) * seg_len(k);
    }
    let floor = if mass_curv > 0.0 {
        mass_curv / l * (3.0 / 7.0)
    } else {
        1.0 / l
    };
    for d in &mut density {
        *d += floor;
    }
    // Cumulative mass, then invert at equal quantiles.
    let mut cum = vec![0.0f64; m + 1];
    for k in 0..m {
        let kp = (k + 1) % m;
        cum[k + 1] = cum[k] + 0.5 * (density[k] + density[kp]) * seg_len(k);
    }
    let total = cum[m];
    let mut breaks = Vec::with_capacity(n + 1);
    breaks.push(0.0);
    let mut seg = 0usize;
    for j in 1..n {
        let target = total * j as f64 / n as f64;
        while seg + 1 < m && cum[seg + 1] < target {
            seg += 1;
        }
        let local = (target - cum[seg]) / (cum[seg + 1] - cum[seg]).max(1e-300);
        breaks.push(xi[seg] + local * seg_len(seg));
    }
    breaks.push(l);
    // Enforce strict monotonicity with a minimal interval width.
    let min_h = 1e-8 * l;
    for j in 1..breaks.len() {
        if breaks[j] <= breaks[j - 1] + min_h {
            breaks[j] = breaks[j - 1] + min_h;
        }
    }
    let last = *breaks.last().unwrap();
    if last > l {
        let scale = l / last;
        for b in &mut breaks[1..] {
            *b *= scale;
        }
    }
    *breaks.last_mut().unwrap() = l;
    breaks
}
