//! Distances between distribution functions on ℝ.
//!
//! All metrics work on the [`Cdf`] abstraction: functions that are affine
//! between breakpoints. Extremal values of differences of such functions are
//! attained (as values or one-sided limits) at the union of breakpoints, so
//! every sup below is an exact scan over that union.

use serde::{Deserialize, Serialize};

use super::cdf::{dedup_sorted_from, Cdf};

/// Controls the bisection on `ε` in [`levy_distance_with`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LevyOptions {
    pub abs_tol: f64,
    pub max_iter: u32,
}

impl Default for LevyOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-9,
            max_iter: 64,
        }
    }
}

fn joint_breakpoints<F: Cdf, G: Cdf>(f: &F, g: &G) -> Vec<f64> {
    let mut pts = Vec::new();
    f.push_breakpoints(&mut pts);
    g.push_breakpoints(&mut pts);
    pts.sort_by(f64::total_cmp);
    dedup_sorted_from(&mut pts, 0);
    pts
}

/// Does `F(x-ε) - ε <= G(x) <= F(x+ε) + ε` hold for every x?
fn sandwich_holds<F: Cdf, G: Cdf>(f: &F, g: &G, bp_f: &[f64], bp_g: &[f64], eps: f64) -> bool {
    // Affine pieces of G(·) - F(· + ε) break at bp_g and bp_f - ε; the
    // supremum is a right value or a left limit at one of those points.
    let slack = eps + 1e-15;
    for &z in bp_g {
        if g.eval(z) - f.eval(z + eps) > slack || g.eval_left(z) - f.eval_left(z + eps) > slack {
            return false;
        }
        if f.eval(z - eps) - g.eval(z) > slack || f.eval_left(z - eps) - g.eval_left(z) > slack {
            return false;
        }
    }
    for &y in bp_f {
        let z = y - eps;
        if g.eval(z) - f.eval(y) > slack || g.eval_left(z) - f.eval_left(y) > slack {
            return false;
        }
        let z = y + eps;
        if f.eval(y) - g.eval(z) > slack || f.eval_left(y) - g.eval_left(z) > slack {
            return false;
        }
    }
    true
}

/// Lévy distance `inf{ε > 0 : F(x-ε) - ε <= G(x) <= F(x+ε) + ε ∀x}`.
pub fn levy_distance<F: Cdf, G: Cdf>(f: &F, g: &G) -> f64 {
    levy_distance_with(f, g, LevyOptions::default())
}

pub fn levy_distance_with<F: Cdf, G: Cdf>(f: &F, g: &G, opts: LevyOptions) -> f64 {
    let bp_f = f.breakpoints();
    let bp_g = g.breakpoints();
    if sandwich_holds(f, g, &bp_f, &bp_g, 0.0) {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..opts.max_iter {
        if hi - lo <= opts.abs_tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if sandwich_holds(f, g, &bp_f, &bp_g, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Kolmogorov–Smirnov distance `sup_x |F(x) - G(x)|`.
pub fn ks_distance<F: Cdf, G: Cdf>(f: &F, g: &G) -> f64 {
    joint_breakpoints(f, g).iter().fold(0.0f64, |m, &x| {
        m.max((f.eval(x) - g.eval(x)).abs())
            .max((f.eval_left(x) - g.eval_left(x)).abs())
    })
}

/// Result of [`bounded_lipschitz_distance`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundedLipschitz {
    pub distance: f64,
    /// Optimal Lipschitz budget `L` (with `‖f‖∞ = 1 - L`).
    pub lipschitz: f64,
    /// Set when either input carries more than `truncation_tol` mass in
    /// jumps at the edges of a truncated grid window.
    pub truncated: bool,
}

/// Mass placed on each joint node: jumps at the node plus half of the mass
/// of each adjacent affine piece. Exact for test functions that are affine
/// between nodes.
fn node_weights<F: Cdf>(f: &F, nodes: &[f64]) -> Vec<f64> {
    let k = nodes.len();
    let mut w = vec![0.0; k];
    for i in 0..k {
        w[i] += f.eval(nodes[i]) - f.eval_left(nodes[i]);
        if i + 1 < k {
            let piece = f.eval_left(nodes[i + 1]) - f.eval(nodes[i]);
            w[i] += 0.5 * piece;
            w[i + 1] += 0.5 * piece;
        }
    }
    w
}

/// Concave piecewise-linear function stored by its vertices.
struct ConcavePl {
    ys: Vec<f64>,
    vs: Vec<f64>,
}

impl ConcavePl {
    fn value_at(&self, y: f64) -> f64 {
        let k = self.ys.partition_point(|&v| v <= y);
        if k == 0 {
            return self.vs[0];
        }
        if k == self.ys.len() {
            return self.vs[k - 1];
        }
        let (y0, y1) = (self.ys[k - 1], self.ys[k]);
        if y1 == y0 {
            return self.vs[k - 1].max(self.vs[k]);
        }
        self.vs[k - 1] + (y - y0) / (y1 - y0) * (self.vs[k] - self.vs[k - 1])
    }

    /// `W(y) = max_{|y'-y| <= δ} V(y')`, then restricted to `[-m, m]`.
    fn window_max(&mut self, delta: f64, m: f64) {
        if delta > 0.0 {
            let best = self.vs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let first = self.vs.iter().position(|&v| v == best).unwrap();
            let last = self.vs.iter().rposition(|&v| v == best).unwrap();
            let mut ys = Vec::with_capacity(self.ys.len() + 2);
            let mut vs = Vec::with_capacity(self.ys.len() + 2);
            for i in 0..=first {
                ys.push(self.ys[i] - delta);
                vs.push(self.vs[i]);
            }
            for i in last..self.ys.len() {
                ys.push(self.ys[i] + delta);
                vs.push(self.vs[i]);
            }
            self.ys = ys;
            self.vs = vs;
        }
        self.clip(m);
    }

    fn clip(&mut self, m: f64) {
        let (lo_v, hi_v) = (self.value_at(-m), self.value_at(m));
        let mut ys = Vec::with_capacity(self.ys.len() + 2);
        let mut vs = Vec::with_capacity(self.ys.len() + 2);
        ys.push(-m);
        vs.push(lo_v);
        for (&y, &v) in self.ys.iter().zip(&self.vs) {
            if y > -m && y < m {
                ys.push(y);
                vs.push(v);
            }
        }
        if m > 0.0 {
            ys.push(m);
            vs.push(hi_v);
        }
        self.ys = ys;
        self.vs = vs;
    }

    fn add_linear(&mut self, c: f64) {
        for (y, v) in self.ys.iter().zip(self.vs.iter_mut()) {
            *v += c * y;
        }
    }

    fn max(&self) -> f64 {
        self.vs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `max Σ c_k f_k` subject to `|f_k| <= m` and `|f_{k+1} - f_k| <= lip·gap_k`,
/// by dynamic programming over concave piecewise-linear value functions.
fn bl_inner(c: &[f64], gaps: &[f64], m: f64, lip: f64) -> f64 {
    if c.is_empty() {
        return 0.0;
    }
    let mut v = ConcavePl {
        ys: vec![-m, m],
        vs: vec![-c[0] * m, c[0] * m],
    };
    if m == 0.0 {
        v.ys.truncate(1);
        v.vs.truncate(1);
    }
    for k in 1..c.len() {
        v.window_max(lip * gaps[k - 1], m);
        v.add_linear(c[k]);
    }
    v.max()
}

/// Bounded-Lipschitz distance
/// `sup { |∫f dF - ∫f dG| : ‖f‖∞ + Lip(f) <= 1 }`
/// over test functions affine between joint breakpoints (exact for discrete
/// inputs). The optimal split of the unit budget is found by golden-section
/// search, the value being concave in the Lipschitz share.
pub fn bounded_lipschitz_distance<F: Cdf, G: Cdf>(f: &F, g: &G) -> BoundedLipschitz {
    bounded_lipschitz_with(f, g, 1e-6)
}

pub fn bounded_lipschitz_with<F: Cdf, G: Cdf>(f: &F, g: &G, truncation_tol: f64) -> BoundedLipschitz {
    let nodes = joint_breakpoints(f, g);
    let wf = node_weights(f, &nodes);
    let wg = node_weights(g, &nodes);
    let c: Vec<f64> = wf.iter().zip(&wg).map(|(a, b)| a - b).collect();
    let gaps: Vec<f64> = nodes.windows(2).map(|w| w[1] - w[0]).collect();

    let truncated = f.edge_mass().max(g.edge_mass()) > truncation_tol;

    let value = |lip: f64| bl_inner(&c, &gaps, 1.0 - lip, lip);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (value(x1), value(x2));
    for _ in 0..90 {
        if b - a < 1e-12 {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = value(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = value(x1);
        }
    }
    let (lip, best) = if f1 > f2 { (x1, f1) } else { (x2, f2) };
    BoundedLipschitz {
        distance: best.max(0.0),
        lipschitz: lip,
        truncated,
    }
}
