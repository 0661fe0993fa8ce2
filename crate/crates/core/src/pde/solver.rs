use serde::{Deserialize, Serialize};

use crate::coefficients::{InitialDistribution, RankCoefficients};
use crate::error::{Error, Result};
use crate::measures::{GridCdfPath, UniformGrid};
use crate::numerics::solve_tridiagonal;
use crate::particle::TiltField;

/// Floor applied to `A` when `σ` touches zero.
pub const A_FLOOR: f64 = 1e-10;
/// Largest decrease in `x` that a step may produce before it is an error.
pub const REPAIR_TOL: f64 = 1e-12;
/// Convective Courant limit `Δt/Δx · max|v|`.
pub const CONVECTIVE_CFL: f64 = 0.5;

/// Space-time discretisation: `x_min + jΔx` for `j = 0..nx`, `kΔt` for
/// `k = 0..=K`, storing every `save_every`-th level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdeGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub dx: f64,
    pub dt: f64,
    pub t_end: f64,
    pub save_every: usize,
}

impl PdeGrid {
    pub fn new(x_min: f64, x_max: f64, dx: f64, dt: f64, t_end: f64) -> Result<Self> {
        let g = Self {
            x_min,
            x_max,
            dx,
            dt,
            t_end,
            save_every: 1,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn with_save_every(mut self, save_every: usize) -> Result<Self> {
        self.save_every = save_every;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dx > 0.0 && self.dt > 0.0) || !self.dx.is_finite() || !self.dt.is_finite() {
            return Err(Error::Invalid(format!("grid steps must be positive (dx={}, dt={})", self.dx, self.dt)));
        }
        if !(self.x_max > self.x_min) {
            return Err(Error::Invalid(format!("empty window [{}, {}]", self.x_min, self.x_max)));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::Invalid(format!("horizon must be nonnegative, got {}", self.t_end)));
        }
        if self.nx() < 3 {
            return Err(Error::Invalid("grid needs at least three x nodes".into()));
        }
        if self.save_every == 0 {
            return Err(Error::Invalid("save_every must be at least 1".into()));
        }
        let k = self.steps();
        if !k.is_multiple_of(self.save_every) {
            return Err(Error::Invalid(format!(
                "save_every = {} does not divide the {k} time steps",
                self.save_every
            )));
        }
        Ok(())
    }

    pub fn x_grid(&self) -> UniformGrid {
        UniformGrid::spanning(self.x_min, self.x_max, self.dx).expect("validated window")
    }

    pub fn nx(&self) -> usize {
        (((self.x_max - self.x_min) / self.dx).round().max(1.0) as usize) + 1
    }

    /// Number of time steps `K = round(T/Δt)`.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// Effective spacings after snapping to the window and horizon.
    pub fn effective_dx(&self) -> f64 {
        self.x_grid().step
    }

    pub fn effective_dt(&self) -> f64 {
        match self.steps() {
            0 => self.dt,
            k => self.t_end / k as f64,
        }
    }

    pub fn t_grid(&self) -> UniformGrid {
        let k = self.steps();
        let stored = k / self.save_every + 1;
        UniformGrid::new(0.0, self.effective_dt() * self.save_every as f64, stored).expect("validated grid")
    }

    /// Halves `Δx` and quarters `Δt`, keeping `Δt/Δx²` fixed and the stored
    /// time levels unchanged.
    pub fn refined(&self) -> Self {
        Self {
            dx: 0.5 * self.dx,
            dt: 0.25 * self.dt,
            save_every: 4 * self.save_every,
            ..*self
        }
    }

    /// `Δt/Δx²`.
    pub fn diffusion_ratio(&self) -> f64 {
        let dx = self.effective_dx();
        self.effective_dt() / (dx * dx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    Imex,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub scheme: Scheme,
    /// Boundary pinning tolerance on the initial CDF.
    pub eps_bc: f64,
    /// MUSCL reconstruction with the van Leer limiter; first-order upwinding
    /// when off.
    pub limiter: bool,
    /// Bound on `R` at the nodes next to the boundaries over the run.
    pub mass_leak_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            scheme: Scheme::Imex,
            eps_bc: 1e-8,
            limiter: true,
            mass_leak_tol: 1e-6,
        }
    }
}

/// Run diagnostics returned with every solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub scheme: Scheme,
    pub limiter: bool,
    pub steps: usize,
    pub dx: f64,
    pub dt: f64,
    /// `Δt/Δx · max|v|` over the run.
    pub cfl_convective: f64,
    /// `Δt/Δx² · max A`.
    pub cfl_diffusive: f64,
    /// Largest monotonicity repair applied in any step.
    pub max_repair: f64,
    pub a_floor_used: bool,
    /// `max_t max(R(x_1), 1 - R(x_{nx-2}))`.
    pub boundary_leak: f64,
    pub boundary_leak_ok: bool,
}

/// Solver output.
#[derive(Debug, Clone)]
pub struct PdeSolution {
    pub path: GridCdfPath,
    pub report: SolveReport,
}

/// Convection velocity in `R_t = (A(R)R_x)_x + v R_x`.
enum Velocity<'a> {
    /// `v = -b(R)`.
    Drift,
    /// `v = h(t, x) A(R)`.
    Tilt(&'a TiltField),
}

/// `R_t = (A(R)R_x)_x - b(R)R_x`, `R(0) = F_{ρ₀}`, Dirichlet `0`/`1`.
pub fn solve_forward(
    coeffs: &RankCoefficients,
    init: &InitialDistribution,
    grid: &PdeGrid,
    options: &SolverOptions,
) -> Result<PdeSolution> {
    solve(coeffs, init, grid, options, Velocity::Drift)
}

/// `R_t = (A(R)R_x)_x + h A(R) R_x`, upwinded by the sign of `hA`.
pub fn solve_tilted(
    coeffs: &RankCoefficients,
    init: &InitialDistribution,
    tilt: &TiltField,
    grid: &PdeGrid,
    options: &SolverOptions,
) -> Result<PdeSolution> {
    solve(coeffs, init, grid, options, Velocity::Tilt(tilt))
}

/// Stepper state shared by both schemes.
struct Stepper<'a> {
    coeffs: &'a RankCoefficients,
    velocity: Velocity<'a>,
    x: Vec<f64>,
    dx: f64,
    dt: f64,
    scheme: Scheme,
    limiter: bool,
    a_floor_used: bool,
    max_repair: f64,
    max_cfl: f64,
    // scratch
    a_node: Vec<f64>,
    v: Vec<f64>,
    slope: Vec<f64>,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
    tri: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(coeffs: &'a RankCoefficients, velocity: Velocity<'a>, x: Vec<f64>, dx: f64, dt: f64, options: &SolverOptions) -> Self {
        let n = x.len();
        Self {
            coeffs,
            velocity,
            x,
            dx,
            dt,
            scheme: options.scheme,
            limiter: options.limiter,
            a_floor_used: false,
            max_repair: 0.0,
            max_cfl: 0.0,
            a_node: vec![0.0; n],
            v: vec![0.0; n],
            slope: vec![0.0; n],
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
            rhs: vec![0.0; n],
            tri: Vec::with_capacity(n),
        }
    }

    fn evaluate(&mut self, r: &[f64], t: f64) {
        for j in 0..r.len() {
            let c = self.coeffs.eval_unchecked(r[j]);
            let mut a = c.a;
            if a < A_FLOOR {
                a = A_FLOOR;
                self.a_floor_used = true;
            }
            self.a_node[j] = a;
            self.v[j] = match self.velocity {
                Velocity::Drift => -c.b,
                Velocity::Tilt(h) => h.eval(t, self.x[j]) * a,
            };
        }
    }

    /// Upwind approximation of `v R_x` at interior node `j`.
    fn convection(&self, r: &[f64], j: usize) -> f64 {
        let v = self.v[j];
        let d = if v > 0.0 {
            if self.limiter {
                (r[j + 1] - 0.5 * self.slope[j + 1]) - (r[j] - 0.5 * self.slope[j])
            } else {
                r[j + 1] - r[j]
            }
        } else if v < 0.0 {
            if self.limiter {
                (r[j] + 0.5 * self.slope[j]) - (r[j - 1] + 0.5 * self.slope[j - 1])
            } else {
                r[j] - r[j - 1]
            }
        } else {
            0.0
        };
        v * d / self.dx
    }

    fn limited_slopes(&mut self, r: &[f64]) {
        let n = r.len();
        self.slope[0] = 0.0;
        self.slope[n - 1] = 0.0;
        for j in 1..n - 1 {
            let (dm, dp) = (r[j] - r[j - 1], r[j + 1] - r[j]);
            self.slope[j] = if dm * dp > 0.0 { 2.0 * dm * dp / (dm + dp) } else { 0.0 };
        }
    }

    /// Face coefficient `A_{j+½}` as the mean of nodal values.
    fn a_face(&self, j: usize) -> f64 {
        0.5 * (self.a_node[j] + self.a_node[j + 1])
    }

    /// One step from level `t` (values `r`) into `out`.
    fn step(&mut self, r: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        let n = r.len();
        self.evaluate(r, t);
        let vmax = self.v[1..n - 1].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let cfl = self.dt / self.dx * vmax;
        self.max_cfl = self.max_cfl.max(cfl);
        if cfl > CONVECTIVE_CFL * (1.0 + 1e-12) {
            return Err(Error::Cfl {
                what: "convective Courant number",
                value: cfl,
                limit: CONVECTIVE_CFL,
            });
        }
        if self.limiter {
            self.limited_slopes(r);
        }
        let lam = self.dt / (self.dx * self.dx);
        match self.scheme {
            Scheme::Explicit => {
                let amax = self.a_node.iter().fold(0.0f64, |m, &a| m.max(a));
                let ratio = lam * amax + 0.5 * cfl;
                if ratio > 0.5 * (1.0 + 1e-12) {
                    return Err(Error::Cfl {
                        what: "explicit diffusion ratio dt/dx² max A + ½ convective Courant",
                        value: ratio,
                        limit: 0.5,
                    });
                }
                out[0] = r[0];
                out[n - 1] = r[n - 1];
                for j in 1..n - 1 {
                    let flux = self.a_face(j) * (r[j + 1] - r[j]) - self.a_face(j - 1) * (r[j] - r[j - 1]);
                    out[j] = r[j] + lam * flux + self.dt * self.convection(r, j);
                }
            }
            Scheme::Imex => {
                // Interior unknowns 1..n-1, boundary values folded into rhs.
                let m = n - 2;
                self.lower.resize(m, 0.0);
                self.diag.resize(m, 0.0);
                self.upper.resize(m, 0.0);
                self.rhs.resize(m, 0.0);
                for i in 0..m {
                    let j = i + 1;
                    let (aw, ae) = (self.a_face(j - 1), self.a_face(j));
                    self.lower[i] = -lam * aw;
                    self.upper[i] = -lam * ae;
                    self.diag[i] = 1.0 + lam * (aw + ae);
                    self.rhs[i] = r[j] + self.dt * self.convection(r, j);
                }
                self.rhs[0] += lam * self.a_face(0) * r[0];
                self.rhs[m - 1] += lam * self.a_face(n - 2) * r[n - 1];
                self.lower[0] = 0.0;
                self.upper[m - 1] = 0.0;
                solve_tridiagonal(&self.lower, &self.diag, &self.upper, &mut self.rhs, &mut self.tri);
                out[0] = r[0];
                out[n - 1] = r[n - 1];
                out[1..n - 1].copy_from_slice(&self.rhs);
            }
        }
        self.repair(out, t)
    }

    /// Enforces monotonicity and `[0, 1]` for violations within
    /// [`REPAIR_TOL`]; larger violations are a hard error.
    fn repair(&mut self, out: &mut [f64], t: f64) -> Result<()> {
        let mut worst = 0.0f64;
        let mut at = 0;
        for j in 1..out.len() {
            if !out[j].is_finite() {
                return Err(Error::Numerical(format!("non-finite value at node {j}, t = {t}")));
            }
            let dec = out[j - 1] - out[j];
            if dec > worst {
                worst = dec;
                at = j;
            }
        }
        let below = out.iter().fold(0.0f64, |m, &v| m.max(-v));
        let above = out.iter().fold(0.0f64, |m, &v| m.max(v - 1.0));
        let violation = worst.max(below).max(above);
        if violation > REPAIR_TOL {
            return Err(Error::Numerical(format!(
                "monotonicity repair of {violation:.3e} needed after step from t = {t} (worst decrease at node {at}) exceeds {REPAIR_TOL:e}"
            )));
        }
        if violation > 0.0 {
            let mut run = 0.0f64;
            for v in out.iter_mut() {
                run = run.max(v.clamp(0.0, 1.0));
                *v = run;
            }
        }
        self.max_repair = self.max_repair.max(violation);
        Ok(())
    }
}

fn solve(
    coeffs: &RankCoefficients,
    init: &InitialDistribution,
    grid: &PdeGrid,
    options: &SolverOptions,
    velocity: Velocity<'_>,
) -> Result<PdeSolution> {
    grid.validate()?;
    let xg = grid.x_grid();
    let x = xg.points();
    let n = x.len();
    let (f_lo, f_hi) = (init.cdf(x[0]), init.cdf(x[n - 1]));
    if f_lo > options.eps_bc || 1.0 - f_hi > options.eps_bc {
        return Err(Error::Invalid(format!(
            "window [{}, {}] too narrow: initial CDF is {f_lo:.3e} at the left end and {:.3e} short of 1 at the right end (tolerance {:e})",
            x[0],
            x[n - 1],
            1.0 - f_hi,
            options.eps_bc
        )));
    }
    let mut r: Vec<f64> = x.iter().map(|&v| init.cdf(v)).collect();
    r[0] = 0.0;
    r[n - 1] = 1.0;
    let k_total = grid.steps();
    let dt = grid.effective_dt();
    let t_grid = grid.t_grid();
    let mut stored = Vec::with_capacity(t_grid.len * n);
    stored.extend_from_slice(&r);
    let mut stepper = Stepper::new(coeffs, velocity, x, xg.step, dt, options);
    let mut next = vec![0.0; n];
    let mut leak = r[1].max(1.0 - r[n - 2]);
    for k in 0..k_total {
        stepper.step(&r, k as f64 * dt, &mut next)?;
        std::mem::swap(&mut r, &mut next);
        leak = leak.max(r[1]).max(1.0 - r[n - 2]);
        if (k + 1) % grid.save_every == 0 {
            stored.extend_from_slice(&r);
        }
    }
    let amax = coeffs.max_a().max(A_FLOOR);
    let report = SolveReport {
        scheme: options.scheme,
        limiter: options.limiter,
        steps: k_total,
        dx: xg.step,
        dt,
        cfl_convective: stepper.max_cfl,
        cfl_diffusive: dt / (xg.step * xg.step) * amax,
        max_repair: stepper.max_repair,
        a_floor_used: stepper.a_floor_used,
        boundary_leak: leak,
        boundary_leak_ok: leak <= options.mass_leak_tol,
    };
    Ok(PdeSolution {
        path: GridCdfPath::new(t_grid, xg, stored)?,
        report,
    })
}

/// Sup errors of successively refined solves against an exact solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementStudy {
    pub dx: Vec<f64>,
    pub dt: Vec<f64>,
    pub sup_error: Vec<f64>,
    /// `log2(e_k / e_{k+1})` between consecutive levels.
    pub observed_order: Vec<f64>,
}

impl RefinementStudy {
    /// Error reduction factors `e_k / e_{k+1}`.
    pub fn reduction_factors(&self) -> Vec<f64> {
        self.sup_error.windows(2).map(|w| w[0] / w[1]).collect()
    }
}

/// Sup error of `path` against `exact` over all stored nodes.
pub fn sup_error<F: Fn(f64, f64) -> f64>(path: &GridCdfPath, exact: F) -> f64 {
    let (tg, xg) = (path.t_grid(), path.x_grid());
    let mut worst = 0.0f64;
    for k in 0..tg.len {
        let t = tg.at(k);
        for (j, &v) in path.row(k).iter().enumerate() {
            worst = worst.max((v - exact(t, xg.at(j))).abs());
        }
    }
    worst
}

/// Solves on `base` and `levels - 1` successive refinements
/// ([`PdeGrid::refined`]) and compares each to `exact`.
pub fn refinement_study<S, F>(base: &PdeGrid, levels: usize, solve: S, exact: F) -> Result<RefinementStudy>
where
    S: Fn(&PdeGrid) -> Result<GridCdfPath>,
    F: Fn(f64, f64) -> f64,
{
    let mut grid = *base;
    let mut study = RefinementStudy {
        dx: Vec::new(),
        dt: Vec::new(),
        sup_error: Vec::new(),
        observed_order: Vec::new(),
    };
    for level in 0..levels {
        if level > 0 {
            grid = grid.refined();
        }
        let path = solve(&grid)?;
        study.dx.push(grid.effective_dx());
        study.dt.push(grid.effective_dt());
        study.sup_error.push(sup_error(&path, &exact));
    }
    study.observed_order = study.reduction_factors().iter().map(|f| f.log2()).collect();
    Ok(study)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::norm_cdf;
    use std::f64::consts::SQRT_2;

    fn heat() -> RankCoefficients {
        RankCoefficients::constant(0.0, SQRT_2).unwrap()
    }

    fn gauss() -> InitialDistribution {
        InitialDistribution::standard_gaussian()
    }

    #[test]
    fn explicit_step_matches_handwritten_update() {
        let c = RankCoefficients::new(vec![0.0, 1.0], vec![0.4, -0.2], vec![1.0, 1.6]).unwrap();
        let grid = PdeGrid::new(-7.0, 7.0, 0.5, 0.02, 0.02).unwrap();
        let opts = SolverOptions {
            scheme: Scheme::Explicit,
            limiter: false,
            ..SolverOptions::default()
        };
        let sol = solve_forward(&c, &gauss(), &grid, &opts).unwrap();
        let x = grid.x_grid().points();
        let n = x.len();
        let mut r0: Vec<f64> = x.iter().map(|&v| norm_cdf(v)).collect();
        r0[0] = 0.0;
        r0[n - 1] = 1.0;
        let (dx, dt) = (0.5, 0.02);
        let a = |r: f64| 0.5 * c.sigma(r).powi(2);
        for j in 1..n - 1 {
            let ae = 0.5 * (a(r0[j]) + a(r0[j + 1]));
            let aw = 0.5 * (a(r0[j - 1]) + a(r0[j]));
            let diff = (ae * (r0[j + 1] - r0[j]) - aw * (r0[j] - r0[j - 1])) / (dx * dx);
            let v = -c.b(r0[j]);
            let conv = if v > 0.0 {
                v * (r0[j + 1] - r0[j]) / dx
            } else {
                v * (r0[j] - r0[j - 1]) / dx
            };
            let expect = r0[j] + dt * (diff + conv);
            assert!((sol.path.at(1, j) - expect).abs() < 1e-15, "node {j}");
        }
    }

    #[test]
    fn heat_oracle() {
        let grid = PdeGrid::new(-8.0, 8.0, 0.02, 2e-4, 1.0).unwrap().with_save_every(50).unwrap();
        let sol = solve_forward(&heat(), &gauss(), &grid, &SolverOptions::default()).unwrap();
        let err = sup_error(&sol.path, |t, x| norm_cdf(x / (1.0 + 2.0 * t).sqrt()));
        assert!(err <= 5e-3, "sup error {err}");
        assert!(sol.path.check_invariants(1e-8).all_hold());
        assert!(sol.report.boundary_leak_ok);
    }

    #[test]
    fn drifted_heat_oracle_sign() {
        let c = RankCoefficients::constant(0.5, SQRT_2).unwrap();
        let grid = PdeGrid::new(-8.0, 8.0, 0.02, 2e-4, 1.0).unwrap().with_save_every(50).unwrap();
        for limiter in [false, true] {
            let opts = SolverOptions { limiter, ..SolverOptions::default() };
            let sol = solve_forward(&c, &gauss(), &grid, &opts).unwrap();
            let err = sup_error(&sol.path, |t, x| norm_cdf((x - 0.5 * t) / (1.0 + 2.0 * t).sqrt()));
            assert!(err <= 5e-3, "limiter {limiter}: sup error {err}");
        }
    }

    #[test]
    fn zero_tilt_equals_driftless_forward() {
        let grid = PdeGrid::new(-8.0, 8.0, 0.05, 1e-3, 0.2).unwrap();
        let opts = SolverOptions::default();
        let f = solve_forward(&heat(), &gauss(), &grid, &opts).unwrap();
        let t = solve_tilted(&heat(), &gauss(), &TiltField::zero(), &grid, &opts).unwrap();
        assert_eq!(f.path.values(), t.path.values());
    }

    #[test]
    fn tilt_forward_duality() {
        // h = -b/A with A = 1.
        let grid = PdeGrid::new(-8.0, 8.0, 0.05, 1e-3, 0.5).unwrap();
        let opts = SolverOptions::default();
        let f = solve_forward(&RankCoefficients::constant(0.3, SQRT_2).unwrap(), &gauss(), &grid, &opts).unwrap();
        let t = solve_tilted(&heat(), &gauss(), &TiltField::constant(-0.3).unwrap(), &grid, &opts).unwrap();
        for (a, b) in f.path.values().iter().zip(t.path.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn explicit_cfl_violation_is_reported() {
        let grid = PdeGrid::new(-8.0, 8.0, 0.1, 0.02, 0.1).unwrap();
        let opts = SolverOptions {
            scheme: Scheme::Explicit,
            ..SolverOptions::default()
        };
        assert!(matches!(solve_forward(&heat(), &gauss(), &grid, &opts), Err(Error::Cfl { .. })));
    }

    #[test]
    fn narrow_window_rejected() {
        let grid = PdeGrid::new(-3.0, 3.0, 0.1, 1e-3, 0.1).unwrap();
        assert!(solve_forward(&heat(), &gauss(), &grid, &SolverOptions::default()).is_err());
    }

    #[test]
    fn sigma_touching_zero_uses_floor() {
        let c = RankCoefficients::new(vec![0.0, 1.0], vec![0.0, 0.0], vec![0.0, 1.0]).unwrap();
        let grid = PdeGrid::new(-8.0, 8.0, 0.1, 1e-3, 0.05).unwrap();
        let sol = solve_forward(&c, &gauss(), &grid, &SolverOptions::default()).unwrap();
        assert!(sol.report.a_floor_used);
        assert!(sol.path.check_invariants(1e-8).all_hold());
    }

    #[test]
    fn refinement_reduces_error() {
        let base = PdeGrid::new(-8.0, 8.0, 0.08, 2.5e-3, 0.5).unwrap().with_save_every(5).unwrap();
        let study = refinement_study(
            &base,
            3,
            |g| Ok(solve_forward(&heat(), &gauss(), g, &SolverOptions::default())?.path),
            |t, x| norm_cdf(x / (1.0 + 2.0 * t).sqrt()),
        )
        .unwrap();
        for f in study.reduction_factors() {
            assert!(f >= 3.0, "{study:?}");
        }
    }
}
