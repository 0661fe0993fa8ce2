use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::coefficients::RankCoefficients;
use crate::measures::GridCdfPath;
use crate::particle::TiltField;
use crate::pde::{trapezoid_weights, DerivativeFields, RegularityDiagnostics, A_FLOOR};

/// Finite-difference residual of the forward equation on a grid path:
/// `num = R_t - (A(R)R_x)_x + b(R)R_x`, with the divergence in the
/// solver's flux form. Row-major in t; edge columns are zero.
#[derive(Debug, Clone)]
pub struct Residual {
    pub derivs: DerivativeFields,
    pub flux_div: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub num: Vec<f64>,
    pub w_t: Vec<f64>,
    pub w_x: Vec<f64>,
}

impl Residual {
    pub fn new(path: &GridCdfPath, coeffs: &RankCoefficients) -> Self {
        let derivs = DerivativeFields::new(path);
        let (nt, nx) = (path.nt(), path.nx());
        let dx = path.x_grid().step;
        let mut a = vec![0.0; nt * nx];
        let mut b = vec![0.0; nt * nx];
        let mut flux_div = vec![0.0; nt * nx];
        let mut num = vec![0.0; nt * nx];
        for k in 0..nt {
            let row = path.row(k);
            let o = k * nx;
            for j in 0..nx {
                let c = coeffs.eval_unchecked(row[j]);
                a[o + j] = c.a.max(A_FLOOR);
                b[o + j] = c.b;
            }
            for j in 1..nx - 1 {
                let ae = 0.5 * (a[o + j] + a[o + j + 1]);
                let aw = 0.5 * (a[o + j - 1] + a[o + j]);
                flux_div[o + j] = (ae * (row[j + 1] - row[j]) - aw * (row[j] - row[j - 1])) / (dx * dx);
                num[o + j] = derivs.r_t[o + j] - flux_div[o + j] + b[o + j] * derivs.r_x[o + j];
            }
        }
        let mut w_x = trapezoid_weights(nx, dx);
        // Only interior columns carry a residual.
        w_x[0] = 0.0;
        w_x[nx - 1] = 0.0;
        let w_t = if nt == 1 { vec![1.0] } else { trapezoid_weights(nt, path.t_grid().step) };
        Self {
            derivs,
            flux_div,
            a,
            b,
            num,
            w_t,
            w_x,
        }
    }

    pub fn nt(&self) -> usize {
        self.derivs.nt
    }

    pub fn nx(&self) -> usize {
        self.derivs.nx
    }

    /// Whether cell `i` lies on the numerical support `R_x >= floor`.
    pub fn supported(&self, i: usize, floor: f64) -> bool {
        let rx = self.derivs.r_x[i];
        rx >= floor && rx > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RateOptions {
    /// `ε_floor` relative to `max R_x`.
    pub rx_floor_rel: f64,
    /// `τ_support` relative to `‖num‖²`.
    pub tau_support_rel: f64,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self {
            rx_floor_rel: 1e-10,
            tau_support_rel: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub nt: usize,
    pub nx: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub dx: f64,
}

impl GridSummary {
    pub fn of(path: &GridCdfPath) -> Self {
        let (tg, xg) = (path.t_grid(), path.x_grid());
        Self {
            nt: tg.len,
            nx: xg.len,
            t_start: tg.start,
            t_end: tg.end(),
            dt: tg.step,
            x_min: xg.start,
            x_max: xg.end(),
            dx: xg.step,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Floors {
    pub rx_floor_rel: f64,
    pub rx_floor: f64,
    pub tau_support_rel: f64,
    pub tau_support: f64,
}

/// Rate functional value with its bookkeeping. `J` is `+∞` (serialised as
/// `null`) when the residual mass outside the support exceeds `τ_support`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    #[serde(rename = "J")]
    pub j: f64,
    pub finite: bool,
    pub outside_mass: f64,
    pub residual_norm_sq: f64,
    pub grid: GridSummary,
    pub floors: Floors,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub diagnostics: Option<RegularityDiagnostics>,
    /// `num²/(σ(R)² R_x)` per node, zero off the support.
    #[serde(skip)]
    pub integrand: Vec<f64>,
}

impl RateReport {
    /// Writes `t,x,integrand` rows, row-major by t.
    pub fn write_integrand_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let g = &self.grid;
        writeln!(out, "t,x,integrand")?;
        for k in 0..g.nt {
            let t = g.t_start + g.dt * k as f64;
            for j in 0..g.nx {
                let x = g.x_min + g.dx * j as f64;
                writeln!(out, "{},{},{}", t, x, self.integrand[k * g.nx + j])?;
            }
        }
        Ok(())
    }
}

/// `J(γ) = ½ ∫∫ num² / (σ(R)² R_x) dx dt` on the numerical support.
pub fn rate_functional(path: &GridCdfPath, coeffs: &RankCoefficients, options: &RateOptions) -> RateReport {
    let res = Residual::new(path, coeffs);
    rate_from_residual(path, &res, options)
}

pub(crate) fn rate_from_residual(path: &GridCdfPath, res: &Residual, options: &RateOptions) -> RateReport {
    let (nt, nx) = (res.nt(), res.nx());
    let max_rx = res.derivs.r_x.iter().fold(0.0f64, |m, &v| m.max(v));
    let floor = options.rx_floor_rel * max_rx;
    let mut integrand = vec![0.0; nt * nx];
    let (mut j_sum, mut outside, mut norm) = (0.0, 0.0, 0.0);
    for k in 0..nt {
        for j in 1..nx - 1 {
            let i = k * nx + j;
            let w = res.w_t[k] * res.w_x[j];
            let n2 = res.num[i] * res.num[i];
            norm += w * n2;
            if res.supported(i, floor) {
                let v = n2 / (2.0 * res.a[i] * res.derivs.r_x[i]);
                integrand[i] = v;
                j_sum += w * v;
            } else {
                outside += w * n2;
            }
        }
    }
    let tau = options.tau_support_rel * norm;
    let finite = outside <= tau;
    RateReport {
        j: if finite { 0.5 * j_sum } else { f64::INFINITY },
        finite,
        outside_mass: outside,
        residual_norm_sq: norm,
        grid: GridSummary::of(path),
        floors: Floors {
            rx_floor_rel: options.rx_floor_rel,
            rx_floor: floor,
            tau_support_rel: options.tau_support_rel,
            tau_support: tau,
        },
        diagnostics: None,
        integrand,
    }
}

/// `½ ∫∫ ((h A(R) + b(R)) / σ(R))² R_x dx dt`, the rate of a path solving
/// the tilted equation with tilt `h`.
pub fn tilt_cost(path: &GridCdfPath, coeffs: &RankCoefficients, tilt: &TiltField) -> f64 {
    let d = DerivativeFields::new(path);
    let (tg, xg) = (path.t_grid(), path.x_grid());
    let w_t = if tg.len == 1 { vec![1.0] } else { trapezoid_weights(tg.len, tg.step) };
    let w_x = trapezoid_weights(xg.len, xg.step);
    let mut total = 0.0;
    for k in 0..tg.len {
        let t = tg.at(k);
        let row = path.row(k);
        for j in 0..xg.len {
            let rx = d.r_x[k * xg.len + j].max(0.0);
            if rx == 0.0 {
                continue;
            }
            let c = coeffs.eval_unchecked(row[j]);
            let a = c.a.max(A_FLOOR);
            let q = tilt.eval(t, xg.at(j)) * a + c.b;
            total += w_t[k] * w_x[j] * q * q / (2.0 * a) * rx;
        }
    }
    0.5 * total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::InitialDistribution;
    use crate::measures::UniformGrid;
    use crate::numerics::norm_cdf;
    use crate::pde::{solve_forward, PdeGrid, SolverOptions};
    use std::f64::consts::SQRT_2;

    fn heat() -> RankCoefficients {
        RankCoefficients::constant(0.0, SQRT_2).unwrap()
    }

    fn drifted(c: f64, dt: f64, dx: f64) -> GridCdfPath {
        let tg = UniformGrid::spanning(0.0, 1.0, dt).unwrap();
        let xg = UniformGrid::spanning(-8.0, 8.0, dx).unwrap();
        GridCdfPath::from_fn(tg, xg, |t, x| norm_cdf((x - c * t) / (1.0 + 2.0 * t).sqrt())).unwrap()
    }

    #[test]
    fn drifted_gaussian_closed_form() {
        let r = rate_functional(&drifted(0.5, 0.01, 0.02), &heat(), &RateOptions::default());
        assert!(r.finite);
        assert!((r.j - 0.0625).abs() < 0.02 * 0.0625, "J = {}", r.j);
    }

    #[test]
    fn heat_path_has_negligible_rate() {
        let r = rate_functional(&drifted(0.0, 0.01, 0.02), &heat(), &RateOptions::default());
        assert!(r.j < 1e-5, "J = {}", r.j);
    }

    #[test]
    fn solver_output_rate_decreases_under_refinement() {
        let init = InitialDistribution::standard_gaussian();
        let c = RankCoefficients::new(vec![0.0, 1.0], vec![0.4, -0.4], vec![1.2, 1.6]).unwrap();
        let base = PdeGrid::new(-8.0, 8.0, 0.08, 2e-3, 0.5).unwrap().with_save_every(5).unwrap();
        let mut js = Vec::new();
        for g in [base, base.refined()] {
            let sol = solve_forward(&c, &init, &g, &SolverOptions::default()).unwrap();
            js.push(rate_functional(&sol.path, &c, &RateOptions::default()).j);
        }
        assert!(js[0] <= 1e-3 && js[1] < js[0], "{js:?}");
    }

    #[test]
    fn tilt_cost_constant_case() {
        // Φ((x + h₀t)/√(1+2t)) solves the tilted equation with h₀.
        let tg = UniformGrid::spanning(0.0, 1.0, 0.05).unwrap();
        let xg = UniformGrid::spanning(-9.0, 9.0, 0.02).unwrap();
        let p = GridCdfPath::from_fn(tg, xg, |t, x| norm_cdf((x + 0.5 * t) / (1.0 + 2.0 * t).sqrt())).unwrap();
        let tilt = TiltField::constant(0.5).unwrap();
        assert!((tilt_cost(&p, &heat(), &tilt) - 0.0625).abs() < 1e-4);
        let r = rate_functional(&p, &heat(), &RateOptions::default());
        assert!((r.j - tilt_cost(&p, &heat(), &tilt)).abs() < 0.02 * 0.0625);
    }

    #[test]
    fn mass_off_support_gives_infinite_rate() {
        // Mass appears where the path has no density.
        let tg = UniformGrid::new(0.0, 0.5, 3).unwrap();
        let xg = UniformGrid::new(0.0, 1.0, 5).unwrap();
        let rows = [
            [0.0, 0.5, 0.5, 0.5, 1.0],
            [0.0, 0.6, 0.6, 0.6, 1.0],
            [0.0, 0.7, 0.7, 0.7, 1.0],
        ];
        let p = GridCdfPath::new(tg, xg, rows.concat()).unwrap();
        let r = rate_functional(&p, &heat(), &RateOptions::default());
        assert!(!r.finite && r.j.is_infinite());
        assert!(r.outside_mass > r.floors.tau_support);
        assert_eq!(serde_json::to_value(&r).unwrap()["J"], serde_json::Value::Null);
    }

    #[test]
    fn integrand_csv_shape() {
        let r = rate_functional(&drifted(0.5, 0.25, 0.5), &heat(), &RateOptions::default());
        let mut buf = Vec::new();
        r.write_integrand_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x,integrand\n"));
        assert_eq!(text.lines().count(), 1 + r.grid.nt * r.grid.nx);
    }
}
