//! Rank-space coefficients `b`, `σ`, `A = σ²/2` on `[0, 1]`, their
//! antiderivatives, the initial distribution `ρ₀`, and numerical checks of
//! the standing regularity assumptions.
//!
//! Coefficients are node tables interpolated piecewise-linearly, so the
//! discrete model `b(j/N) = b_j` is honoured exactly at particle ranks.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{improper_integral, norm_cdf, norm_pdf, norm_quantile, Quadrature};

/// Drift and volatility tables on rank space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCoefficients {
    u_grid: Vec<f64>,
    b_values: Vec<f64>,
    sigma_values: Vec<f64>,
}

/// Coefficient values at one rank fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientValues {
    pub b: f64,
    pub sigma: f64,
    /// `σ²/2`.
    pub a: f64,
    /// Derivative of `A` on the interpolation piece containing `u`.
    pub a_prime: f64,
}

impl RankCoefficients {
    /// Builds a table. `u_grid` must be strictly increasing and run from 0
    /// to 1. Nonpositive volatilities are accepted and reported by
    /// [`validate_assumptions`] so that counterexamples can be studied.
    pub fn new(u_grid: Vec<f64>, b_values: Vec<f64>, sigma_values: Vec<f64>) -> Result<Self> {
        let n = u_grid.len();
        if n < 2 {
            return Err(Error::Invalid("coefficient table needs at least two nodes".into()));
        }
        if b_values.len() != n || sigma_values.len() != n {
            return Err(Error::Invalid(format!(
                "coefficient table lengths differ: u={n}, b={}, sigma={}",
                b_values.len(),
                sigma_values.len()
            )));
        }
        if u_grid[0] != 0.0 || u_grid[n - 1] != 1.0 {
            return Err(Error::Invalid("u grid must start at 0 and end at 1".into()));
        }
        if u_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid("u grid must be strictly increasing".into()));
        }
        if b_values.iter().chain(&sigma_values).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("coefficient values must be finite".into()));
        }
        Ok(Self {
            u_grid,
            b_values,
            sigma_values,
        })
    }

    /// Constant drift and volatility.
    pub fn constant(b: f64, sigma: f64) -> Result<Self> {
        Self::new(vec![0.0, 1.0], vec![b, b], vec![sigma, sigma])
    }

    /// Loads a `u,b,sigma` CSV table.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["u", "b", "sigma"] {
            return Err(Error::Invalid(format!(
                "coefficient CSV header must be `u,b,sigma`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let (mut u, mut b, mut s) = (Vec::new(), Vec::new(), Vec::new());
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec[i].parse::<f64>().map_err(|e| {
                    Error::Invalid(format!("coefficient CSV row {}: column {i}: {e}", line + 2))
                })
            };
            u.push(parse(0)?);
            b.push(parse(1)?);
            s.push(parse(2)?);
        }
        Self::new(u, b, s)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("u,b,sigma\n");
        for i in 0..self.u_grid.len() {
            out.push_str(&format!(
                "{},{},{}\n",
                self.u_grid[i], self.b_values[i], self.sigma_values[i]
            ));
        }
        out
    }

    pub fn u_grid(&self) -> &[f64] {
        &self.u_grid
    }

    pub fn b_values(&self) -> &[f64] {
        &self.b_values
    }

    pub fn sigma_values(&self) -> &[f64] {
        &self.sigma_values
    }

    /// Index `k` of the piece `[u_k, u_{k+1}]` containing `u`; `u = 1` maps to
    /// the last piece.
    fn piece(&self, u: f64) -> usize {
        let n = self.u_grid.len();
        match self.u_grid.binary_search_by(|v| v.total_cmp(&u)) {
            Ok(k) => k.min(n - 2),
            Err(k) => (k - 1).min(n - 2),
        }
    }

    /// Coefficients at a rank fraction `u ∈ [0, 1]`.
    pub fn coefficient_at(&self, u: f64) -> Result<CoefficientValues> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Domain(format!("rank fraction {u} outside [0, 1]")));
        }
        Ok(self.eval_unchecked(u))
    }

    /// Evaluation without the domain check; `u` is clamped into `[0, 1]`.
    pub fn eval_unchecked(&self, u: f64) -> CoefficientValues {
        let u = u.clamp(0.0, 1.0);
        let k = self.piece(u);
        let (u0, u1) = (self.u_grid[k], self.u_grid[k + 1]);
        let w = (u - u0) / (u1 - u0);
        // Node values are returned bit-exactly.
        let lerp = |v: &[f64]| {
            if w == 0.0 {
                v[k]
            } else if w == 1.0 {
                v[k + 1]
            } else {
                v[k] + w * (v[k + 1] - v[k])
            }
        };
        let b = lerp(&self.b_values);
        let sigma = lerp(&self.sigma_values);
        let sigma_slope = (self.sigma_values[k + 1] - self.sigma_values[k]) / (u1 - u0);
        CoefficientValues {
            b,
            sigma,
            a: 0.5 * sigma * sigma,
            a_prime: sigma * sigma_slope,
        }
    }

    pub fn b(&self, u: f64) -> f64 {
        self.eval_unchecked(u).b
    }

    pub fn sigma(&self, u: f64) -> f64 {
        self.eval_unchecked(u).sigma
    }

    pub fn a(&self, u: f64) -> f64 {
        self.eval_unchecked(u).a
    }

    pub fn min_sigma(&self) -> f64 {
        self.sigma_values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_b(&self) -> f64 {
        self.b_values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest value of `A` on `[0, 1]`. `A` is convex on each piece, so the
    /// maximum sits at a node.
    pub fn max_a(&self) -> f64 {
        self.sigma_values.iter().fold(0.0, |m, s| m.max(0.5 * s * s))
    }

    /// Finite-difference Lipschitz constant of `b` over the node table, which
    /// is exact for the piecewise-linear interpolant.
    pub fn b_lipschitz(&self) -> f64 {
        self.u_grid
            .windows(2)
            .zip(self.b_values.windows(2))
            .map(|(u, b)| ((b[1] - b[0]) / (u[1] - u[0])).abs())
            .fold(0.0, f64::max)
    }

    /// `(b(j/N), σ(j/N))` for `j = 1..=N`, indexed by `j - 1`.
    pub fn rank_table(&self, n: usize) -> RankTable {
        let (mut b, mut sigma) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for j in 1..=n {
            let c = self.eval_unchecked(j as f64 / n as f64);
            b.push(c.b);
            sigma.push(c.sigma);
        }
        RankTable { b, sigma }
    }

    /// Exact antiderivatives `Σ(r) = ∫₀ʳ A` and `Θ(r) = ∫₀ʳ b` of the
    /// interpolants.
    pub fn antiderivatives(&self) -> Antiderivatives {
        let n = self.u_grid.len();
        let mut sigma_cum = vec![0.0; n];
        let mut theta_cum = vec![0.0; n];
        for k in 0..n - 1 {
            let h = self.u_grid[k + 1] - self.u_grid[k];
            let (s0, s1) = (self.sigma_values[k], self.sigma_values[k + 1]);
            sigma_cum[k + 1] = sigma_cum[k] + h * (s0 * s0 + s0 * s1 + s1 * s1) / 6.0;
            theta_cum[k + 1] = theta_cum[k] + 0.5 * h * (self.b_values[k] + self.b_values[k + 1]);
        }
        Antiderivatives {
            coeffs: self.clone(),
            sigma_cum,
            theta_cum,
        }
    }
}

/// Coefficients tabulated at the rank fractions `j/N`.
#[derive(Debug, Clone)]
pub struct RankTable {
    pub b: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Antiderivative tables of `A` and `b` with exact evaluation between nodes.
#[derive(Debug, Clone)]
pub struct Antiderivatives {
    coeffs: RankCoefficients,
    sigma_cum: Vec<f64>,
    theta_cum: Vec<f64>,
}

impl Antiderivatives {
    /// `Σ` at the table nodes.
    pub fn sigma_table(&self) -> &[f64] {
        &self.sigma_cum
    }

    /// `Θ` at the table nodes.
    pub fn theta_table(&self) -> &[f64] {
        &self.theta_cum
    }

    /// `Σ(r) = ∫₀ʳ σ²/2`.
    pub fn big_sigma(&self, r: f64) -> f64 {
        let c = &self.coeffs;
        let r = r.clamp(0.0, 1.0);
        let k = c.piece(r);
        let h = r - c.u_grid[k];
        let s0 = c.sigma_values[k];
        let s1 = c.eval_unchecked(r).sigma;
        self.sigma_cum[k] + h * (s0 * s0 + s0 * s1 + s1 * s1) / 6.0
    }

    /// `Θ(r) = ∫₀ʳ b`.
    pub fn big_theta(&self, r: f64) -> f64 {
        let c = &self.coeffs;
        let r = r.clamp(0.0, 1.0);
        let k = c.piece(r);
        let h = r - c.u_grid[k];
        self.theta_cum[k] + 0.5 * h * (c.b_values[k] + c.eval_unchecked(r).b)
    }
}

/// Parametric family of the initial distribution `ρ₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum InitFamily {
    Gaussian { mean: f64, std: f64 },
    Logistic { loc: f64, scale: f64 },
    Uniform { lo: f64, hi: f64 },
    /// Piecewise-linear density through `(x, density)` nodes, zero outside,
    /// normalised to unit mass on construction.
    UserTable { x: Vec<f64>, density: Vec<f64> },
}

/// The initial distribution `ρ₀` together with the moment exponent `η`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialDistribution {
    family: InitFamily,
    eta: f64,
    #[serde(skip)]
    table_cdf: Vec<f64>,
}

impl InitialDistribution {
    pub fn new(family: InitFamily, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::Invalid(format!("moment exponent eta={eta} must lie in (0, 1)")));
        }
        let mut table_cdf = Vec::new();
        let family = match family {
            InitFamily::Gaussian { mean, std } => {
                if !(std > 0.0) || !mean.is_finite() {
                    return Err(Error::Invalid(format!("gaussian needs std > 0 (got {std})")));
                }
                InitFamily::Gaussian { mean, std }
            }
            InitFamily::Logistic { loc, scale } => {
                if !(scale > 0.0) || !loc.is_finite() {
                    return Err(Error::Invalid(format!("logistic needs scale > 0 (got {scale})")));
                }
                InitFamily::Logistic { loc, scale }
            }
            InitFamily::Uniform { lo, hi } => {
                if !(hi > lo) {
                    return Err(Error::Invalid(format!("uniform needs lo < hi (got [{lo}, {hi}])")));
                }
                InitFamily::Uniform { lo, hi }
            }
            InitFamily::UserTable { x, density } => {
                if x.len() < 2 || x.len() != density.len() {
                    return Err(Error::Invalid("density table needs >= 2 matching nodes".into()));
                }
                if x.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Invalid("density table x must be strictly increasing".into()));
                }
                if density.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
                    return Err(Error::Invalid("density table values must be finite and >= 0".into()));
                }
                let mut cum = vec![0.0; x.len()];
                for k in 1..x.len() {
                    cum[k] = cum[k - 1] + 0.5 * (x[k] - x[k - 1]) * (density[k] + density[k - 1]);
                }
                let mass = cum[x.len() - 1];
                if !(mass > 0.0) {
                    return Err(Error::Invalid("density table has zero mass".into()));
                }
                let density: Vec<f64> = density.iter().map(|d| d / mass).collect();
                table_cdf = cum.iter().map(|c| c / mass).collect();
                InitFamily::UserTable { x, density }
            }
        };
        Ok(Self {
            family,
            eta,
            table_cdf,
        })
    }

    pub fn standard_gaussian() -> Self {
        Self::new(InitFamily::Gaussian { mean: 0.0, std: 1.0 }, 0.5).expect("valid")
    }

    pub fn family(&self) -> &InitFamily {
        &self.family
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    fn table_piece(x: &[f64], v: f64) -> Option<usize> {
        if v < x[0] || v >= x[x.len() - 1] {
            return None;
        }
        Some(match x.binary_search_by(|p| p.total_cmp(&v)) {
            Ok(k) => k,
            Err(k) => k - 1,
        })
    }

    pub fn cdf(&self, v: f64) -> f64 {
        match &self.family {
            InitFamily::Gaussian { mean, std } => norm_cdf((v - mean) / std),
            InitFamily::Logistic { loc, scale } => {
                let z = (v - loc) / scale;
                if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                }
            }
            InitFamily::Uniform { lo, hi } => ((v - lo) / (hi - lo)).clamp(0.0, 1.0),
            InitFamily::UserTable { x, density } => {
                if v < x[0] {
                    return 0.0;
                }
                match Self::table_piece(x, v) {
                    None => 1.0,
                    Some(k) => {
                        let h = v - x[k];
                        let slope = (density[k + 1] - density[k]) / (x[k + 1] - x[k]);
                        (self.table_cdf[k] + h * (density[k] + 0.5 * slope * h)).min(1.0)
                    }
                }
            }
        }
    }

    pub fn density(&self, v: f64) -> f64 {
        match &self.family {
            InitFamily::Gaussian { mean, std } => norm_pdf((v - mean) / std) / std,
            InitFamily::Logistic { loc, scale } => {
                let e = (-((v - loc) / scale).abs()).exp();
                e / (scale * (1.0 + e) * (1.0 + e))
            }
            InitFamily::Uniform { lo, hi } => {
                if v >= *lo && v <= *hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            InitFamily::UserTable { x, density } => match Self::table_piece(x, v) {
                None => {
                    if v == x[x.len() - 1] {
                        density[x.len() - 1]
                    } else {
                        0.0
                    }
                }
                Some(k) => {
                    let w = (v - x[k]) / (x[k + 1] - x[k]);
                    density[k] + w * (density[k + 1] - density[k])
                }
            },
        }
    }

    /// Derivative of the density (one-sided where the density has a kink).
    pub fn density_derivative(&self, v: f64) -> f64 {
        match &self.family {
            InitFamily::Gaussian { mean, std } => {
                let z = (v - mean) / std;
                -z * norm_pdf(z) / (std * std)
            }
            InitFamily::Logistic { loc, scale } => {
                let z = (v - loc) / scale;
                let e = (-z.abs()).exp();
                // d/dz of e/(1+e)^2 with e = exp(-|z|), symmetric in z
                let d = -e * (1.0 - e) / (1.0 + e).powi(3);
                z.signum() * d / (scale * scale)
            }
            InitFamily::Uniform { .. } => 0.0,
            InitFamily::UserTable { x, density } => match Self::table_piece(x, v) {
                None => 0.0,
                Some(k) => (density[k + 1] - density[k]) / (x[k + 1] - x[k]),
            },
        }
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("quantile level {p} outside (0, 1)")));
        }
        let q = match &self.family {
            InitFamily::Gaussian { mean, std } => mean + std * norm_quantile(p),
            InitFamily::Logistic { loc, scale } => loc + scale * (p / (1.0 - p)).ln(),
            InitFamily::Uniform { lo, hi } => lo + p * (hi - lo),
            InitFamily::UserTable { x, .. } => {
                let (mut lo, mut hi) = (x[0], x[x.len() - 1]);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.cdf(mid) < p {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-14 * (1.0 + mid.abs()) {
                        break;
                    }
                }
                0.5 * (lo + hi)
            }
        };
        if q.is_finite() {
            Ok(q)
        } else {
            Err(Error::Numerical(format!("quantile at level {p} is not finite")))
        }
    }

    /// Natural length scale (interquartile range).
    pub fn scale(&self) -> f64 {
        let q1 = self.quantile(0.25).unwrap_or(-1.0);
        let q3 = self.quantile(0.75).unwrap_or(1.0);
        (q3 - q1).max(1e-12)
    }
}

/// One named assumption check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub passed: bool,
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Outcome of all assumption checks, in a fixed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub mod check_names {
    pub const SIGMA_POSITIVE: &str = "sigma strictly positive";
    pub const B_LIPSCHITZ: &str = "b Lipschitz";
    pub const A_PRIME_LIPSCHITZ: &str = "A' Lipschitz";
    pub const THETA_POSITIVE_AT_ZERO: &str = "theta positive at 0";
    pub const THETA_C1: &str = "theta continuously differentiable";
    pub const THETA_L3: &str = "theta in L3";
    pub const LEFT_TAIL: &str = "F^2/theta integrable on (-inf,0]";
    pub const RIGHT_TAIL: &str = "(1-F)^2/theta integrable on (0,inf)";
    pub const FISHER: &str = "(theta')^2/theta integrable";
    pub const FIRST_MOMENT: &str = "first moment finite";
    pub const ETA_MOMENT: &str = "(1+eta) moment finite";
}

/// Tolerance parameters for [`validate_assumptions`].
#[derive(Debug, Clone, Copy)]
pub struct ValidationOptions {
    /// Relative change under interval doubling that counts as convergence.
    pub rel_tol: f64,
    pub max_doublings: u32,
    /// A modulus of continuity that shrinks by less than this factor when the
    /// lag shrinks tenfold is taken as evidence of a discontinuity.
    pub continuity_ratio: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            max_doublings: 12,
            continuity_ratio: 0.5,
        }
    }
}

/// `num / den` with `0/0 = 0`.
fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn modulus_of_continuity<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, lag: f64) -> f64 {
    let steps = ((hi - lo) / lag).ceil() as usize;
    let mut worst = 0.0f64;
    let mut prev = f(lo);
    for k in 1..=steps {
        let v = f(lo + k as f64 * lag);
        worst = worst.max((v - prev).abs());
        prev = v;
    }
    worst
}

/// Numerically checks the coefficient and initial-data assumptions. Every
/// check is reported; none aborts.
pub fn validate_assumptions(coeffs: &RankCoefficients, init: &InitialDistribution) -> ValidationReport {
    validate_assumptions_with(coeffs, init, ValidationOptions::default())
}

pub fn validate_assumptions_with(
    coeffs: &RankCoefficients,
    init: &InitialDistribution,
    opts: ValidationOptions,
) -> ValidationReport {
    use check_names::*;
    let mut checks = Vec::new();

    let min_sigma = coeffs.min_sigma();
    checks.push(Check {
        name: SIGMA_POSITIVE.into(),
        value: min_sigma,
        passed: min_sigma > 0.0,
        tolerance: 0.0,
        note: None,
    });

    let lip_b = coeffs.b_lipschitz();
    checks.push(Check {
        name: B_LIPSCHITZ.into(),
        value: lip_b,
        passed: lip_b.is_finite(),
        tolerance: f64::INFINITY,
        note: None,
    });

    // Difference quotients of A' at two lags; a jump in A' makes the
    // estimate grow like 1/lag.
    let a_prime_lip = |lag: f64| {
        let steps = (1.0 / lag).round() as usize;
        let mut worst = 0.0f64;
        let mut prev = coeffs.eval_unchecked(0.0).a_prime;
        for k in 1..=steps {
            let v = coeffs.eval_unchecked((k as f64 * lag).min(1.0)).a_prime;
            worst = worst.max((v - prev).abs() / lag);
            prev = v;
        }
        worst
    };
    let (coarse, fine) = (a_prime_lip(1e-3), a_prime_lip(1e-4));
    let growth_limit = 2.0;
    checks.push(Check {
        name: A_PRIME_LIPSCHITZ.into(),
        value: fine,
        passed: fine.is_finite() && fine <= growth_limit * coarse + 1e-9,
        tolerance: growth_limit,
        note: Some(format!("estimate at lag 1e-3: {coarse:.6e}")),
    });

    let theta0 = init.density(0.0);
    checks.push(Check {
        name: THETA_POSITIVE_AT_ZERO.into(),
        value: theta0,
        passed: theta0 > 0.0,
        tolerance: 0.0,
        note: None,
    });

    let scale = init.scale();
    let lo = init.quantile(1e-10).unwrap_or(-10.0) - scale;
    let hi = init.quantile(1.0 - 1e-10).unwrap_or(10.0) + scale;
    let lag = 1e-4 * scale;
    let density = |x: f64| init.density(x);
    let derivative = |x: f64| init.density_derivative(x);
    let shrink = |f: &dyn Fn(f64) -> f64| {
        let w_coarse = modulus_of_continuity(&f, lo, hi, 10.0 * lag);
        let w_fine = modulus_of_continuity(&f, lo, hi, lag);
        if w_coarse <= 1e-14 {
            0.0
        } else {
            w_fine / w_coarse
        }
    };
    let c1_ratio = shrink(&density).max(shrink(&derivative));
    checks.push(Check {
        name: THETA_C1.into(),
        value: c1_ratio,
        passed: c1_ratio <= opts.continuity_ratio,
        tolerance: opts.continuity_ratio,
        note: Some("ratio of moduli of continuity at lags h/10 and h".into()),
    });

    let integral_check = |name: &str, q: Quadrature| Check {
        name: name.into(),
        value: q.value,
        passed: q.converged && q.value.is_finite(),
        tolerance: opts.rel_tol,
        note: if q.converged {
            None
        } else {
            Some("no convergence under interval doubling".into())
        },
    };
    let both_sides = |f: &dyn Fn(f64) -> f64| {
        let l = improper_integral(&f, 0.0, -1.0, scale, opts.rel_tol, opts.max_doublings);
        let r = improper_integral(&f, 0.0, 1.0, scale, opts.rel_tol, opts.max_doublings);
        Quadrature {
            value: l.value + r.value,
            converged: l.converged && r.converged,
        }
    };

    checks.push(integral_check(THETA_L3, both_sides(&|x| init.density(x).powi(3))));
    checks.push(integral_check(
        LEFT_TAIL,
        improper_integral(
            &|x: f64| ratio(init.cdf(x).powi(2), init.density(x)),
            0.0,
            -1.0,
            scale,
            opts.rel_tol,
            opts.max_doublings,
        ),
    ));
    checks.push(integral_check(
        RIGHT_TAIL,
        improper_integral(
            &|x: f64| ratio((1.0 - init.cdf(x)).powi(2), init.density(x)),
            0.0,
            1.0,
            scale,
            opts.rel_tol,
            opts.max_doublings,
        ),
    ));
    checks.push(integral_check(
        FISHER,
        both_sides(&|x| ratio(init.density_derivative(x).powi(2), init.density(x))),
    ));
    checks.push(integral_check(FIRST_MOMENT, both_sides(&|x| x.abs() * init.density(x))));
    let eta = init.eta();
    checks.push(integral_check(
        ETA_MOMENT,
        both_sides(&|x| x.abs().powf(1.0 + eta) * init.density(x)),
    ));

    ValidationReport { checks }
}
