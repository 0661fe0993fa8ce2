//! Small numerical helpers shared across modules: standard normal functions,
//! adaptive quadrature, a tridiagonal solver and a bracketing root finder.

use statrs::function::erf::erfc;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal quantile, polished with Newton steps against [`norm_cdf`].
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let mut x = -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p);
    for _ in 0..2 {
        let d = norm_pdf(x);
        if d <= 0.0 {
            break;
        }
        x -= (norm_cdf(x) - p) / d;
    }
    x
}

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub converged: bool,
}

/// Adaptive Simpson on `[a, b]` with absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Quadrature {
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
        ok: &mut bool,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 {
            *ok = false;
            return left + right + delta / 15.0;
        }
        if delta.abs() <= 15.0 * tol || (b - a) < 1e-12 {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, ok)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, ok)
    }

    if a == b {
        return Quadrature {
            value: 0.0,
            converged: true,
        };
    }
    // Seed with a few panels so narrow features are not skipped entirely.
    const PANELS: usize = 16;
    let h = (b - a) / PANELS as f64;
    let mut ok = true;
    let mut total = 0.0;
    for k in 0..PANELS {
        let lo = a + k as f64 * h;
        let hi = lo + h;
        let (flo, fmid, fhi) = (f(lo), f(0.5 * (lo + hi)), f(hi));
        let whole = h / 6.0 * (flo + 4.0 * fmid + fhi);
        total += recurse(
            f,
            lo,
            hi,
            flo,
            fmid,
            fhi,
            whole,
            tol / PANELS as f64,
            40,
            &mut ok,
        );
    }
    Quadrature {
        value: total,
        converged: ok && total.is_finite(),
    }
}

/// Integral over `[origin, ±inf)` by interval doubling: the window
/// `origin ± L` doubles from `initial` until the relative change drops below
/// `rel_tol`. Not converging within `max_doublings` is reported, not raised.
pub fn improper_integral<F: Fn(f64) -> f64>(
    f: &F,
    origin: f64,
    direction: f64,
    initial: f64,
    rel_tol: f64,
    max_doublings: u32,
) -> Quadrature {
    let sign = if direction < 0.0 { -1.0 } else { 1.0 };
    // integral over the signed segment [origin + sign*lo, origin + sign*hi]
    let segment = |lo: f64, hi: f64| {
        let (a, b) = if sign > 0.0 {
            (origin + lo, origin + hi)
        } else {
            (origin - hi, origin - lo)
        };
        adaptive_simpson(f, a, b, 1e-13)
    };
    let first = segment(0.0, initial);
    let mut value = first.value;
    let mut ok = first.converged;
    let mut len = initial;
    for _ in 0..max_doublings {
        let extra = segment(len, 2.0 * len);
        ok &= extra.converged;
        value += extra.value;
        len *= 2.0;
        if !value.is_finite() {
            return Quadrature {
                value,
                converged: false,
            };
        }
        let rel = if value == 0.0 {
            extra.value.abs()
        } else {
            (extra.value / value).abs()
        };
        if rel < rel_tol {
            return Quadrature {
                value,
                converged: ok,
            };
        }
    }
    Quadrature {
        value,
        converged: false,
    }
}

/// Thomas algorithm for a tridiagonal system. `lower[i]` multiplies
/// `x[i-1]` in row `i` (so `lower[0]` is unused), `upper[i]` multiplies
/// `x[i+1]` (so `upper[n-1]` is unused). Overwrites `rhs` with the solution.
pub fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &mut [f64],
    scratch: &mut Vec<f64>,
) {
    let n = diag.len();
    debug_assert!(lower.len() == n && upper.len() == n && rhs.len() == n);
    if n == 0 {
        return;
    }
    scratch.clear();
    scratch.resize(n, 0.0);
    let mut beta = diag[0];
    rhs[0] /= beta;
    for i in 1..n {
        scratch[i] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * scratch[i];
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= scratch[i + 1] * rhs[i + 1];
    }
}

/// Bisection for a root of a monotone function on `[lo, hi]` with
/// `f(lo) <= 0 <= f(hi)`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Arithmetic median of an unsorted slice (average of the middle pair for
/// even length). Returns NaN on empty input.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Sample mean and (n-1)-normalised standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}
