use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::functional::{RateOptions, Residual};
use crate::coefficients::RankCoefficients;
use crate::error::{Error, Result};
use crate::measures::GridCdfPath;

/// Shifted Legendre polynomial of the given degree on the path's time range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeFactor {
    pub degree: u32,
}

impl TimeFactor {
    /// `(P(t), P'(t))` on `[t0, t1]`.
    pub fn eval(&self, t: f64, t0: f64, t1: f64) -> (f64, f64) {
        let span = if t1 > t0 { t1 - t0 } else { 1.0 };
        let s = 2.0 * (t - t0) / span - 1.0;
        let ds = 2.0 / span;
        match self.degree {
            0 => (1.0, 0.0),
            1 => (s, ds),
            2 => (0.5 * (3.0 * s * s - 1.0), 3.0 * s * ds),
            d => {
                // Bonnet recursion for P and P'.
                let (mut p0, mut p1) = (1.0, s);
                let (mut d0, mut d1) = (0.0, 1.0);
                for n in 1..d {
                    let nf = n as f64;
                    let p2 = ((2.0 * nf + 1.0) * s * p1 - nf * p0) / (nf + 1.0);
                    let d2 = d0 + (2.0 * nf + 1.0) * p1;
                    (p0, p1, d0, d1) = (p1, p2, d1, d2);
                }
                (p1, d1 * ds)
            }
        }
    }
}

/// Spatial factor `χ(x)` of a separable test function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SpaceFactor {
    /// `exp(-(x-c)²/(2w²))`.
    Bump { center: f64, width: f64 },
    /// `(x-c)·exp(-((x-c)/W)^8)`: linear on the bulk, decaying outside.
    WindowedLinear { center: f64, half_width: f64 },
    /// `χ ≡ 1`, so `g_x ≡ 0`.
    Constant,
}

impl SpaceFactor {
    /// `(χ, χ', χ'')`.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        match *self {
            SpaceFactor::Bump { center, width } => {
                let z = (x - center) / width;
                let e = (-0.5 * z * z).exp();
                (e, -z / width * e, (z * z - 1.0) / (width * width) * e)
            }
            SpaceFactor::WindowedLinear { center, half_width } => {
                let u = (x - center) / half_width;
                let u7 = u.powi(7);
                let u8 = u7 * u;
                let e = (-u8).exp();
                (
                    (x - center) * e,
                    e * (1.0 - 8.0 * u8),
                    -8.0 * u7 / half_width * (9.0 - 8.0 * u8) * e,
                )
            }
            SpaceFactor::Constant => (1.0, 0.0, 0.0),
        }
    }
}

/// `g(t, x) = P(t) χ(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisElement {
    pub time: TimeFactor,
    pub space: SpaceFactor,
}

/// Finite family of smooth test functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestBasis {
    elements: Vec<BasisElement>,
}

/// Levels `R ∈ [MASS_LEVEL, 1 - MASS_LEVEL]` delimit where bumps are placed.
const MASS_LEVEL: f64 = 1e-4;

impl TestBasis {
    pub fn new(elements: Vec<BasisElement>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::Invalid("test basis must be non-empty".into()));
        }
        Ok(Self { elements })
    }

    pub fn elements(&self) -> &[BasisElement] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// The first `n` elements; bases built this way are nested.
    pub fn prefix(&self, n: usize) -> Result<Self> {
        Self::new(self.elements[..n.min(self.elements.len())].to_vec())
    }

    /// Windowed linear element first, then Gaussian bumps of width `8Δx`
    /// spaced `2·width` apart over the region carrying mass, times shifted
    /// Legendre polynomials of degree `0..=max_degree`.
    pub fn default_for(path: &GridCdfPath, max_degree: u32) -> Self {
        let xg = path.x_grid();
        let (mut lo, mut hi) = (xg.end(), xg.start);
        for k in 0..path.nt() {
            for (j, &r) in path.row(k).iter().enumerate() {
                if (MASS_LEVEL..=1.0 - MASS_LEVEL).contains(&r) {
                    lo = lo.min(xg.at(j));
                    hi = hi.max(xg.at(j));
                }
            }
        }
        if lo > hi {
            (lo, hi) = (xg.start, xg.end());
        }
        let center = 0.5 * (xg.start + xg.end());
        let half = 0.5 * (xg.end() - xg.start);
        let mut elements = vec![BasisElement {
            time: TimeFactor { degree: 0 },
            space: SpaceFactor::WindowedLinear {
                center,
                half_width: 0.9 * half,
            },
        }];
        let width = 8.0 * xg.step;
        let spacing = 2.0 * width;
        let count = ((hi - lo) / spacing).floor() as usize + 1;
        let offset = lo + 0.5 * ((hi - lo) - (count - 1) as f64 * spacing);
        for degree in 0..=max_degree {
            for m in 0..count {
                elements.push(BasisElement {
                    time: TimeFactor { degree },
                    space: SpaceFactor::Bump {
                        center: offset + m as f64 * spacing,
                        width,
                    },
                });
            }
        }
        Self { elements }
    }
}

/// Outcome of the finite-dimensional dual problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalResult {
    pub value: f64,
    /// Maximiser `c = ½ M⁺ v`.
    pub coefficients: Vec<f64>,
    /// `Φ(g_a)`.
    pub phi: Vec<f64>,
    /// Rank of the Gram matrix after thresholding.
    pub rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationalOptions {
    pub support: RateOptions,
    /// Eigenvalues below `pinv_rel · λ_max` are treated as null.
    pub pinv_rel: f64,
    /// Negative eigenvalues beyond `indefinite_rel · λ_max` are an error.
    pub indefinite_rel: f64,
}

impl Default for VariationalOptions {
    fn default() -> Self {
        Self {
            support: RateOptions::default(),
            pinv_rel: 1e-10,
            indefinite_rel: 1e-8,
        }
    }
}

/// `Ĩ = sup_c [Σ c_a Φ(g_a) - (g, g)_γ] = ¼ vᵀ M⁺ v` over the span of the
/// basis, with `Φ(g) = -∫∫ g_x · num` and `(f, g)_γ = ∫∫ A(R) f_x g_x R_x`
/// over the numerical support.
pub fn variational_rate(
    path: &GridCdfPath,
    coeffs: &RankCoefficients,
    basis: &TestBasis,
    options: &VariationalOptions,
) -> Result<VariationalResult> {
    let res = Residual::new(path, coeffs);
    let (nt, nx) = (res.nt(), res.nx());
    let (tg, xg) = (path.t_grid(), path.x_grid());
    let (t0, t1) = (tg.start, tg.end());
    let max_rx = res.derivs.r_x.iter().fold(0.0f64, |m, &v| m.max(v));
    let floor = options.support.rx_floor_rel * max_rx;

    let mut degrees: Vec<u32> = basis.elements.iter().map(|e| e.time.degree).collect();
    degrees.sort_unstable();
    degrees.dedup();
    let slot = |d: u32| degrees.binary_search(&d).expect("degree listed");
    let nd = degrees.len();
    let p: Vec<Vec<f64>> = degrees
        .iter()
        .map(|&d| (0..nt).map(|k| TimeFactor { degree: d }.eval(tg.at(k), t0, t1).0).collect())
        .collect();

    // Time-integrated weights per x node: u[p][j] and q[p][r][j].
    let mut u = vec![vec![0.0; nx]; nd];
    let mut q = vec![vec![vec![0.0; nx]; nd]; nd];
    for k in 0..nt {
        for j in 1..nx - 1 {
            let i = k * nx + j;
            if !res.supported(i, floor) {
                continue;
            }
            let wn = res.w_t[k] * res.num[i];
            let wg = res.w_t[k] * res.a[i] * res.derivs.r_x[i];
            for a in 0..nd {
                u[a][j] += wn * p[a][k];
                for b in a..nd {
                    q[a][b][j] += wg * p[a][k] * p[b][k];
                }
            }
        }
    }

    let m_el = basis.len();
    let chi_x: Vec<Vec<f64>> = basis
        .elements
        .iter()
        .map(|e| (0..nx).map(|j| e.space.eval(xg.at(j)).1).collect())
        .collect();
    let slots: Vec<usize> = basis.elements.iter().map(|e| slot(e.time.degree)).collect();
    let mut v = DVector::zeros(m_el);
    let mut gram = DMatrix::zeros(m_el, m_el);
    for a in 0..m_el {
        let (sa, ca) = (slots[a], &chi_x[a]);
        v[a] = -(1..nx - 1).map(|j| res.w_x[j] * ca[j] * u[sa][j]).sum::<f64>();
        for b in a..m_el {
            let (sb, cb) = (slots[b], &chi_x[b]);
            let (lo, hi) = if sa <= sb { (sa, sb) } else { (sb, sa) };
            let w = &q[lo][hi];
            let val: f64 = (1..nx - 1).map(|j| res.w_x[j] * ca[j] * cb[j] * w[j]).sum();
            gram[(a, b)] = val;
            gram[(b, a)] = val;
        }
    }
    solve_dual(gram, v, options)
}

/// `¼ vᵀ M⁺ v` and `½ M⁺ v` via a symmetric eigendecomposition.
pub fn solve_dual(gram: DMatrix<f64>, v: DVector<f64>, options: &VariationalOptions) -> Result<VariationalResult> {
    let m = v.len();
    let eig = SymmetricEigen::new(gram);
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |acc, l| acc.max(l.abs()));
    let lmin = eig.eigenvalues.iter().fold(f64::INFINITY, |acc, &l| acc.min(l));
    if lmax > 0.0 && lmin < -options.indefinite_rel * lmax {
        return Err(Error::Numerical(format!(
            "Gram matrix is indefinite: smallest eigenvalue {lmin:.3e} vs largest {lmax:.3e}"
        )));
    }
    let thr = options.pinv_rel * lmax;
    let mut value = 0.0;
    let mut coef = DVector::zeros(m);
    let mut rank = 0;
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if lmax == 0.0 || l <= thr {
            continue;
        }
        rank += 1;
        let qi = eig.eigenvectors.column(i);
        let proj = qi.dot(&v);
        value += proj * proj / l;
        coef += qi * (0.5 * proj / l);
    }
    Ok(VariationalResult {
        value: 0.25 * value,
        coefficients: coef.iter().copied().collect(),
        phi: v.iter().copied().collect(),
        rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::UniformGrid;
    use crate::numerics::{norm_cdf, norm_pdf};
    use crate::pde::trapezoid_weights;
    use crate::rate::{rate_functional, RateOptions};
    use std::f64::consts::SQRT_2;

    fn heat() -> RankCoefficients {
        RankCoefficients::constant(0.0, SQRT_2).unwrap()
    }

    fn drifted() -> GridCdfPath {
        let tg = UniformGrid::spanning(0.0, 1.0, 0.02).unwrap();
        let xg = UniformGrid::spanning(-8.0, 8.0, 0.02).unwrap();
        GridCdfPath::from_fn(tg, xg, |t, x| norm_cdf((x - 0.5 * t) / (1.0 + 2.0 * t).sqrt())).unwrap()
    }

    // Φ(g) = ∫g(T)dγ(T) - ∫g(0)dγ(0) - ∫∫(g_t + b g_x + A g_xx) dγ dt with
    // the exact density of the drifted path (b = 0, A = 1).
    fn direct_phi(e: &BasisElement) -> f64 {
        let (t0, t1) = (0.0, 1.0);
        let xs = UniformGrid::spanning(-12.0, 12.0, 0.005).unwrap();
        let ts = UniformGrid::spanning(t0, t1, 0.005).unwrap();
        let wx = trapezoid_weights(xs.len, xs.step);
        let wt = trapezoid_weights(ts.len, ts.step);
        let dens = |t: f64, x: f64| {
            let s = (1.0 + 2.0 * t).sqrt();
            norm_pdf((x - 0.5 * t) / s) / s
        };
        let g_at = |t: f64| -> f64 {
            let (p, _) = e.time.eval(t, t0, t1);
            (0..xs.len).map(|j| wx[j] * p * e.space.eval(xs.at(j)).0 * dens(t, xs.at(j))).sum()
        };
        let mut bulk = 0.0;
        for k in 0..ts.len {
            let t = ts.at(k);
            let (p, dp) = e.time.eval(t, t0, t1);
            for j in 0..xs.len {
                let x = xs.at(j);
                let (c, _, cxx) = e.space.eval(x);
                bulk += wt[k] * wx[j] * (dp * c + p * cxx) * dens(t, x);
            }
        }
        g_at(t1) - g_at(t0) - bulk
    }

    #[test]
    fn integrated_form_matches_direct_definition() {
        let path = drifted();
        let elements = vec![
            BasisElement {
                time: TimeFactor { degree: 0 },
                space: SpaceFactor::WindowedLinear { center: 0.0, half_width: 7.2 },
            },
            BasisElement {
                time: TimeFactor { degree: 1 },
                space: SpaceFactor::Bump { center: 0.4, width: 0.5 },
            },
            BasisElement {
                time: TimeFactor { degree: 2 },
                space: SpaceFactor::Bump { center: -1.0, width: 0.8 },
            },
        ];
        let basis = TestBasis::new(elements.clone()).unwrap();
        let r = variational_rate(&path, &heat(), &basis, &VariationalOptions::default()).unwrap();
        for (a, e) in elements.iter().enumerate() {
            let direct = direct_phi(e);
            assert!((r.phi[a] - direct).abs() < 2e-3 * direct.abs().max(0.05), "element {a}: {} vs {direct}", r.phi[a]);
        }
    }

    #[test]
    fn flat_test_function_gives_zero() {
        let basis = TestBasis::new(vec![BasisElement {
            time: TimeFactor { degree: 1 },
            space: SpaceFactor::Constant,
        }])
        .unwrap();
        let r = variational_rate(&drifted(), &heat(), &basis, &VariationalOptions::default()).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.rank, 0);
    }

    #[test]
    fn drifted_path_attains_rate_and_respects_bound() {
        let path = drifted();
        let j = rate_functional(&path, &heat(), &RateOptions::default()).j;
        let basis = TestBasis::default_for(&path, 2);
        let mut prev = 0.0;
        for n in [1, 5, 20, basis.len()] {
            let r = variational_rate(&path, &heat(), &basis.prefix(n).unwrap(), &VariationalOptions::default()).unwrap();
            assert!(r.value <= j + 1e-3, "n = {n}: {} > {j}", r.value);
            assert!(r.value >= prev - 1e-12, "nesting: {} < {prev}", r.value);
            prev = r.value;
        }
        assert!(prev >= 0.95 * 0.0625, "value {prev}");
    }

    #[test]
    fn legendre_recursion_matches_closed_forms() {
        for &t in &[0.0, 0.3, 0.77, 1.0] {
            let s = 2.0 * t - 1.0;
            let (p3, d3) = TimeFactor { degree: 3 }.eval(t, 0.0, 1.0);
            assert!((p3 - 0.5 * (5.0 * s * s * s - 3.0 * s)).abs() < 1e-14);
            assert!((d3 - 2.0 * 0.5 * (15.0 * s * s - 3.0)).abs() < 1e-13);
        }
    }

    #[test]
    fn indefinite_gram_is_rejected() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let v = DVector::from_vec(vec![1.0, 1.0]);
        assert!(solve_dual(g, v, &VariationalOptions::default()).unwrap_err().is_numerical());
    }
}
