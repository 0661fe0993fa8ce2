use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::coefficients::InitialDistribution;
use crate::error::{Error, Result};

/// A distribution function on ℝ that is affine between consecutive
/// breakpoints, 0 below the first and 1 from the last onwards. Jumps can only
/// occur at breakpoints.
pub trait Cdf {
    /// Right-continuous value `F(x)`.
    fn eval(&self, x: f64) -> f64;
    /// Left limit `F(x-)`.
    fn eval_left(&self, x: f64) -> f64;
    /// Appends the breakpoints, in increasing order, to `out`.
    fn push_breakpoints(&self, out: &mut Vec<f64>);

    /// Mass carried by jumps at the edges of a truncated window (zero for
    /// distributions that are not truncated).
    fn edge_mass(&self) -> f64 {
        0.0
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut v = Vec::new();
        self.push_breakpoints(&mut v);
        v
    }
}

/// Empirical CDF of a particle configuration at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCdf {
    positions: Vec<f64>,
    time: f64,
}

impl EmpiricalCdf {
    /// Sorts `positions`; at least one finite position is required.
    pub fn new(mut positions: Vec<f64>, time: f64) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::Invalid("empirical CDF needs at least one position".into()));
        }
        if positions.iter().any(|p| !p.is_finite()) {
            return Err(Error::Invalid("empirical CDF positions must be finite".into()));
        }
        positions.sort_by(f64::total_cmp);
        Ok(Self { positions, time })
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

impl Cdf for EmpiricalCdf {
    fn eval(&self, x: f64) -> f64 {
        self.positions.partition_point(|&p| p <= x) as f64 / self.positions.len() as f64
    }

    fn eval_left(&self, x: f64) -> f64 {
        self.positions.partition_point(|&p| p < x) as f64 / self.positions.len() as f64
    }

    fn push_breakpoints(&self, out: &mut Vec<f64>) {
        let start = out.len();
        out.extend_from_slice(&self.positions);
        dedup_sorted_from(out, start);
    }
}

/// Fraction of particles at or below `x`.
pub fn empirical_cdf_eval(ecdf: &EmpiricalCdf, x: f64) -> f64 {
    ecdf.eval(x)
}

/// Stratified-quantile initial configuration `X_i = Q((i - 1/2)/N)`.
pub fn quantile_init(init: &InitialDistribution, n: usize) -> Result<EmpiricalCdf> {
    if n == 0 {
        return Err(Error::Invalid("quantile_init needs N >= 1".into()));
    }
    let positions = (1..=n)
        .map(|i| init.quantile((i as f64 - 0.5) / n as f64))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::Invalid(format!("initial distribution quantile failed: {e}")))?;
    EmpiricalCdf::new(positions, 0.0)
}

/// One time slice of a grid path: piecewise-linear interpolation of node
/// values on a uniform grid. Treated as a proper CDF, so mass outside the
/// window shows up as jumps at the window edges.
#[derive(Debug, Clone)]
pub struct GridSlice<'a> {
    x_min: f64,
    dx: f64,
    values: Cow<'a, [f64]>,
}

impl<'a> GridSlice<'a> {
    pub fn new(x_min: f64, dx: f64, values: Cow<'a, [f64]>) -> Self {
        debug_assert!(values.len() >= 2 && dx > 0.0);
        Self { x_min, dx, values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_min + self.dx * (self.values.len() - 1) as f64
    }

    fn interior(&self, x: f64) -> f64 {
        let n = self.values.len();
        let s = (x - self.x_min) / self.dx;
        let k = (s.floor() as usize).min(n - 2);
        let w = s - k as f64;
        let (a, b) = (self.values[k], self.values[k + 1]);
        if w <= 0.0 {
            a
        } else if w >= 1.0 {
            b
        } else {
            a + w * (b - a)
        }
    }
}

impl Cdf for GridSlice<'_> {
    fn eval(&self, x: f64) -> f64 {
        if x < self.x_min {
            0.0
        } else if x >= self.x_max() {
            1.0
        } else {
            self.interior(x)
        }
    }

    fn eval_left(&self, x: f64) -> f64 {
        if x <= self.x_min {
            0.0
        } else if x > self.x_max() {
            1.0
        } else {
            self.interior(x)
        }
    }

    fn push_breakpoints(&self, out: &mut Vec<f64>) {
        let n = self.values.len();
        out.extend((0..n).map(|j| self.x_min + self.dx * j as f64));
    }

    fn edge_mass(&self) -> f64 {
        self.values[0] + (1.0 - self.values[self.values.len() - 1])
    }
}

/// A view of one time slice of any path, possibly a convex combination of
/// two neighbouring slices when times must be aligned.
#[derive(Debug, Clone)]
pub enum PathSlice<'a> {
    Empirical(&'a EmpiricalCdf),
    Grid(GridSlice<'a>),
    Blend(Box<PathSlice<'a>>, Box<PathSlice<'a>>, f64),
}

impl Cdf for PathSlice<'_> {
    fn eval(&self, x: f64) -> f64 {
        match self {
            PathSlice::Empirical(e) => e.eval(x),
            PathSlice::Grid(g) => g.eval(x),
            PathSlice::Blend(a, b, w) => (1.0 - w) * a.eval(x) + w * b.eval(x),
        }
    }

    fn eval_left(&self, x: f64) -> f64 {
        match self {
            PathSlice::Empirical(e) => e.eval_left(x),
            PathSlice::Grid(g) => g.eval_left(x),
            PathSlice::Blend(a, b, w) => (1.0 - w) * a.eval_left(x) + w * b.eval_left(x),
        }
    }

    fn push_breakpoints(&self, out: &mut Vec<f64>) {
        match self {
            PathSlice::Empirical(e) => e.push_breakpoints(out),
            PathSlice::Grid(g) => g.push_breakpoints(out),
            PathSlice::Blend(a, b, _) => {
                let start = out.len();
                a.push_breakpoints(out);
                b.push_breakpoints(out);
                out[start..].sort_by(f64::total_cmp);
                dedup_sorted_from(out, start);
            }
        }
    }

    fn edge_mass(&self) -> f64 {
        match self {
            PathSlice::Empirical(_) => 0.0,
            PathSlice::Grid(g) => g.edge_mass(),
            PathSlice::Blend(a, b, w) => (1.0 - w) * a.edge_mass() + w * b.edge_mass(),
        }
    }
}

/// Discrete distribution given by atoms and weights; mostly a test and
/// example convenience.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteCdf {
    atoms: Vec<f64>,
    cumulative: Vec<f64>,
}

impl DiscreteCdf {
    pub fn new(atoms_weights: &[(f64, f64)]) -> Result<Self> {
        if atoms_weights.is_empty() {
            return Err(Error::Invalid("discrete CDF needs at least one atom".into()));
        }
        let mut pairs = atoms_weights.to_vec();
        if pairs.iter().any(|(a, w)| !a.is_finite() || !(*w >= 0.0)) {
            return Err(Error::Invalid("atoms must be finite with nonnegative weight".into()));
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        if !(total > 0.0) {
            return Err(Error::Invalid("discrete CDF has zero mass".into()));
        }
        let mut atoms: Vec<f64> = Vec::new();
        let mut cumulative: Vec<f64> = Vec::new();
        let mut acc = 0.0;
        for (a, w) in pairs {
            acc += w / total;
            if atoms.last() == Some(&a) {
                *cumulative.last_mut().unwrap() = acc;
            } else {
                atoms.push(a);
                cumulative.push(acc);
            }
        }
        *cumulative.last_mut().unwrap() = 1.0;
        Ok(Self { atoms, cumulative })
    }

    pub fn point_mass(at: f64) -> Self {
        Self::new(&[(at, 1.0)]).expect("valid")
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }
}

impl Cdf for DiscreteCdf {
    fn eval(&self, x: f64) -> f64 {
        let k = self.atoms.partition_point(|&a| a <= x);
        if k == 0 {
            0.0
        } else {
            self.cumulative[k - 1]
        }
    }

    fn eval_left(&self, x: f64) -> f64 {
        let k = self.atoms.partition_point(|&a| a < x);
        if k == 0 {
            0.0
        } else {
            self.cumulative[k - 1]
        }
    }

    fn push_breakpoints(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.atoms);
    }
}

impl<T: Cdf + ?Sized> Cdf for &T {
    fn eval(&self, x: f64) -> f64 {
        (**self).eval(x)
    }
    fn eval_left(&self, x: f64) -> f64 {
        (**self).eval_left(x)
    }
    fn push_breakpoints(&self, out: &mut Vec<f64>) {
        (**self).push_breakpoints(out)
    }
    fn edge_mass(&self) -> f64 {
        (**self).edge_mass()
    }
}

pub(crate) fn dedup_sorted_from(v: &mut Vec<f64>, start: usize) {
    if v.len() <= start + 1 {
        return;
    }
    let mut w = start + 1;
    for r in start + 1..v.len() {
        if v[r] != v[w - 1] {
            v[w] = v[r];
            w += 1;
        }
    }
    v.truncate(w);
}
