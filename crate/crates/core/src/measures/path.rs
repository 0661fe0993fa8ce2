use std::borrow::Cow;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::cdf::{EmpiricalCdf, GridSlice, PathSlice};
use super::metrics::{levy_distance_with, LevyOptions};
use crate::error::{Error, Result};

/// Uniform 1-d grid `start + k·step`, `k = 0..len`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl UniformGrid {
    pub fn new(start: f64, step: f64, len: usize) -> Result<Self> {
        if !(step > 0.0) || !start.is_finite() || len < 1 {
            return Err(Error::Invalid(format!(
                "uniform grid needs step > 0 and len >= 1 (start={start}, step={step}, len={len})"
            )));
        }
        Ok(Self { start, step, len })
    }

    /// Grid on `[start, end]` with spacing as close to `step` as divides the
    /// interval evenly.
    pub fn spanning(start: f64, end: f64, step: f64) -> Result<Self> {
        if !(end > start) {
            return Err(Error::Invalid(format!("empty interval [{start}, {end}]")));
        }
        let cells = ((end - start) / step).round().max(1.0) as usize;
        Self::new(start, (end - start) / cells as f64, cells + 1)
    }

    pub fn at(&self, k: usize) -> f64 {
        self.start + self.step * k as f64
    }

    pub fn end(&self) -> f64 {
        self.at(self.len - 1)
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len).map(|k| self.at(k)).collect()
    }
}

/// Path of CDFs `R(t_k, x_j)` on a uniform space-time grid, row-major in t.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCdfPath {
    t_grid: UniformGrid,
    x_grid: UniformGrid,
    values: Vec<f64>,
}

/// Outcome of the invariant predicates on a [`GridCdfPath`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathInvariants {
    pub in_unit_interval: bool,
    pub monotone_in_x: bool,
    pub boundary_pinned: bool,
    /// `max_k sup_x |R(t_{k+1}, ·) - R(t_k, ·)|`.
    pub max_time_jump: f64,
    /// Largest decrease of `R` between neighbouring x nodes.
    pub max_monotonicity_violation: f64,
}

impl PathInvariants {
    pub fn all_hold(&self) -> bool {
        self.in_unit_interval && self.monotone_in_x && self.boundary_pinned
    }
}

impl GridCdfPath {
    pub fn new(t_grid: UniformGrid, x_grid: UniformGrid, values: Vec<f64>) -> Result<Self> {
        if x_grid.len < 2 {
            return Err(Error::Invalid("grid path needs at least two x nodes".into()));
        }
        if values.len() != t_grid.len * x_grid.len {
            return Err(Error::Invalid(format!(
                "grid path has {} values, expected {}x{}",
                values.len(),
                t_grid.len,
                x_grid.len
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("grid path values must be finite".into()));
        }
        Ok(Self {
            t_grid,
            x_grid,
            values,
        })
    }

    /// Tabulates `f(t, x)`.
    pub fn from_fn<F: Fn(f64, f64) -> f64>(t_grid: UniformGrid, x_grid: UniformGrid, f: F) -> Result<Self> {
        let mut values = Vec::with_capacity(t_grid.len * x_grid.len);
        for k in 0..t_grid.len {
            let t = t_grid.at(k);
            values.extend((0..x_grid.len).map(|j| f(t, x_grid.at(j))));
        }
        Self::new(t_grid, x_grid, values)
    }

    pub fn t_grid(&self) -> UniformGrid {
        self.t_grid
    }

    pub fn x_grid(&self) -> UniformGrid {
        self.x_grid
    }

    pub fn nt(&self) -> usize {
        self.t_grid.len
    }

    pub fn nx(&self) -> usize {
        self.x_grid.len
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let nx = self.x_grid.len;
        &self.values[k * nx..(k + 1) * nx]
    }

    pub fn at(&self, k: usize, j: usize) -> f64 {
        self.values[k * self.x_grid.len + j]
    }

    pub fn slice(&self, k: usize) -> GridSlice<'_> {
        GridSlice::new(self.x_grid.start, self.x_grid.step, Cow::Borrowed(self.row(k)))
    }

    /// All invariant predicates at once.
    pub fn check_invariants(&self, eps_bc: f64) -> PathInvariants {
        let nx = self.x_grid.len;
        let mut in_unit = true;
        let mut worst_dec = 0.0f64;
        let mut pinned = true;
        let mut jump = 0.0f64;
        for k in 0..self.t_grid.len {
            let row = self.row(k);
            in_unit &= row.iter().all(|&v| (0.0..=1.0).contains(&v));
            worst_dec = row.windows(2).fold(worst_dec, |m, w| m.max(w[0] - w[1]));
            pinned &= row[0] <= eps_bc && row[nx - 1] >= 1.0 - eps_bc;
            if k + 1 < self.t_grid.len {
                let next = self.row(k + 1);
                jump = row.iter().zip(next).fold(jump, |m, (a, b)| m.max((a - b).abs()));
            }
        }
        PathInvariants {
            in_unit_interval: in_unit,
            monotone_in_x: worst_dec <= 0.0,
            boundary_pinned: pinned,
            max_time_jump: jump,
            max_monotonicity_violation: worst_dec.max(0.0),
        }
    }

    /// Writes `t,x,R` rows, row-major by t.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        write_grid_table(out, "R", self.t_grid, self.x_grid, &self.values)
    }

    /// Reads the `t,x,R` format; both axes must be uniform.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let (t_grid, x_grid, values) = read_grid_table(input, "R")?;
        Self::new(t_grid, x_grid, values)
    }
}

/// Writes a row-major space-time table with header `t,x,<value_name>`.
pub(crate) fn write_grid_table<W: Write>(
    mut out: W,
    value_name: &str,
    t_grid: UniformGrid,
    x_grid: UniformGrid,
    values: &[f64],
) -> std::io::Result<()> {
    writeln!(out, "t,x,{value_name}")?;
    for k in 0..t_grid.len {
        let t = t_grid.at(k);
        for j in 0..x_grid.len {
            writeln!(out, "{},{},{}", t, x_grid.at(j), values[k * x_grid.len + j])?;
        }
    }
    Ok(())
}

/// Reads a table written by [`write_grid_table`]; both axes must be uniform
/// and rows must be row-major by t.
pub(crate) fn read_grid_table<R: Read>(
    input: R,
    value_name: &str,
) -> Result<(UniformGrid, UniformGrid, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t", "x", value_name] {
        return Err(Error::Invalid(format!("grid CSV header must be `t,x,{value_name}`")));
    }
    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 3 {
            return Err(Error::Invalid(format!("grid CSV row {} must have 3 fields", line + 2)));
        }
        let p = |i: usize| {
            rec[i]
                .parse::<f64>()
                .map_err(|e| Error::Invalid(format!("grid CSV row {}: {e}", line + 2)))
        };
        rows.push((p(0)?, p(1)?, p(2)?));
    }
    if rows.is_empty() {
        return Err(Error::Invalid("grid CSV has no rows".into()));
    }
    let t0 = rows[0].0;
    let nx = rows.iter().take_while(|r| r.0 == t0).count();
    if !rows.len().is_multiple_of(nx) {
        return Err(Error::Invalid("grid CSV rows do not form a rectangle".into()));
    }
    let nt = rows.len() / nx;
    let xs: Vec<f64> = rows[..nx].iter().map(|r| r.1).collect();
    let ts: Vec<f64> = (0..nt).map(|k| rows[k * nx].0).collect();
    let uniform = |v: &[f64], what: &str| -> Result<UniformGrid> {
        if v.len() == 1 {
            return UniformGrid::new(v[0], 1.0, 1);
        }
        let step = (v[v.len() - 1] - v[0]) / (v.len() - 1) as f64;
        for (k, &p) in v.iter().enumerate() {
            if (p - (v[0] + step * k as f64)).abs() > 1e-9 * (1.0 + p.abs()) {
                return Err(Error::Invalid(format!("grid CSV: {what} axis is not uniform")));
            }
        }
        UniformGrid::new(v[0], step, v.len())
    };
    let x_grid = uniform(&xs, "x")?;
    let t_grid = uniform(&ts, "t")?;
    for k in 0..nt {
        for j in 0..nx {
            let r = rows[k * nx + j];
            if r.0 != ts[k] || (r.1 - xs[j]).abs() > 1e-12 * (1.0 + xs[j].abs()) {
                return Err(Error::Invalid(format!(
                    "grid CSV: row {} breaks the row-major layout",
                    k * nx + j + 2
                )));
            }
        }
    }
    Ok((t_grid, x_grid, rows.into_iter().map(|r| r.2).collect()))
}

/// Snapshots of an empirical measure path in time order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalPath {
    snapshots: Vec<EmpiricalCdf>,
}

impl EmpiricalPath {
    pub fn new(snapshots: Vec<EmpiricalCdf>) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(Error::Invalid("empirical path needs at least one snapshot".into()));
        }
        if snapshots.windows(2).any(|w| !(w[1].time() > w[0].time())) {
            return Err(Error::Invalid("empirical path snapshots must be strictly increasing in time".into()));
        }
        Ok(Self { snapshots })
    }

    pub fn snapshots(&self) -> &[EmpiricalCdf] {
        &self.snapshots
    }

    /// Writes `t,rank,x` rows (rank is 1-based within each snapshot).
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,rank,x")?;
        for s in &self.snapshots {
            for (i, x) in s.positions().iter().enumerate() {
                writeln!(out, "{},{},{}", s.time(), i + 1, x)?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["t", "rank", "x"] {
            return Err(Error::Invalid("snapshot CSV header must be `t,rank,x`".into()));
        }
        let mut snapshots = Vec::new();
        let mut current: Option<(f64, Vec<f64>)> = None;
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |e: std::num::ParseFloatError| Error::Invalid(format!("snapshot CSV row {}: {e}", line + 2));
            let t: f64 = rec[0].parse().map_err(bad)?;
            let x: f64 = rec[2].parse().map_err(bad)?;
            match &mut current {
                Some((ct, xs)) if *ct == t => xs.push(x),
                _ => {
                    if let Some((ct, xs)) = current.take() {
                        snapshots.push(EmpiricalCdf::new(xs, ct)?);
                    }
                    current = Some((t, vec![x]));
                }
            }
        }
        if let Some((ct, xs)) = current {
            snapshots.push(EmpiricalCdf::new(xs, ct)?);
        }
        Self::new(snapshots)
    }
}

/// Anything that yields a CDF at each of a finite set of times and can be
/// interpolated linearly in between.
pub trait MeasurePath {
    fn times(&self) -> Vec<f64>;
    /// CDF at time `t` within the path's time range, `None` outside.
    fn slice_at(&self, t: f64) -> Option<PathSlice<'_>>;
}

fn locate(times_start: f64, times_end: f64, t: f64) -> bool {
    let tol = 1e-9 * (1.0 + times_end.abs());
    t >= times_start - tol && t <= times_end + tol
}

impl MeasurePath for GridCdfPath {
    fn times(&self) -> Vec<f64> {
        self.t_grid.points()
    }

    fn slice_at(&self, t: f64) -> Option<PathSlice<'_>> {
        let g = self.t_grid;
        if !locate(g.start, g.end(), t) {
            return None;
        }
        if g.len == 1 {
            return Some(PathSlice::Grid(self.slice(0)));
        }
        let s = ((t - g.start) / g.step).clamp(0.0, (g.len - 1) as f64);
        let k = s.round();
        if (s - k).abs() < 1e-9 {
            return Some(PathSlice::Grid(self.slice(k as usize)));
        }
        let k = (s.floor() as usize).min(g.len - 2);
        let w = s - k as f64;
        let (a, b) = (self.row(k), self.row(k + 1));
        let blended: Vec<f64> = a.iter().zip(b).map(|(p, q)| (1.0 - w) * p + w * q).collect();
        Some(PathSlice::Grid(GridSlice::new(
            self.x_grid.start,
            self.x_grid.step,
            Cow::Owned(blended),
        )))
    }
}

impl MeasurePath for EmpiricalPath {
    fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time()).collect()
    }

    fn slice_at(&self, t: f64) -> Option<PathSlice<'_>> {
        let first = self.snapshots[0].time();
        let last = self.snapshots[self.snapshots.len() - 1].time();
        if !locate(first, last, t) {
            return None;
        }
        let tol = 1e-9 * (1.0 + last.abs());
        let k = self.snapshots.partition_point(|s| s.time() < t - tol);
        let k = k.min(self.snapshots.len() - 1);
        if (self.snapshots[k].time() - t).abs() <= tol || k == 0 {
            return Some(PathSlice::Empirical(&self.snapshots[k]));
        }
        let (a, b) = (&self.snapshots[k - 1], &self.snapshots[k]);
        let w = (t - a.time()) / (b.time() - a.time());
        Some(PathSlice::Blend(
            Box::new(PathSlice::Empirical(a)),
            Box::new(PathSlice::Empirical(b)),
            w,
        ))
    }
}

/// Sup-over-time Lévy distance between two paths with its trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurePathDistance {
    pub sup: f64,
    pub argmax: usize,
    pub times: Vec<f64>,
    pub trace: Vec<f64>,
}

/// Comparison times: the coarser path's nodes within the common range (the
/// finer path is interpolated there), or the union when both have equally
/// many nodes on different grids.
fn comparison_times(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let lo = a[0].max(b[0]);
    let hi = a[a.len() - 1].min(b[b.len() - 1]);
    let tol = 1e-9 * (1.0 + hi.abs());
    if lo > hi + tol {
        return Err(Error::Domain(format!(
            "paths have disjoint time ranges [{}, {}] and [{}, {}]",
            a[0],
            a[a.len() - 1],
            b[0],
            b[b.len() - 1]
        )));
    }
    let within = |v: &[f64]| -> Vec<f64> {
        v.iter().copied().filter(|&t| t >= lo - tol && t <= hi + tol).collect()
    };
    let (wa, wb) = (within(a), within(b));
    let same = wa.len() == wb.len() && wa.iter().zip(&wb).all(|(x, y)| (x - y).abs() <= tol);
    Ok(if same || wa.len() < wb.len() {
        wa
    } else if wb.len() < wa.len() {
        wb
    } else {
        let mut u = wa;
        u.extend(wb);
        u.sort_by(f64::total_cmp);
        u.dedup_by(|x, y| (*x - *y).abs() <= tol);
        u
    })
}

/// `sup_t d_L(γ₁(t), γ₂(t))` over the comparison times.
pub fn path_distance<P: MeasurePath + ?Sized, Q: MeasurePath + ?Sized>(
    a: &P,
    b: &Q,
) -> Result<MeasurePathDistance> {
    path_distance_with(a, b, LevyOptions::default())
}

pub fn path_distance_with<P: MeasurePath + ?Sized, Q: MeasurePath + ?Sized>(
    a: &P,
    b: &Q,
    opts: LevyOptions,
) -> Result<MeasurePathDistance> {
    let times = comparison_times(&a.times(), &b.times())?;
    let mut trace = Vec::with_capacity(times.len());
    for &t in &times {
        let (sa, sb) = match (a.slice_at(t), b.slice_at(t)) {
            (Some(x), Some(y)) => (x, y),
            _ => return Err(Error::Domain(format!("time {t} outside a path's range"))),
        };
        trace.push(levy_distance_with(&sa, &sb, opts));
    }
    let (argmax, sup) = trace
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0f64), |(bi, bv), (i, v)| if v > bv { (i, v) } else { (bi, bv) });
    Ok(MeasurePathDistance {
        sup,
        argmax,
        times,
        trace,
    })
}

/// Open-ball membership `d(center, sample) < δ`.
pub fn ball_contains<P: MeasurePath + ?Sized, Q: MeasurePath + ?Sized>(
    center: &P,
    delta: f64,
    sample: &Q,
) -> Result<bool> {
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("ball radius must be positive, got {delta}")));
    }
    Ok(path_distance(center, sample)?.sup < delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::norm_cdf;

    fn heat_path(shift_at_end: f64) -> GridCdfPath {
        let tg = UniformGrid::spanning(0.0, 1.0, 0.25).unwrap();
        let xg = UniformGrid::spanning(-12.0, 12.0, 0.05).unwrap();
        GridCdfPath::from_fn(tg, xg, |t, x| {
            let s = if t >= 1.0 { shift_at_end } else { 0.0 };
            norm_cdf((x - s) / (1.0 + 2.0 * t).sqrt())
        })
        .unwrap()
    }

    #[test]
    fn identical_paths_are_at_zero_distance() {
        let p = heat_path(0.0);
        let d = path_distance(&p, &p).unwrap();
        assert_eq!(d.sup, 0.0);
        assert!(ball_contains(&p, 1e-6, &p).unwrap());
    }

    #[test]
    fn sup_attained_where_paths_differ() {
        let (p, q) = (heat_path(0.0), heat_path(0.3));
        let d = path_distance(&p, &q).unwrap();
        assert_eq!(d.argmax, d.times.len() - 1);
        assert!(d.sup > 0.0);
        assert_eq!(d.sup, d.trace.iter().copied().fold(0.0, f64::max));
        assert!(ball_contains(&p, 2.0, &q).unwrap());
        assert!(!ball_contains(&p, d.sup, &q).unwrap());
    }

    #[test]
    fn disjoint_time_ranges_are_rejected() {
        let a = EmpiricalPath::new(vec![EmpiricalCdf::new(vec![0.0], 0.0).unwrap()]).unwrap();
        let b = EmpiricalPath::new(vec![EmpiricalCdf::new(vec![0.0], 1.0).unwrap()]).unwrap();
        assert!(matches!(path_distance(&a, &b), Err(Error::Domain(_))));
    }

    #[test]
    fn grid_csv_round_trip() {
        let p = heat_path(0.0);
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let back = GridCdfPath::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.nt(), p.nt());
        assert_eq!(back.nx(), p.nx());
        for (a, b) in back.values().iter().zip(p.values()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn snapshot_csv_round_trip() {
        let path = EmpiricalPath::new(vec![
            EmpiricalCdf::new(vec![0.5, -0.5], 0.0).unwrap(),
            EmpiricalCdf::new(vec![1.5, -0.25], 0.5).unwrap(),
        ])
        .unwrap();
        let mut buf = Vec::new();
        path.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,rank,x\n0,1,-0.5\n"));
        assert_eq!(EmpiricalPath::read_csv(buf.as_slice()).unwrap(), path);
    }

    #[test]
    fn invariants_detect_violations() {
        let p = heat_path(0.0);
        let inv = p.check_invariants(1e-8);
        assert!(inv.all_hold(), "{inv:?}");
        let tg = UniformGrid::new(0.0, 1.0, 1).unwrap();
        let xg = UniformGrid::new(0.0, 1.0, 3).unwrap();
        let bad = GridCdfPath::new(tg, xg, vec![0.0, 0.7, 0.6]).unwrap();
        let inv = bad.check_invariants(1e-8);
        assert!(!inv.monotone_in_x && !inv.boundary_pinned);
        assert!((inv.max_monotonicity_violation - 0.1).abs() < 1e-12);
    }
}
