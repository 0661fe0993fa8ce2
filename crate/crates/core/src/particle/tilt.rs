use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::UniformGrid;

/// Bounded Lipschitz tilt `h(t, x)`: constant, or bilinear on a grid with
/// constant extension outside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltField {
    kind: TiltKind,
    h_max: f64,
    lip_t: f64,
    lip_x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum TiltKind {
    Constant(f64),
    Grid {
        t_grid: UniformGrid,
        x_grid: UniformGrid,
        values: Vec<f64>,
    },
}

impl TiltField {
    pub fn constant(h0: f64) -> Result<Self> {
        if !h0.is_finite() {
            return Err(Error::Invalid(format!("tilt must be finite, got {h0}")));
        }
        Ok(Self {
            kind: TiltKind::Constant(h0),
            h_max: h0.abs(),
            lip_t: 0.0,
            lip_x: 0.0,
        })
    }

    pub fn zero() -> Self {
        Self::constant(0.0).expect("zero is finite")
    }

    /// Row-major `h(t_k, x_j)`.
    pub fn from_grid(t_grid: UniformGrid, x_grid: UniformGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != t_grid.len * x_grid.len {
            return Err(Error::Invalid(format!(
                "tilt grid has {} values, expected {}x{}",
                values.len(),
                t_grid.len,
                x_grid.len
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("tilt values must be finite".into()));
        }
        let h_max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let nx = x_grid.len;
        let mut lip_x = 0.0f64;
        let mut lip_t = 0.0f64;
        for k in 0..t_grid.len {
            let row = &values[k * nx..(k + 1) * nx];
            lip_x = row.windows(2).fold(lip_x, |m, w| m.max((w[1] - w[0]).abs() / x_grid.step));
            if k + 1 < t_grid.len {
                let next = &values[(k + 1) * nx..(k + 2) * nx];
                lip_t = row
                    .iter()
                    .zip(next)
                    .fold(lip_t, |m, (a, b)| m.max((b - a).abs() / t_grid.step));
            }
        }
        Ok(Self {
            kind: TiltKind::Grid {
                t_grid,
                x_grid,
                values,
            },
            h_max,
            lip_t,
            lip_x,
        })
    }

    pub fn from_fn<F: Fn(f64, f64) -> f64>(t_grid: UniformGrid, x_grid: UniformGrid, f: F) -> Result<Self> {
        let mut values = Vec::with_capacity(t_grid.len * x_grid.len);
        for k in 0..t_grid.len {
            let t = t_grid.at(k);
            values.extend((0..x_grid.len).map(|j| f(t, x_grid.at(j))));
        }
        Self::from_grid(t_grid, x_grid, values)
    }

    /// `sup |h|`; bilinear interpolation never exceeds the node maximum.
    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    pub fn lipschitz_t(&self) -> f64 {
        self.lip_t
    }

    pub fn lipschitz_x(&self) -> f64 {
        self.lip_x
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self.kind {
            TiltKind::Constant(h) => Some(h),
            TiltKind::Grid { .. } => None,
        }
    }

    /// Whether `[0, t_end] x [x_lo, x_hi]` lies inside the tabulated grid.
    /// Evaluation outside uses constant extension.
    pub fn covers(&self, t_end: f64, x_lo: f64, x_hi: f64) -> bool {
        match &self.kind {
            TiltKind::Constant(_) => true,
            TiltKind::Grid { t_grid, x_grid, .. } => {
                let tol = 1e-9;
                t_grid.start <= tol
                    && t_grid.end() >= t_end - tol * (1.0 + t_end.abs())
                    && x_grid.start <= x_lo
                    && x_grid.end() >= x_hi
            }
        }
    }

    pub fn eval(&self, t: f64, x: f64) -> f64 {
        match &self.kind {
            TiltKind::Constant(h) => *h,
            TiltKind::Grid {
                t_grid,
                x_grid,
                values,
            } => {
                let (kt, wt) = cell(t_grid, t);
                let (kx, wx) = cell(x_grid, x);
                let nx = x_grid.len;
                let at = |k: usize, j: usize| values[k * nx + j];
                let kt1 = (kt + 1).min(t_grid.len - 1);
                let kx1 = (kx + 1).min(nx - 1);
                let lo = (1.0 - wx) * at(kt, kx) + wx * at(kt, kx1);
                let hi = (1.0 - wx) * at(kt1, kx) + wx * at(kt1, kx1);
                (1.0 - wt) * lo + wt * hi
            }
        }
    }

    /// Writes `t,x,h` rows, row-major by t; a constant tilt is written as a
    /// single-node table.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        match &self.kind {
            TiltKind::Constant(h) => {
                let g = UniformGrid::new(0.0, 1.0, 1).expect("valid");
                crate::measures::write_grid_table(out, "h", g, g, &[*h])
            }
            TiltKind::Grid {
                t_grid,
                x_grid,
                values,
            } => crate::measures::write_grid_table(out, "h", *t_grid, *x_grid, values),
        }
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let (t_grid, x_grid, values) = crate::measures::read_grid_table(input, "h")?;
        if values.len() == 1 {
            return Self::constant(values[0]);
        }
        Self::from_grid(t_grid, x_grid, values)
    }
}

/// Cell index and weight with clamping to the grid range.
fn cell(g: &UniformGrid, v: f64) -> (usize, f64) {
    if g.len == 1 {
        return (0, 0.0);
    }
    let s = ((v - g.start) / g.step).clamp(0.0, (g.len - 1) as f64);
    let k = (s.floor() as usize).min(g.len - 2);
    (k, s - k as f64)
}
