use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::GridCdfPath;

/// Relative floor on `R_x` below which a cell counts as outside the support.
pub const RX_FLOOR_REL: f64 = 1e-10;

/// Finite-difference derivative fields of a grid path, row-major in t:
/// centered in the interior, one-sided at the edges.
#[derive(Debug, Clone)]
pub struct DerivativeFields {
    pub nt: usize,
    pub nx: usize,
    pub r_t: Vec<f64>,
    pub r_x: Vec<f64>,
    pub r_xx: Vec<f64>,
}

impl DerivativeFields {
    pub fn new(path: &GridCdfPath) -> Self {
        let (nt, nx) = (path.nt(), path.nx());
        let (dt, dx) = (path.t_grid().step, path.x_grid().step);
        let mut r_t = vec![0.0; nt * nx];
        let mut r_x = vec![0.0; nt * nx];
        let mut r_xx = vec![0.0; nt * nx];
        for k in 0..nt {
            let row = path.row(k);
            let o = k * nx;
            for j in 0..nx {
                r_x[o + j] = if j == 0 {
                    (row[1] - row[0]) / dx
                } else if j == nx - 1 {
                    (row[j] - row[j - 1]) / dx
                } else {
                    (row[j + 1] - row[j - 1]) / (2.0 * dx)
                };
                let c = j.clamp(1, nx.saturating_sub(2).max(1));
                r_xx[o + j] = if nx >= 3 {
                    (row[c + 1] - 2.0 * row[c] + row[c - 1]) / (dx * dx)
                } else {
                    0.0
                };
            }
            if nt >= 3 {
                // Second-order one-sided stencils at the time ends, written
                // in differences so constant rows give exactly zero.
                let row_k = path.row(k);
                if k == 0 || k == nt - 1 {
                    let (n1, n2) = if k == 0 { (1, 2) } else { (k - 1, k - 2) };
                    let sign = if k == 0 { 1.0 } else { -1.0 };
                    let (a, b) = (path.row(n1), path.row(n2));
                    for j in 0..nx {
                        r_t[o + j] = sign * (4.0 * (a[j] - row_k[j]) - (b[j] - row_k[j])) / (2.0 * dt);
                    }
                } else {
                    let (a, b) = (path.row(k + 1), path.row(k - 1));
                    for j in 0..nx {
                        r_t[o + j] = (a[j] - b[j]) / (2.0 * dt);
                    }
                }
            } else if nt == 2 {
                let (a, b) = (path.row(0), path.row(1));
                for j in 0..nx {
                    r_t[o + j] = (b[j] - a[j]) / dt;
                }
            }
        }
        Self { nt, nx, r_t, r_x, r_xx }
    }

    /// Absolute floor `RX_FLOOR_REL · max R_x`.
    pub fn floor(&self) -> f64 {
        RX_FLOOR_REL * self.r_x.iter().fold(0.0f64, |m, &v| m.max(v))
    }
}

/// Trapezoid weights on a uniform axis.
pub fn trapezoid_weights(len: usize, step: f64) -> Vec<f64> {
    let mut w = vec![step; len];
    if len >= 2 {
        w[0] *= 0.5;
        w[len - 1] *= 0.5;
    } else {
        w.iter_mut().for_each(|v| *v = 0.0);
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LqNorm {
    pub q: f64,
    pub value: f64,
}

/// Regularity integrals over `[0, T] x window`, with `0/0 = 0` for cells
/// whose `R_x` lies below the floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityDiagnostics {
    pub eta: f64,
    pub rx_cubed: f64,
    pub rxx_sq_over_rx: f64,
    pub rt_sq_over_rx: f64,
    pub moment: f64,
    pub lq_rt: Vec<LqNorm>,
    pub lq_rxx: Vec<LqNorm>,
    pub rx_floor: f64,
    /// `∫R_xx²` over floored cells.
    pub floor_mass_rxx: f64,
    /// `∫R_t²` over floored cells.
    pub floor_mass_rt: f64,
    pub all_finite: bool,
}

/// Exponents reported for the `L^q` norms.
pub const LQ_EXPONENTS: [f64; 2] = [6.0 / 5.0, 1.5];

pub fn regularity_diagnostics(path: &GridCdfPath, eta: f64) -> Result<RegularityDiagnostics> {
    if path.nt() < 3 || path.nx() < 3 {
        return Err(Error::Domain("regularity diagnostics need at least 3 nodes per axis".into()));
    }
    let d = DerivativeFields::new(path);
    let wt = trapezoid_weights(d.nt, path.t_grid().step);
    let wx = trapezoid_weights(d.nx, path.x_grid().step);
    let floor = d.floor();
    let xg = path.x_grid();
    let mut out = RegularityDiagnostics {
        eta,
        rx_cubed: 0.0,
        rxx_sq_over_rx: 0.0,
        rt_sq_over_rx: 0.0,
        moment: 0.0,
        lq_rt: Vec::new(),
        lq_rxx: Vec::new(),
        rx_floor: floor,
        floor_mass_rxx: 0.0,
        floor_mass_rt: 0.0,
        all_finite: true,
    };
    let mut lq_t = [0.0; LQ_EXPONENTS.len()];
    let mut lq_xx = [0.0; LQ_EXPONENTS.len()];
    for k in 0..d.nt {
        for j in 0..d.nx {
            let i = k * d.nx + j;
            let w = wt[k] * wx[j];
            let (rt, rx, rxx) = (d.r_t[i], d.r_x[i], d.r_xx[i]);
            out.rx_cubed += w * rx.max(0.0).powi(3);
            out.moment += w * xg.at(j).abs().powf(1.0 + eta) * rx.max(0.0);
            if rx >= floor && rx > 0.0 {
                out.rxx_sq_over_rx += w * rxx * rxx / rx;
                out.rt_sq_over_rx += w * rt * rt / rx;
            } else {
                out.floor_mass_rxx += w * rxx * rxx;
                out.floor_mass_rt += w * rt * rt;
            }
            for (m, &q) in LQ_EXPONENTS.iter().enumerate() {
                lq_t[m] += w * rt.abs().powf(q);
                lq_xx[m] += w * rxx.abs().powf(q);
            }
        }
    }
    for (m, &q) in LQ_EXPONENTS.iter().enumerate() {
        out.lq_rt.push(LqNorm { q, value: lq_t[m].powf(1.0 / q) });
        out.lq_rxx.push(LqNorm { q, value: lq_xx[m].powf(1.0 / q) });
    }
    out.all_finite = [out.rx_cubed, out.rxx_sq_over_rx, out.rt_sq_over_rx, out.moment]
        .iter()
        .chain(out.lq_rt.iter().map(|l| &l.value))
        .chain(out.lq_rxx.iter().map(|l| &l.value))
        .all(|v| v.is_finite());
    Ok(out)
}
