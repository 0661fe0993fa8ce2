use serde::{Deserialize, Serialize};

use super::functional::Residual;
use crate::coefficients::RankCoefficients;
use crate::error::{Error, Result};
use crate::measures::GridCdfPath;
use crate::particle::TiltField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoverOptions {
    /// The core at time `t` is the connected run of nodes around the density
    /// peak with `R_x >= core_fraction · max_x R_x(t, ·)`.
    pub core_fraction: f64,
}

impl Default for RecoverOptions {
    fn default() -> Self {
        Self { core_fraction: 1e-2 }
    }
}

/// Tilt recovered from a path, with the core interval per time level.
#[derive(Debug, Clone)]
pub struct RecoveredTilt {
    pub tilt: TiltField,
    /// Inclusive node range `[lo, hi]` of the core at each time level.
    pub core: Vec<(usize, usize)>,
    /// Raw `h` values on the grid, constant-extended outside the core.
    pub values: Vec<f64>,
}

impl RecoveredTilt {
    /// `max |h - exact|` over all core nodes.
    pub fn core_error<F: Fn(f64, f64) -> f64>(&self, path: &GridCdfPath, exact: F) -> f64 {
        let (tg, xg) = (path.t_grid(), path.x_grid());
        let mut worst = 0.0f64;
        for (k, &(lo, hi)) in self.core.iter().enumerate() {
            for j in lo..=hi {
                let h = self.values[k * xg.len + j];
                worst = worst.max((h - exact(tg.at(k), xg.at(j))).abs());
            }
        }
        worst
    }
}

/// `h = (R_t - (A(R)R_x)_x) / (A(R) R_x)` on the core, constant outside.
pub fn recover_tilt(path: &GridCdfPath, coeffs: &RankCoefficients, options: &RecoverOptions) -> Result<RecoveredTilt> {
    if path.nx() < 3 {
        return Err(Error::Domain("tilt recovery needs at least 3 x nodes".into()));
    }
    let res = Residual::new(path, coeffs);
    let (nt, nx) = (res.nt(), res.nx());
    let mut values = vec![0.0; nt * nx];
    let mut core = Vec::with_capacity(nt);
    for k in 0..nt {
        let o = k * nx;
        let rx = &res.derivs.r_x[o..o + nx];
        let (peak, max) = rx[1..nx - 1]
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i + 1, v) } else { (bi, bv) });
        if !(max > 0.0) {
            return Err(Error::Domain(format!("empty core at time level {k}: no positive density")));
        }
        let thr = options.core_fraction * max;
        let (mut lo, mut hi) = (peak, peak);
        while lo > 1 && rx[lo - 1] >= thr {
            lo -= 1;
        }
        while hi < nx - 2 && rx[hi + 1] >= thr {
            hi += 1;
        }
        for j in lo..=hi {
            let i = o + j;
            values[i] = (res.derivs.r_t[i] - res.flux_div[i]) / (res.a[i] * rx[j]);
        }
        let (left, right) = (values[o + lo], values[o + hi]);
        values[o..o + lo].iter_mut().for_each(|v| *v = left);
        values[o + hi + 1..o + nx].iter_mut().for_each(|v| *v = right);
        core.push((lo, hi));
    }
    let tilt = TiltField::from_grid(path.t_grid(), path.x_grid(), values.clone())?;
    Ok(RecoveredTilt { tilt, core, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::InitialDistribution;
    use crate::pde::{solve_forward, solve_tilted, PdeGrid, SolverOptions};
    use std::f64::consts::SQRT_2;

    fn gauss() -> InitialDistribution {
        InitialDistribution::standard_gaussian()
    }

    fn grid() -> PdeGrid {
        PdeGrid::new(-8.0, 8.0, 0.02, 2e-4, 1.0).unwrap().with_save_every(50).unwrap()
    }

    #[test]
    fn heat_flow_has_zero_tilt() {
        let c = RankCoefficients::constant(0.0, SQRT_2).unwrap();
        let sol = solve_forward(&c, &gauss(), &grid(), &SolverOptions::default()).unwrap();
        let rec = recover_tilt(&sol.path, &c, &RecoverOptions::default()).unwrap();
        let err = rec.core_error(&sol.path, |_, _| 0.0);
        assert!(err < 1e-2, "max |h| = {err}");
    }

    #[test]
    fn constant_tilt_round_trip() {
        let c = RankCoefficients::constant(0.0, SQRT_2).unwrap();
        let h = TiltField::constant(0.5).unwrap();
        let sol = solve_tilted(&c, &gauss(), &h, &grid(), &SolverOptions::default()).unwrap();
        let rec = recover_tilt(&sol.path, &c, &RecoverOptions::default()).unwrap();
        let err = rec.core_error(&sol.path, |_, _| 0.5);
        assert!(err < 0.02 * 0.5, "max |h - h0| = {err}");
        let again = solve_tilted(&c, &gauss(), &rec.tilt, &grid(), &SolverOptions::default()).unwrap();
        let gap = sol
            .path
            .values()
            .iter()
            .zip(again.path.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(gap < 5e-3, "round trip gap {gap}");
    }

    #[test]
    fn forward_drift_recovers_minus_b_over_a() {
        let c = RankCoefficients::constant(0.3, SQRT_2).unwrap();
        let sol = solve_forward(&c, &gauss(), &grid(), &SolverOptions::default()).unwrap();
        let rec = recover_tilt(&sol.path, &c, &RecoverOptions::default()).unwrap();
        let err = rec.core_error(&sol.path, |_, _| -0.3);
        assert!(err < 0.02 * 0.3, "max |h + b/A| = {err}");
    }

    #[test]
    fn empty_core_is_domain_error() {
        let tg = crate::measures::UniformGrid::new(0.0, 1.0, 2).unwrap();
        let xg = crate::measures::UniformGrid::new(0.0, 1.0, 4).unwrap();
        let p = GridCdfPath::new(tg, xg, vec![0.0; 8]).unwrap();
        let c = RankCoefficients::constant(0.0, 1.0).unwrap();
        assert!(matches!(recover_tilt(&p, &c, &RecoverOptions::default()), Err(Error::Domain(_))));
    }
}
