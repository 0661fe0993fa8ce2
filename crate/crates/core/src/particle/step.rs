use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::rank::Ranker;
use super::tilt::TiltField;
use crate::coefficients::RankTable;
use crate::error::{Error, Result};
use crate::measures::EmpiricalCdf;

/// `N` identity-indexed particles with their RNG stream.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    positions: Vec<f64>,
    time: f64,
    rng: ChaCha8Rng,
    replica: u64,
    ranker: Ranker,
    ranks_fresh: bool,
}

impl ParticleEnsemble {
    pub fn new(positions: Vec<f64>, time: f64, rng: ChaCha8Rng, replica: u64) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::Invalid("ensemble needs at least one particle".into()));
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("ensemble positions must be finite".into()));
        }
        let ranker = Ranker::new(positions.len());
        Ok(Self {
            positions,
            time,
            rng,
            replica,
            ranker,
            ranks_fresh: false,
        })
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

    pub fn replica(&self) -> u64 {
        self.replica
    }

    /// Overrides the clock, e.g. to snap accumulated `t += Δt` to `kΔt`.
    pub fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    /// Zero-based ranks of the current positions.
    pub fn ranks(&mut self) -> &[u32] {
        self.refresh_ranks();
        self.ranker.rank_of()
    }

    /// Fills `buf` with `N` standard normals from this ensemble's stream.
    pub fn draw_noise(&mut self, buf: &mut Vec<f64>) {
        buf.clear();
        let n = self.positions.len();
        buf.extend((0..n).map(|_| -> f64 { StandardNormal.sample(&mut self.rng) }));
    }

    pub fn snapshot(&self) -> EmpiricalCdf {
        EmpiricalCdf::new(self.positions.clone(), self.time).expect("positions are finite and nonempty")
    }

    fn refresh_ranks(&mut self) {
        if !self.ranks_fresh {
            self.ranker.update(&self.positions);
            self.ranks_fresh = true;
        }
    }

    fn check(&self, table: &RankTable, dt: f64, noise: &[f64]) -> Result<()> {
        let n = self.positions.len();
        if !(dt > 0.0) {
            return Err(Error::Domain(format!("time step must be positive, got {dt}")));
        }
        if noise.len() != n || table.b.len() != n {
            return Err(Error::Domain(format!(
                "step inputs disagree on N: ensemble {n}, noise {}, rank table {}",
                noise.len(),
                table.b.len()
            )));
        }
        Ok(())
    }

    /// Applies `X_i += drift_i + σ(u_i)√Δt ξ_i` with `drift_i` from `drift`.
    fn advance<F: Fn(usize, usize) -> f64>(&mut self, table: &RankTable, dt: f64, noise: &[f64], drift: F) -> Result<()> {
        self.refresh_ranks();
        let sq = dt.sqrt();
        let ranks = self.ranker.rank_of();
        for (i, x) in self.positions.iter_mut().enumerate() {
            let r = ranks[i] as usize;
            *x += drift(i, r) + table.sigma[r] * sq * noise[i];
        }
        self.ranks_fresh = false;
        if let Some(i) = self.positions.iter().position(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!(
                "replica {}: particle {i} became non-finite at t = {}",
                self.replica, self.time
            )));
        }
        self.time += dt;
        Ok(())
    }
}

/// One Euler-Maruyama step under the original dynamics, coefficients taken
/// at the pre-step rank fractions.
pub fn em_step(ens: &mut ParticleEnsemble, table: &RankTable, dt: f64, noise: &[f64]) -> Result<()> {
    ens.check(table, dt, noise)?;
    ens.advance(table, dt, noise, |_, r| table.b[r] * dt)
}

/// One Euler-Maruyama step under the tilted dynamics
/// `dX = -½ h σ² dt + σ dW`.
pub fn tilted_em_step(
    ens: &mut ParticleEnsemble,
    table: &RankTable,
    tilt: &TiltField,
    dt: f64,
    noise: &[f64],
) -> Result<()> {
    ens.check(table, dt, noise)?;
    let t = ens.time;
    let xs = ens.positions.clone();
    ens.advance(table, dt, noise, |i, r| {
        let s = table.sigma[r];
        -0.5 * tilt.eval(t, xs[i]) * s * s * dt
    })
}

/// Running change-of-measure statistics. `A_N` is nondecreasing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GirsanovAccumulator {
    pub m: f64,
    pub a: f64,
    pub steps: u64,
}

impl GirsanovAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// `log dP/dQ = M_N - ½ A_N` on the discrete skeleton.
    pub fn log_weight(&self) -> f64 {
        self.m - 0.5 * self.a
    }

    /// Combines accumulations over consecutive time intervals.
    pub fn merge(&self, later: &GirsanovAccumulator) -> GirsanovAccumulator {
        GirsanovAccumulator {
            m: self.m + later.m,
            a: self.a + later.a,
            steps: self.steps + later.steps,
        }
    }
}

/// Adds one step's contribution with `g_i = ½ h σ(u_i) + b(u_i)/σ(u_i)`,
/// using the same noise the step will use. Call before advancing.
pub fn girsanov_update(
    acc: &mut GirsanovAccumulator,
    ens: &mut ParticleEnsemble,
    table: &RankTable,
    tilt: &TiltField,
    dt: f64,
    noise: &[f64],
) -> Result<()> {
    ens.check(table, dt, noise)?;
    ens.refresh_ranks();
    let sq = dt.sqrt();
    let t = ens.time;
    let ranks = ens.ranker.rank_of();
    let (mut da, mut dm) = (0.0, 0.0);
    for (i, &x) in ens.positions.iter().enumerate() {
        let r = ranks[i] as usize;
        let s = table.sigma[r];
        let g = 0.5 * tilt.eval(t, x) * s + table.b[r] / s;
        da += g * g;
        dm += g * noise[i];
    }
    acc.a += da * dt;
    acc.m += dm * sq;
    acc.steps += 1;
    Ok(())
}

/// `½ A_N(T) / N`.
pub fn pathwise_cost(acc: &GirsanovAccumulator, n: usize) -> f64 {
    0.5 * acc.a / n as f64
}
