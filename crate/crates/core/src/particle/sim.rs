use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::step::{em_step, girsanov_update, pathwise_cost, tilted_em_step, GirsanovAccumulator, ParticleEnsemble};
use super::tilt::TiltField;
use crate::coefficients::{InitialDistribution, RankCoefficients};
use crate::error::{Error, Result};
use crate::measures::{quantile_init, EmpiricalPath};

/// One simulation run: `N`, step, horizon and the stream to draw from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub dt: f64,
    pub t_end: f64,
    /// Times at which to record the empirical measure; `0` is always kept.
    pub snapshot_times: Vec<f64>,
    pub stream: StreamId,
}

/// Identifies an RNG stream: root seed, experiment tag, `N`, replica.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamId {
    pub root_seed: u64,
    pub tag: String,
    pub n: u64,
    pub replica: u64,
}

impl StreamId {
    pub fn new(root_seed: u64, tag: impl Into<String>, n: usize, replica: u64) -> Self {
        Self {
            root_seed,
            tag: tag.into(),
            n: n as u64,
            replica,
        }
    }

    /// 64-bit key of the stream family (everything but the replica).
    pub fn family_seed(&self) -> u64 {
        let mut s = splitmix64(self.root_seed ^ fnv1a(self.tag.as_bytes()));
        s = splitmix64(s ^ self.n);
        s
    }

    /// ChaCha8 keyed by [`Self::family_seed`], stream number = replica id.
    /// Replicas therefore never share keystream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        let mut s = self.family_seed();
        for chunk in key.chunks_mut(8) {
            s = splitmix64(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.replica);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3))
}

impl SimConfig {
    /// Number of steps and the effective step `T / K`, with `K = round(T/Δt)`.
    pub fn steps(&self) -> (usize, f64) {
        if self.t_end == 0.0 {
            return (0, self.dt);
        }
        let k = (self.t_end / self.dt).round().max(1.0) as usize;
        (k, self.t_end / k as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Invalid("N must be at least 1".into()));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Invalid(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::Invalid(format!("horizon must be nonnegative, got {}", self.t_end)));
        }
        let tol = 1e-9 * (1.0 + self.t_end);
        if let Some(t) = self.snapshot_times.iter().find(|&&t| !(t >= -tol && t <= self.t_end + tol)) {
            return Err(Error::Invalid(format!(
                "snapshot time {t} outside [0, {}]",
                self.t_end
            )));
        }
        Ok(())
    }

    /// Step indices at which snapshots are taken, ascending and unique.
    fn snapshot_steps(&self) -> Vec<usize> {
        let (k, dt) = self.steps();
        let mut idx: Vec<usize> = std::iter::once(0)
            .chain(self.snapshot_times.iter().map(|&t| ((t / dt).round() as usize).min(k)))
            .collect();
        idx.sort_unstable();
        idx.dedup();
        idx
    }
}

/// Result of one run.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub path: EmpiricalPath,
    pub acc: GirsanovAccumulator,
    /// Whether a grid tilt had to be extended beyond its table.
    pub tilt_extended: bool,
}

/// Per-replica summary written by the harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaSummary {
    pub replica: u64,
    pub seed: u64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub cost: f64,
    #[serde(rename = "M_N")]
    pub m_n: f64,
    #[serde(rename = "A_N")]
    pub a_n: f64,
}

impl SimOutput {
    pub fn summary(&self, config: &SimConfig) -> ReplicaSummary {
        ReplicaSummary {
            replica: config.stream.replica,
            seed: config.stream.family_seed(),
            n: config.n,
            t_end: config.t_end,
            cost: pathwise_cost(&self.acc, config.n),
            m_n: self.acc.m,
            a_n: self.acc.a,
        }
    }
}

/// Runs the ensemble from the stratified-quantile start. With a tilt the
/// tilted dynamics are simulated and the change-of-measure statistics
/// relative to the original dynamics are accumulated; without one the
/// accumulator stays zero.
pub fn simulate_path(
    init: &InitialDistribution,
    coeffs: &RankCoefficients,
    config: &SimConfig,
    tilt: Option<&TiltField>,
) -> Result<SimOutput> {
    config.validate()?;
    let start = quantile_init(init, config.n)?;
    let mut ens = ParticleEnsemble::new(start.positions().to_vec(), 0.0, config.stream.rng(), config.stream.replica)?;
    let table = coeffs.rank_table(config.n);
    let (k_total, dt) = config.steps();
    let snaps = config.snapshot_steps();
    let mut snapshots = Vec::with_capacity(snaps.len());
    let mut acc = GirsanovAccumulator::new();
    let mut noise = Vec::with_capacity(config.n);
    let mut next = 0;
    let mut extended = false;
    for k in 0..=k_total {
        if next < snaps.len() && snaps[next] == k {
            ens.set_time(k as f64 * dt);
            snapshots.push(ens.snapshot());
            next += 1;
        }
        if k == k_total {
            break;
        }
        ens.set_time(k as f64 * dt);
        ens.draw_noise(&mut noise);
        match tilt {
            Some(h) => {
                if !extended {
                    let (lo, hi) = minmax(ens.positions());
                    extended = !h.covers(config.t_end, lo, hi);
                }
                girsanov_update(&mut acc, &mut ens, &table, h, dt, &noise)?;
                tilted_em_step(&mut ens, &table, h, dt, &noise)?;
            }
            None => em_step(&mut ens, &table, dt, &noise)?,
        }
    }
    Ok(SimOutput {
        path: EmpiricalPath::new(snapshots)?,
        acc,
        tilt_extended: extended,
    })
}

fn minmax(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::mean_std;
    use rand::RngCore;

    fn config(n: usize, dt: f64, t_end: f64, replica: u64) -> SimConfig {
        SimConfig {
            n,
            dt,
            t_end,
            snapshot_times: vec![t_end],
            stream: StreamId::new(7, "test", n, replica),
        }
    }

    #[test]
    fn zero_horizon_returns_initial_quantiles() {
        let init = InitialDistribution::standard_gaussian();
        let c = RankCoefficients::constant(0.0, 1.0).unwrap();
        let out = simulate_path(&init, &c, &config(5, 0.1, 0.0, 0), None).unwrap();
        assert_eq!(out.path.snapshots().len(), 1);
        assert_eq!(out.path.snapshots()[0], quantile_init(&init, 5).unwrap());
    }

    #[test]
    fn same_stream_is_bit_identical() {
        let init = InitialDistribution::standard_gaussian();
        let c = RankCoefficients::constant(0.2, 1.0).unwrap();
        let cfg = config(50, 0.01, 0.5, 3);
        let a = simulate_path(&init, &c, &cfg, None).unwrap();
        let b = simulate_path(&init, &c, &cfg, None).unwrap();
        assert_eq!(a.path, b.path);
        let other = simulate_path(&init, &c, &config(50, 0.01, 0.5, 4), None).unwrap();
        assert_ne!(a.path, other.path);
    }

    #[test]
    fn streams_differ_across_replicas_tags_and_n() {
        let mut seen = std::collections::HashSet::new();
        for (tag, n, r) in [("a", 10, 0), ("a", 10, 1), ("b", 10, 0), ("a", 11, 0)] {
            let mut rng = StreamId::new(1, tag, n, r).rng();
            assert!(seen.insert(rng.next_u64()));
        }
    }

    // N = 1, b = 0, σ = 1: X(KΔt) ~ N(0, KΔt) exactly under Euler-Maruyama.
    #[test]
    fn single_particle_variance_matches_exact_law() {
        let init = InitialDistribution::new(
            crate::coefficients::InitFamily::Uniform { lo: -1e-12, hi: 1e-12 },
            0.5,
        )
        .unwrap();
        let c = RankCoefficients::constant(0.0, 1.0).unwrap();
        let reps = 10_000;
        let (k, dt) = (20usize, 0.05);
        let finals: Vec<f64> = (0..reps)
            .map(|r| {
                let out = simulate_path(&init, &c, &config(1, dt, k as f64 * dt, r), None).unwrap();
                out.path.snapshots().last().unwrap().positions()[0]
            })
            .collect();
        let (mean, std) = mean_std(&finals);
        let var = std * std;
        let v = k as f64 * dt;
        let n = reps as f64;
        assert!(mean.abs() < 3.0 * (v / n).sqrt(), "mean {mean}");
        assert!((var - v).abs() < 3.0 * v * (2.0 / (n - 1.0)).sqrt(), "var {var}");
    }

    #[test]
    fn heat_flow_variance_grows_as_one_plus_sigma2_t() {
        let init = InitialDistribution::standard_gaussian();
        let c = RankCoefficients::constant(0.0, std::f64::consts::SQRT_2).unwrap();
        let reps = 200;
        let n = 200;
        let vars: Vec<f64> = (0..reps)
            .map(|r| {
                let out = simulate_path(&init, &c, &config(n, 0.01, 1.0, r), None).unwrap();
                let (_, s) = mean_std(out.path.snapshots().last().unwrap().positions());
                s * s
            })
            .collect();
        let (m, s) = mean_std(&vars);
        assert!((m - 3.0).abs() < 3.0 * s / (reps as f64).sqrt() + 0.02, "mean variance {m}");
    }

    #[test]
    fn constant_tilt_cost_is_exact() {
        let init = InitialDistribution::standard_gaussian();
        let c = RankCoefficients::constant(0.0, std::f64::consts::SQRT_2).unwrap();
        let tilt = TiltField::constant(0.5).unwrap();
        for n in [1, 10, 100] {
            let cfg = config(n, 1e-3, 1.0, 0);
            let out = simulate_path(&init, &c, &cfg, Some(&tilt)).unwrap();
            assert!((pathwise_cost(&out.acc, n) - 0.0625).abs() < 1e-12);
            assert!(!out.tilt_extended);
            let s = out.summary(&cfg);
            assert_eq!(s.n, n);
            assert_eq!(s.cost, pathwise_cost(&out.acc, n));
        }
    }

    #[test]
    fn invalid_snapshot_time_rejected() {
        let mut cfg = config(2, 0.1, 1.0, 0);
        cfg.snapshot_times.push(1.5);
        assert!(cfg.validate().is_err());
    }
}
