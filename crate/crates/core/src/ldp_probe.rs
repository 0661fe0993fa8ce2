//! Experiment drivers tying the particle system, the limit equation and the
//! rate functional together: law-of-large-numbers convergence, tilted cost
//! against `J`, and ball probabilities estimated naively and by importance
//! sampling.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{InitialDistribution, RankCoefficients};
use crate::error::{Error, Result};
use crate::measures::{path_distance, GridCdfPath};
use crate::numerics::{mean_std, median};
use crate::particle::{pathwise_cost, simulate_path, SimConfig, SimOutput, StreamId, TiltField};
use crate::pde::{solve_forward, solve_tilted, PdeGrid, SolveReport, SolverOptions};
use crate::rate::{rate_functional, tilt_cost, GridSummary, RateOptions};

/// Everything an experiment needs besides its kind-specific options.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub coeffs: RankCoefficients,
    pub init: InitialDistribution,
    pub grid: PdeGrid,
    pub solver: SolverOptions,
    pub n_list: Vec<usize>,
    pub sim_dt: f64,
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
    pub replicas: usize,
    pub seed: u64,
    pub tilt: Option<TiltField>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return Err(Error::Invalid("N list must be non-empty with positive entries".into()));
        }
        if self.replicas == 0 {
            return Err(Error::Invalid("replica count must be positive".into()));
        }
        if !(self.t_end > 0.0) {
            return Err(Error::Invalid(format!("horizon must be positive, got {}", self.t_end)));
        }
        if (self.grid.t_end - self.t_end).abs() > 1e-12 * self.t_end.max(1.0) {
            return Err(Error::Invalid(format!(
                "PDE horizon {} differs from simulation horizon {}",
                self.grid.t_end, self.t_end
            )));
        }
        self.grid.validate()
    }

    pub fn sim_config(&self, tag: &str, n: usize, replica: u64) -> SimConfig {
        SimConfig {
            n,
            dt: self.sim_dt,
            t_end: self.t_end,
            snapshot_times: self.snapshot_times.clone(),
            stream: StreamId::new(self.seed, tag, n, replica),
        }
    }

    /// Runs `replicas` independent ensembles in parallel, returned in
    /// replica order.
    pub fn run_ensembles(&self, tag: &str, n: usize, tilt: Option<&TiltField>) -> Result<Vec<SimOutput>> {
        (0..self.replicas as u64)
            .into_par_iter()
            .map(|r| {
                simulate_path(&self.init, &self.coeffs, &self.sim_config(tag, n, r), tilt)
                    .map_err(|e| contextualise(e, &format!("{tag} run N = {n}, replica {r}")))
            })
            .collect()
    }
}

fn contextualise(e: Error, ctx: &str) -> Error {
    match e {
        Error::Numerical(m) => Error::Numerical(format!("{ctx}: {m}")),
        Error::Domain(m) => Error::Domain(format!("{ctx}: {m}")),
        Error::Invalid(m) => Error::Invalid(format!("{ctx}: {m}")),
        other => other,
    }
}

/// Description of the limit path an experiment compares against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetInfo {
    pub equation: String,
    pub grid: GridSummary,
    pub solve: SolveReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlnEntry {
    #[serde(rename = "N")]
    pub n: usize,
    pub replicas: usize,
    pub median_distance: f64,
    pub max_distance: f64,
    pub mean_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceTrace {
    #[serde(rename = "N")]
    pub n: usize,
    pub replica: u64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlnReport {
    pub target: TargetInfo,
    pub seed: u64,
    /// Sorted by `N`.
    pub entries: Vec<LlnEntry>,
    #[serde(skip)]
    pub traces: Vec<DistanceTrace>,
}

impl LlnReport {
    /// `N,replica,distance` rows.
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "N,replica,distance")?;
        for t in &self.traces {
            writeln!(out, "{},{},{}", t.n, t.replica, t.distance)?;
        }
        Ok(())
    }

    pub fn medians_strictly_decreasing(&self) -> bool {
        self.entries.windows(2).all(|w| w[1].median_distance < w[0].median_distance)
    }
}

fn sorted_unique(n_list: &[usize]) -> Vec<usize> {
    let mut v = n_list.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// Untilted ensembles for each `N` against the solution of the limit
/// equation, measured by `sup_t d_L`.
pub fn run_lln(scenario: &Scenario) -> Result<LlnReport> {
    scenario.validate()?;
    let target = solve_forward(&scenario.coeffs, &scenario.init, &scenario.grid, &scenario.solver)?;
    let mut entries = Vec::new();
    let mut traces = Vec::new();
    for n in sorted_unique(&scenario.n_list) {
        let runs = scenario.run_ensembles("lln", n, None)?;
        let d: Vec<f64> = runs
            .par_iter()
            .map(|run| path_distance(&run.path, &target.path).map(|d| d.sup))
            .collect::<Result<_>>()?;
        traces.extend(d.iter().enumerate().map(|(r, &distance)| DistanceTrace {
            n,
            replica: r as u64,
            distance,
        }));
        entries.push(LlnEntry {
            n,
            replicas: scenario.replicas,
            median_distance: median(&d),
            max_distance: d.iter().copied().fold(0.0, f64::max),
            mean_distance: mean_std(&d).0,
        });
    }
    Ok(LlnReport {
        target: TargetInfo {
            equation: "forward".into(),
            grid: GridSummary::of(&target.path),
            solve: target.report,
        },
        seed: scenario.seed,
        entries,
        traces,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorMode {
    Naive,
    Importance,
}

/// Ensemble runs together with the tilt that generated them, if any.
#[derive(Debug, Clone)]
pub struct RunSet {
    pub tilt: Option<TiltField>,
    pub runs: Vec<SimOutput>,
}

/// `-(1/N) log P̂` with its delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegLogRate {
    pub value: f64,
    pub std_error: f64,
    /// The value is only a lower bound (zero hits, rule-of-three interval).
    pub lower_bound_only: bool,
}

/// Ball probability estimate with 1σ error bar. With zero hits the estimate
/// is the interval `[0, 3/n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallEstimate {
    pub mode: EstimatorMode,
    pub delta: f64,
    pub runs: usize,
    pub hits: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub interval: Option<(f64, f64)>,
}

impl BallEstimate {
    pub fn neg_log_rate(&self, n: usize) -> NegLogRate {
        let nf = n as f64;
        match self.interval {
            Some((_, hi)) => NegLogRate {
                value: (0.0 - hi.ln()) / nf,
                std_error: f64::NAN,
                lower_bound_only: true,
            },
            None => NegLogRate {
                value: (0.0 - self.estimate.ln()) / nf,
                std_error: self.std_error / (nf * self.estimate),
                lower_bound_only: false,
            },
        }
    }
}

/// One run reduced to what the estimators need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSample {
    pub distance: f64,
    pub log_weight: f64,
}

/// Estimates `P(ρ^N ∈ B(center, δ))` from `runs`. Naive mode needs runs of
/// the original dynamics (or of a tilt whose weights are all one);
/// importance mode needs tilted runs.
pub fn estimate_ball_probability(
    center: &GridCdfPath,
    delta: f64,
    runs: &RunSet,
    mode: EstimatorMode,
) -> Result<BallEstimate> {
    let samples: Vec<RunSample> = runs
        .runs
        .par_iter()
        .map(|r| {
            Ok(RunSample {
                distance: path_distance(&r.path, center)?.sup,
                log_weight: r.acc.log_weight(),
            })
        })
        .collect::<Result<_>>()?;
    estimate_from_samples(&samples, delta, runs.tilt.is_some(), mode)
}

/// Estimator on precomputed samples; `tilted` says whether they came from
/// tilted dynamics.
pub fn estimate_from_samples(samples: &[RunSample], delta: f64, tilted: bool, mode: EstimatorMode) -> Result<BallEstimate> {
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("ball radius must be positive, got {delta}")));
    }
    if samples.is_empty() {
        return Err(Error::Domain("no runs to estimate from".into()));
    }
    match mode {
        EstimatorMode::Importance if !tilted => {
            return Err(Error::Domain("importance sampling needs runs generated under a tilt".into()))
        }
        EstimatorMode::Naive if tilted && samples.iter().any(|s| s.log_weight != 0.0) => {
            return Err(Error::Domain(
                "naive estimation needs runs of the original dynamics; these runs carry non-unit weights".into(),
            ))
        }
        _ => {}
    }
    let n = samples.len();
    let nf = n as f64;
    // d ≤ 1, so any radius above 1 is the whole space.
    if delta > 1.0 {
        return Ok(BallEstimate {
            mode,
            delta,
            runs: n,
            hits: n,
            estimate: 1.0,
            std_error: 0.0,
            interval: None,
        });
    }
    let hit: Vec<bool> = samples.iter().map(|s| s.distance < delta).collect();
    let hits = hit.iter().filter(|&&h| h).count();
    if hits == 0 {
        return Ok(BallEstimate {
            mode,
            delta,
            runs: n,
            hits,
            estimate: 0.0,
            std_error: 0.0,
            interval: Some((0.0, (3.0 / nf).min(1.0))),
        });
    }
    let (estimate, std_error) = match mode {
        EstimatorMode::Naive => {
            let p = hits as f64 / nf;
            (p, (p * (1.0 - p) / nf).sqrt())
        }
        EstimatorMode::Importance => {
            // Scaled by the largest hit weight to avoid overflow.
            let m = samples
                .iter()
                .zip(&hit)
                .filter(|(_, &h)| h)
                .map(|(s, _)| s.log_weight)
                .fold(f64::NEG_INFINITY, f64::max);
            let (mut s1, mut s2) = (0.0, 0.0);
            for (s, &h) in samples.iter().zip(&hit) {
                if h {
                    let w = (s.log_weight - m).exp();
                    s1 += w;
                    s2 += w * w;
                }
            }
            let scale = m.exp();
            let mean = s1 / nf;
            let var = if n > 1 { (s2 / nf - mean * mean).max(0.0) * nf / (nf - 1.0) } else { 0.0 };
            (scale * mean, scale * (var / nf).sqrt())
        }
    };
    Ok(BallEstimate {
        mode,
        delta,
        runs: n,
        hits,
        estimate,
        std_error,
        interval: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdpOptions {
    /// Explicit radii; when empty a single radius of
    /// `delta_factor × median Q-distance at the largest N` is used.
    pub deltas: Vec<f64>,
    pub delta_factor: f64,
    /// Also run untilted ensembles for the naive estimator.
    pub naive: bool,
}

impl Default for LdpOptions {
    fn default() -> Self {
        Self {
            deltas: Vec::new(),
            delta_factor: 2.0,
            naive: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaEstimates {
    pub delta: f64,
    pub naive: Option<BallEstimate>,
    pub importance: BallEstimate,
    pub naive_neg_log: Option<NegLogRate>,
    pub importance_neg_log: NegLogRate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdpEntry {
    #[serde(rename = "N")]
    pub n: usize,
    pub replicas: usize,
    pub cost_mean: f64,
    pub cost_std: f64,
    /// Median `sup_t d_L` of the tilted runs to the target.
    pub q_median_distance: f64,
    pub estimates: Vec<DeltaEstimates>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostTrace {
    #[serde(rename = "N")]
    pub n: usize,
    pub replica: u64,
    pub cost: f64,
    pub hit: bool,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdpReport {
    pub target: TargetInfo,
    pub tilt_h_max: f64,
    pub tilt_lipschitz_x: f64,
    pub tilt_lipschitz_t: f64,
    #[serde(rename = "J")]
    pub j: f64,
    /// `½∫∫((hA + b)/σ)² dγ dt` evaluated on the target.
    pub j_tilt_formula: f64,
    pub deltas: Vec<f64>,
    pub seed: u64,
    pub entries: Vec<LdpEntry>,
    /// Hits refer to the first radius.
    #[serde(skip)]
    pub traces: Vec<CostTrace>,
}

impl LdpReport {
    /// `N,replica,cost,hit,weight` rows.
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "N,replica,cost,hit,weight")?;
        for t in &self.traces {
            writeln!(out, "{},{},{},{},{}", t.n, t.replica, t.cost, u8::from(t.hit), t.weight)?;
        }
        Ok(())
    }
}

/// Tilted ensembles against the tilted limit path: cost `½A_N(T)/N` versus
/// `J`, and ball probabilities by both estimators.
pub fn run_ldp(scenario: &Scenario, options: &LdpOptions) -> Result<LdpReport> {
    scenario.validate()?;
    let tilt = scenario
        .tilt
        .as_ref()
        .ok_or_else(|| Error::Invalid("the ldp experiment needs a tilt".into()))?;
    let target = solve_tilted(&scenario.coeffs, &scenario.init, tilt, &scenario.grid, &scenario.solver)?;
    let rate = rate_functional(&target.path, &scenario.coeffs, &RateOptions::default());
    let j_formula = tilt_cost(&target.path, &scenario.coeffs, tilt);
    let ns = sorted_unique(&scenario.n_list);

    let samples_for = |runs: &[SimOutput]| -> Result<Vec<RunSample>> {
        runs.par_iter()
            .map(|r| {
                Ok(RunSample {
                    distance: path_distance(&r.path, &target.path)?.sup,
                    log_weight: r.acc.log_weight(),
                })
            })
            .collect()
    };

    struct PerN {
        n: usize,
        q: Vec<RunSample>,
        costs: Vec<f64>,
        p: Option<Vec<RunSample>>,
    }
    let mut per_n = Vec::with_capacity(ns.len());
    for &n in &ns {
        let q_runs = scenario.run_ensembles("ldp-q", n, Some(tilt))?;
        let costs = q_runs.iter().map(|r| pathwise_cost(&r.acc, n)).collect();
        let q = samples_for(&q_runs)?;
        drop(q_runs);
        let p = if options.naive {
            Some(samples_for(&scenario.run_ensembles("ldp-p", n, None)?)?)
        } else {
            None
        };
        per_n.push(PerN { n, q, costs, p });
    }

    let deltas = if options.deltas.is_empty() {
        let last = per_n.last().expect("non-empty N list");
        let d: Vec<f64> = last.q.iter().map(|s| s.distance).collect();
        vec![options.delta_factor * median(&d)]
    } else {
        options.deltas.clone()
    };
    if let Some(bad) = deltas.iter().find(|d| !(**d > 0.0)) {
        return Err(Error::Invalid(format!("ball radius must be positive, got {bad}")));
    }

    let mut entries = Vec::with_capacity(per_n.len());
    let mut traces = Vec::new();
    for pn in &per_n {
        let mut estimates = Vec::with_capacity(deltas.len());
        for &delta in &deltas {
            let importance = estimate_from_samples(&pn.q, delta, true, EstimatorMode::Importance)?;
            let naive = match &pn.p {
                Some(p) => Some(estimate_from_samples(p, delta, false, EstimatorMode::Naive)?),
                None => None,
            };
            estimates.push(DeltaEstimates {
                delta,
                naive_neg_log: naive.as_ref().map(|e| e.neg_log_rate(pn.n)),
                importance_neg_log: importance.neg_log_rate(pn.n),
                naive,
                importance,
            });
        }
        for (r, (s, &cost)) in pn.q.iter().zip(&pn.costs).enumerate() {
            traces.push(CostTrace {
                n: pn.n,
                replica: r as u64,
                cost,
                hit: s.distance < deltas[0],
                weight: s.log_weight.exp(),
            });
        }
        let (cost_mean, cost_std) = mean_std(&pn.costs);
        let q_d: Vec<f64> = pn.q.iter().map(|s| s.distance).collect();
        entries.push(LdpEntry {
            n: pn.n,
            replicas: scenario.replicas,
            cost_mean,
            cost_std,
            q_median_distance: median(&q_d),
            estimates,
        });
    }
    Ok(LdpReport {
        target: TargetInfo {
            equation: "tilted".into(),
            grid: GridSummary::of(&target.path),
            solve: target.report,
        },
        tilt_h_max: tilt.h_max(),
        tilt_lipschitz_x: tilt.lipschitz_x(),
        tilt_lipschitz_t: tilt.lipschitz_t(),
        j: rate.j,
        j_tilt_formula: j_formula,
        deltas,
        seed: scenario.seed,
        entries,
        traces,
    })
}
