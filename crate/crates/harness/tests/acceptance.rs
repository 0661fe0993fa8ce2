//! End-to-end acceptance criteria. Each criterion prints one `PASS` or
//! `FAIL` line; the process exits non-zero if any fails.

use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rankflow::config::{parse_config, ExperimentKind};
use rankflow::run_experiment;
use rankflow_core::coefficients::{InitialDistribution, RankCoefficients};
use rankflow_core::ldp_probe::{run_ldp, run_lln, LdpOptions, Scenario};
use rankflow_core::measures::{
    bounded_lipschitz_distance, ks_distance, levy_distance, Cdf, DiscreteCdf, EmpiricalCdf, GridCdfPath, GridSlice,
    UniformGrid,
};
use rankflow_core::numerics::norm_cdf;
use rankflow_core::particle::{pathwise_cost, TiltField};
use rankflow_core::pde::{refinement_study, solve_forward, solve_tilted, sup_error, PdeGrid, SolverOptions};
use rankflow_core::rate::{
    rate_functional, recover_tilt, variational_rate, RateOptions, RecoverOptions, TestBasis, VariationalOptions,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_s: u64, detail: String) -> Outcome {
    check(
        elapsed <= Duration::from_secs(limit_s),
        format!("{detail}; {:.1} s (limit {limit_s} s)", elapsed.as_secs_f64()),
    )
}

fn heat() -> RankCoefficients {
    RankCoefficients::constant(0.0, SQRT_2).unwrap()
}

fn gauss() -> InitialDistribution {
    InitialDistribution::standard_gaussian()
}

fn base_grid() -> PdeGrid {
    PdeGrid::new(-8.0, 8.0, 0.02, 2e-4, 1.0).unwrap().with_save_every(50).unwrap()
}

fn heat_exact(t: f64, x: f64) -> f64 {
    norm_cdf(x / (1.0 + 2.0 * t).sqrt())
}

fn scenario(n_list: Vec<usize>, replicas: usize, tilt: Option<TiltField>) -> Scenario {
    Scenario {
        coeffs: heat(),
        init: gauss(),
        grid: base_grid(),
        solver: SolverOptions::default(),
        n_list,
        sim_dt: 1e-3,
        t_end: 1.0,
        snapshot_times: (0..=10).map(|k| k as f64 / 10.0).collect(),
        replicas,
        seed: 20240611,
        tilt,
    }
}

fn c1_heat_oracle() -> Outcome {
    let start = Instant::now();
    let study = refinement_study(
        &base_grid(),
        2,
        |g| Ok(solve_forward(&heat(), &gauss(), g, &SolverOptions::default())?.path),
        heat_exact,
    )
    .map_err(|e| e.to_string())?;
    let (e0, e1) = (study.sup_error[0], study.sup_error[1]);
    let detail = format!("sup error {e0:.2e} at dx = 0.02, {e1:.2e} at dx = 0.01, reduction {:.2}x", e0 / e1);
    check(e0 <= 5e-3 && e0 / e1 >= 3.0, detail.clone())?;
    within(start.elapsed(), 30, detail)
}

fn c2_rate_zero() -> Outcome {
    let opts = SolverOptions::default();
    let coarse = solve_forward(&heat(), &gauss(), &base_grid(), &opts).map_err(|e| e.to_string())?;
    let fine = solve_forward(&heat(), &gauss(), &base_grid().refined(), &opts).map_err(|e| e.to_string())?;
    let j0 = rate_functional(&coarse.path, &heat(), &RateOptions::default()).j;
    let j1 = rate_functional(&fine.path, &heat(), &RateOptions::default()).j;
    check(j0 <= 1e-3 && j1 < j0, format!("J = {j0:.3e} at dx = 0.02, {j1:.3e} at dx = 0.01"))
}

fn drifted_path(c: f64) -> GridCdfPath {
    let tg = UniformGrid::spanning(0.0, 1.0, 0.02).unwrap();
    let xg = UniformGrid::spanning(-8.0, 8.0, 0.02).unwrap();
    GridCdfPath::from_fn(tg, xg, |t, x| norm_cdf((x - c * t) / (1.0 + 2.0 * t).sqrt())).unwrap()
}

fn c3_closed_form_rate() -> Outcome {
    let j = rate_functional(&drifted_path(0.5), &heat(), &RateOptions::default()).j;
    let rel = (j - 0.0625).abs() / 0.0625;
    check(rel <= 0.02, format!("J = {j:.6} vs 0.0625, relative error {:.2}%", 100.0 * rel))
}

fn c4_tilt_triple() -> Outcome {
    let start = Instant::now();
    let h0 = 0.5;
    let tilt = TiltField::constant(h0).unwrap();
    let sol = solve_tilted(&heat(), &gauss(), &tilt, &base_grid(), &SolverOptions::default()).map_err(|e| e.to_string())?;
    let err_a = sup_error(&sol.path, |t, x| norm_cdf((x + h0 * t) / (1.0 + 2.0 * t).sqrt()));
    let rec = recover_tilt(&sol.path, &heat(), &RecoverOptions::default()).map_err(|e| e.to_string())?;
    let err_b = rec.core_error(&sol.path, |_, _| h0) / h0;
    let sc = scenario(vec![5000], 20, Some(tilt.clone()));
    let runs = sc.run_ensembles("acceptance-c4", 5000, Some(&tilt)).map_err(|e| e.to_string())?;
    let costs: Vec<f64> = runs.iter().map(|r| pathwise_cost(&r.acc, 5000)).collect();
    let mean = costs.iter().sum::<f64>() / costs.len() as f64;
    let bias = (mean - 0.0625).abs() / 0.0625;
    let detail = format!(
        "(a) sup error {err_a:.2e}; (b) core error {:.2}%; (c) cost {mean:.6}, bias {:.3}%",
        100.0 * err_b,
        100.0 * bias
    );
    check(err_a <= 5e-3 && err_b <= 0.02 && bias <= 0.01, detail.clone())?;
    within(start.elapsed(), 120, detail)
}

fn c5_variational() -> Outcome {
    let path = drifted_path(0.5);
    let j = rate_functional(&path, &heat(), &RateOptions::default()).j;
    let basis = TestBasis::default_for(&path, 2);
    let mut values = Vec::new();
    for n in [1, 4, 16, 64, basis.len()] {
        let n = n.min(basis.len());
        let b = basis.prefix(n).map_err(|e| e.to_string())?;
        let r = variational_rate(&path, &heat(), &b, &VariationalOptions::default()).map_err(|e| e.to_string())?;
        values.push(r.value);
    }
    let last = *values.last().unwrap();
    let nested = values.windows(2).all(|w| w[1] >= w[0] - 1e-12);
    let bounded = values.iter().all(|&v| v <= j + 1e-3);
    check(
        last >= 0.9 * j && bounded && nested,
        format!("value {last:.6} = {:.1}% of J = {j:.6}; nesting {values:.5?}", 100.0 * last / j),
    )
}

fn c6_lln_trend() -> Outcome {
    let start = Instant::now();
    let rep = run_lln(&scenario(vec![250, 1000, 4000], 20, None)).map_err(|e| e.to_string())?;
    let medians: Vec<f64> = rep.entries.iter().map(|e| e.median_distance).collect();
    let detail = format!("medians {medians:.4?} at N = 250, 1000, 4000");
    check(rep.medians_strictly_decreasing() && medians[2] <= 0.05, detail.clone())?;
    within(start.elapsed(), 300, detail)
}

/// Whether `F(x-ε)-ε ≤ G(x) ≤ F(x+ε)+ε`, probed just left and right of
/// every point where either side can change and at the midpoints between.
fn sandwich(f: &AnyCdf, g: &AnyCdf, eps: f64) -> bool {
    let mut pts: Vec<f64> = g.breakpoints();
    for b in f.breakpoints() {
        pts.extend([b - eps, b + eps]);
    }
    pts.sort_by(f64::total_cmp);
    let mids: Vec<f64> = pts.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    pts.extend(mids);
    let (tau, tol) = (1e-10, 1e-9);
    pts.iter().flat_map(|&x| [x - tau, x, x + tau]).all(|x| {
        let gx = g.eval(x);
        gx >= f.eval(x - eps) - eps - tol && gx <= f.eval(x + eps) + eps + tol
    })
}

/// Smallest ε on a 1e-7 lattice satisfying the sandwich: a coarse scan
/// brackets the threshold, a fine scan resolves it.
fn levy_scan(f: &AnyCdf, g: &AnyCdf) -> f64 {
    let coarse = 1e-3;
    let mut k = 0u32;
    while !sandwich(f, g, k as f64 * coarse) {
        k += 1;
    }
    if k == 0 {
        return 0.0;
    }
    let lo = (k - 1) as f64 * coarse;
    let fine = 1e-7;
    let mut m = 1u32;
    while !sandwich(f, g, lo + m as f64 * fine) {
        m += 1;
    }
    lo + m as f64 * fine
}

enum AnyCdf {
    Steps(EmpiricalCdf),
    Linear(GridSlice<'static>),
}

impl Cdf for AnyCdf {
    fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Steps(c) => c.eval(x),
            Self::Linear(c) => c.eval(x),
        }
    }

    fn eval_left(&self, x: f64) -> f64 {
        match self {
            Self::Steps(c) => c.eval_left(x),
            Self::Linear(c) => c.eval_left(x),
        }
    }

    fn push_breakpoints(&self, out: &mut Vec<f64>) {
        match self {
            Self::Steps(c) => c.push_breakpoints(out),
            Self::Linear(c) => c.push_breakpoints(out),
        }
    }

    fn edge_mass(&self) -> f64 {
        match self {
            Self::Steps(c) => c.edge_mass(),
            Self::Linear(c) => c.edge_mass(),
        }
    }
}

fn random_cdf(rng: &mut ChaCha8Rng) -> AnyCdf {
    if rng.random_bool(0.5) {
        let n = rng.random_range(1..40);
        let pos = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        AnyCdf::Steps(EmpiricalCdf::new(pos, 0.0).unwrap())
    } else {
        let nx = rng.random_range(3..30);
        let mut v: Vec<f64> = (0..nx).map(|_| rng.random::<f64>()).collect();
        v.sort_by(f64::total_cmp);
        v[0] = 0.0;
        v[nx - 1] = 1.0;
        AnyCdf::Linear(GridSlice::new(rng.random_range(-2.0..0.0), rng.random_range(0.05..0.3), v.into()))
    }
}

fn c7_metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut worst, mut ks_ok) = (0.0f64, true);
    for _ in 0..100 {
        let (f, g) = (random_cdf(&mut rng), random_cdf(&mut rng));
        let d = levy_distance(&f, &g);
        worst = worst.max((d - levy_scan(&f, &g)).abs());
        ks_ok &= d <= ks_distance(&f, &g) + 1e-9;
    }
    let (p0, p5) = (DiscreteCdf::point_mass(0.0), DiscreteCdf::point_mass(0.5));
    let dl = levy_distance(&p0, &p5);
    let dbl = bounded_lipschitz_distance(&p0, &p5).distance;
    check(
        worst <= 1e-6 && ks_ok && (dl - 0.5).abs() <= 1e-9 && (dbl - 0.4).abs() <= 1e-9,
        format!("max |d_L - scan| = {worst:.1e} over 100 pairs; d_L(δ0, δ0.5) = {dl}; d_BL = {dbl}; d_L ≤ d_KS: {ks_ok}"),
    )
}

fn c8_girsanov_n1() -> Outcome {
    let tilt = TiltField::constant(0.5).unwrap();
    let mut sc = scenario(vec![1], 100_000, Some(tilt.clone()));
    sc.sim_dt = 1e-2;
    sc.snapshot_times = vec![0.0, 1.0];
    let runs = sc.run_ensembles("acceptance-c8", 1, Some(&tilt)).map_err(|e| e.to_string())?;
    let start_ok = runs.iter().all(|r| r.path.snapshots()[0].positions()[0] == 0.0);
    let terms: Vec<f64> = runs
        .iter()
        .map(|r| {
            let x = r.path.snapshots().last().unwrap().positions()[0];
            if x > 0.0 {
                r.acc.log_weight().exp()
            } else {
                0.0
            }
        })
        .collect();
    let n = terms.len() as f64;
    let mean = terms.iter().sum::<f64>() / n;
    let var = terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    check(
        start_ok && (mean - 0.5).abs() <= 3.0 * se,
        format!("E_Q[w·1(X_T > 0)] = {mean:.5} ± {se:.5} vs 0.5 over {} replicas", terms.len()),
    )
}

fn c9_ldp_sanity() -> Outcome {
    let sc = scenario(vec![100], 400, Some(TiltField::constant(0.5).unwrap()));
    let deltas = vec![1e-3, 0.03, 0.05, 0.08, 0.12, 0.2, 2.0];
    let rep = run_ldp(
        &sc,
        &LdpOptions {
            deltas: deltas.clone(),
            ..LdpOptions::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let est = &rep.entries[0].estimates;
    let whole = est.last().unwrap();
    let naive_whole = whole.naive.as_ref().unwrap();
    let certain = naive_whole.estimate == 1.0 && whole.importance.estimate == 1.0;
    let tiny = est[0].naive.as_ref().unwrap();
    let rule_of_three = tiny.hits == 0 && tiny.interval == Some((0.0, 3.0 / 400.0));
    let mut monotone = true;
    let mut trace = Vec::new();
    for w in est.windows(2) {
        for (a, b) in [(w[0].naive_neg_log.unwrap(), w[1].naive_neg_log.unwrap()), (w[0].importance_neg_log, w[1].importance_neg_log)] {
            if a.lower_bound_only || b.lower_bound_only {
                continue;
            }
            monotone &= b.value <= a.value + a.std_error + b.std_error;
        }
        trace.push(format!("{:.3}", w[1].naive_neg_log.unwrap().value));
    }
    check(
        certain && rule_of_three && monotone,
        format!(
            "δ = 2 gives {} / {}; zero hits at δ = 1e-3 give {:?}; naive -(1/N)log P̂ over δ: [{}]",
            naive_whole.estimate,
            whole.importance.estimate,
            tiny.interval,
            trace.join(", ")
        ),
    )
}

fn run_in_pool(threads: usize, text: &str, dir: &Path, kind: ExperimentKind) -> Result<(), String> {
    let mut config = parse_config(text).map_err(|e| e.to_string())?;
    config.fill_defaults();
    config.output_dir = dir.to_path_buf();
    config.validate().map_err(|e| e.to_string())?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
    let rep = pool.install(|| run_experiment(&config, Some(kind)));
    match rep.exit_code() {
        0 => Ok(()),
        code => Err(format!("{kind} exited with {code}: {:?}", rep.stages)),
    }
}

fn read_outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "timings.json" {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn c10_reproducibility() -> Outcome {
    let text = r#"
[grid]
dx = 0.05
dt = 1e-3
save_every = 20

[sim]
N = [40, 160]
dt = 1e-2
replicas = 6
seed = 99

[tilt]
kind = "constant"
h0 = 0.5

[experiment]
deltas = [0.05, 0.2]
"#;
    let kinds = [
        ExperimentKind::Simulate,
        ExperimentKind::Lln,
        ExperimentKind::Ldp,
        ExperimentKind::Rate,
        ExperimentKind::Variational,
    ];
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = 0;
    for kind in kinds {
        let mut seen: Option<BTreeMap<String, Vec<u8>>> = None;
        for (i, threads) in [1, 4, 4].into_iter().enumerate() {
            let dir = tmp.path().join(format!("{kind}-{i}"));
            run_in_pool(threads, text, &dir, kind)?;
            let out = read_outputs(&dir);
            match &seen {
                None => {
                    files += out.len();
                    seen = Some(out);
                }
                Some(first) if *first != out => {
                    return Err(format!("{kind}: outputs differ between runs (threads {threads})"));
                }
                Some(_) => {}
            }
        }
    }
    Ok(format!("{files} output files byte-identical across 1, 4 and 4 worker threads"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("heat oracle", c1_heat_oracle),
        ("rate zero on the limit path", c2_rate_zero),
        ("closed-form rate of a drifted path", c3_closed_form_rate),
        ("tilt triple consistency", c4_tilt_triple),
        ("variational dual", c5_variational),
        ("law-of-large-numbers trend", c6_lln_trend),
        ("metric oracles", c7_metric_oracles),
        ("change of measure at N = 1", c8_girsanov_n1),
        ("ball-probability sanity", c9_ldp_sanity),
        ("reproducibility", c10_reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(d) => println!("PASS  {:>2}  {name}: {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL  {:>2}  {name}: {d}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
