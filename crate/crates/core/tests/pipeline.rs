use rankflow_core::coefficients::{InitFamily, InitialDistribution, RankCoefficients};
use rankflow_core::measures::path_distance;
use rankflow_core::particle::{simulate_path, SimConfig, StreamId};
use rankflow_core::pde::{solve_forward, PdeGrid, SolverOptions};
use rankflow_core::rate::{rate_functional, recover_tilt, RateOptions, RecoverOptions};

fn atlas_like() -> RankCoefficients {
    let u: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
    let b = u.iter().map(|u| 0.4 - 0.8 * u).collect();
    let sigma = u.iter().map(|u| 1.0 + 0.5 * u).collect();
    RankCoefficients::new(u, b, sigma).unwrap()
}

fn init() -> InitialDistribution {
    InitialDistribution::new(InitFamily::Logistic { loc: 0.0, scale: 0.6 }, 0.5).unwrap()
}

fn grid() -> PdeGrid {
    PdeGrid::new(-14.0, 14.0, 0.02, 2e-4, 1.0).unwrap().with_save_every(50).unwrap()
}

#[test]
fn rank_dependent_limit_has_negligible_rate_and_attracts_particles() {
    let c = atlas_like();
    let sol = solve_forward(&c, &init(), &grid(), &SolverOptions::default()).unwrap();
    assert!(sol.path.check_invariants(1e-8).all_hold());
    let j = rate_functional(&sol.path, &c, &RateOptions::default()).j;
    assert!(j <= 1e-3, "J = {j}");

    let config = SimConfig {
        n: 2000,
        dt: 1e-3,
        t_end: 1.0,
        snapshot_times: (0..=10).map(|k| k as f64 / 10.0).collect(),
        stream: StreamId::new(3, "pipeline", 2000, 0),
    };
    let run = simulate_path(&init(), &c, &config, None).unwrap();
    let d = path_distance(&run.path, &sol.path).unwrap();
    assert!(d.sup < 0.05, "sup_t d_L = {}", d.sup);
}

#[test]
fn forward_solution_recovers_drift_over_diffusion() {
    let c = atlas_like();
    let sol = solve_forward(&c, &init(), &grid(), &SolverOptions::default()).unwrap();
    let rec = recover_tilt(&sol.path, &c, &RecoverOptions::default()).unwrap();
    let err = rec.core_error(&sol.path, |t, x| {
        let tg = sol.path.t_grid();
        let xg = sol.path.x_grid();
        let k = ((t - tg.start) / tg.step).round() as usize;
        let j = ((x - xg.start) / xg.step).round() as usize;
        let r = sol.path.at(k, j);
        -c.b(r) / c.a(r)
    });
    assert!(err < 0.02, "max |h + b/A| = {err}");
}
