//! Runs one experiment from a validated configuration and writes its outputs.
//!
//! Every run writes `config.toml` (the echo), `report.json` and
//! `timings.json` next to the experiment-specific files. Wall-clock times
//! live only in `timings.json` so that all other outputs are a function of
//! the configuration alone.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rankflow_core::coefficients::validate_assumptions;
use rankflow_core::ldp_probe::{run_ldp, run_lln, Scenario};
use rankflow_core::measures::GridCdfPath;
use rankflow_core::pde::{regularity_diagnostics, solve_forward, solve_tilted};
use rankflow_core::rate::{rate_functional, variational_rate, TestBasis, VariationalOptions};
use rankflow_core::Error;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{ExperimentKind, ScenarioConfig};
use crate::plotdata::{emit_plotdata, PlotKind, PlotSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureClass {
    Validation,
    Numerical,
    Output,
}

impl FailureClass {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Validation => 2,
            Self::Numerical => 3,
            Self::Output => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StageError {
    pub class: FailureClass,
    pub message: String,
}

impl StageError {
    fn validation(message: impl Into<String>) -> Self {
        Self {
            class: FailureClass::Validation,
            message: message.into(),
        }
    }

    fn output(e: impl std::fmt::Display) -> Self {
        Self {
            class: FailureClass::Output,
            message: e.to_string(),
        }
    }
}

impl From<Error> for StageError {
    fn from(e: Error) -> Self {
        let class = if e.is_numerical() {
            FailureClass::Numerical
        } else {
            FailureClass::Validation
        };
        Self {
            class,
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureClass>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Software {
    pub name: String,
    pub version: String,
}

impl Software {
    pub fn current() -> Self {
        Self {
            name: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub software: Software,
    pub experiment: ExperimentKind,
    pub config: ScenarioConfig,
    pub stages: Vec<StageRecord>,
    /// File names relative to the output directory, in write order.
    pub outputs: Vec<String>,
    /// Module reports keyed by stage.
    pub results: serde_json::Map<String, Value>,
    #[serde(skip)]
    pub timings: Vec<StageTiming>,
}

impl ExperimentReport {
    pub fn failure(&self) -> Option<FailureClass> {
        self.stages.iter().find_map(|s| s.failure)
    }

    /// 0 on success, otherwise the code of the first failed stage.
    pub fn exit_code(&self) -> i32 {
        self.failure().map_or(0, FailureClass::exit_code)
    }
}

struct Runner {
    dir: PathBuf,
    report: ExperimentReport,
}

impl Runner {
    /// Runs a stage; `None` means it failed and dependants should not run.
    fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T, StageError>) -> Option<T> {
        let start = Instant::now();
        let out = f(self);
        self.report.timings.push(StageTiming {
            name: name.into(),
            seconds: start.elapsed().as_secs_f64(),
        });
        let (ok, failure, error) = match &out {
            Ok(_) => (true, None, None),
            Err(e) => (false, Some(e.class), Some(e.message.clone())),
        };
        self.report.stages.push(StageRecord {
            name: name.into(),
            ok,
            failure,
            error,
        });
        out.ok()
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), StageError> {
        let p = self.dir.join(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(StageError::output)?;
        }
        fs::write(&p, bytes).map_err(|e| StageError::output(format!("{}: {e}", p.display())))?;
        self.report.outputs.push(name.into());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), StageError> {
        let mut s = serde_json::to_string_pretty(value).map_err(StageError::output)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    fn write_with(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    ) -> Result<(), StageError> {
        let mut buf = Vec::new();
        f(&mut buf).map_err(StageError::output)?;
        self.write(name, &buf)
    }

    fn record<T: Serialize>(&mut self, key: &str, value: &T) -> Result<(), StageError> {
        let v = serde_json::to_value(value).map_err(StageError::output)?;
        self.report.results.insert(key.into(), v);
        Ok(())
    }

    fn plot(&mut self, source: PlotSource<'_>, kind: PlotKind) -> Result<(), StageError> {
        let written = emit_plotdata(source, kind, &self.dir).map_err(StageError::output)?;
        self.report.outputs.extend(written.into_iter().map(|p| p.to_string_lossy().into_owned()));
        Ok(())
    }
}

/// Runs `kind` (or the configuration's own selection) and writes all
/// outputs below `config.output_dir`. Stage failures are recorded in the
/// report rather than returned; outputs of completed stages are kept.
pub fn run_experiment(config: &ScenarioConfig, kind: Option<ExperimentKind>) -> ExperimentReport {
    let kind = kind.or(config.experiment.kind).unwrap_or(ExperimentKind::Lln);
    let mut config = config.clone();
    config.experiment.kind = Some(kind);
    let mut r = Runner {
        dir: config.output_dir.clone(),
        report: ExperimentReport {
            software: Software::current(),
            experiment: kind,
            config: config.clone(),
            stages: Vec::new(),
            outputs: Vec::new(),
            results: serde_json::Map::new(),
            timings: Vec::new(),
        },
    };
    if let Some(scenario) = r.stage("setup", |r| {
        fs::create_dir_all(&r.dir).map_err(|e| StageError::output(format!("{}: {e}", r.dir.display())))?;
        let echo = config.echo();
        r.write("config.toml", echo.as_bytes())?;
        Ok(config.scenario()?)
    }) {
        dispatch(&mut r, &config, &scenario, kind);
    }
    finish(r)
}

fn finish(mut r: Runner) -> ExperimentReport {
    r.report.outputs.push("report.json".into());
    r.report.outputs.push("timings.json".into());
    // A failure here cannot be recorded in the report it would describe.
    let _ = write_pretty(&r.dir.join("report.json"), &r.report);
    let _ = write_pretty(&r.dir.join("timings.json"), &r.report.timings);
    r.report
}

fn write_pretty<T: Serialize + ?Sized>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    s.push('\n');
    fs::write(path, s)
}

fn input_path(r: &mut Runner, config: &ScenarioConfig, scenario: &Scenario) -> Option<GridCdfPath> {
    r.stage("input", |_| match &config.experiment.path {
        Some(p) => {
            let f = fs::File::open(p).map_err(|e| Error::io(p.display().to_string(), e))?;
            Ok(GridCdfPath::read_csv(f)?)
        }
        None => {
            let sol = match &scenario.tilt {
                Some(t) => solve_tilted(&scenario.coeffs, &scenario.init, t, &scenario.grid, &scenario.solver)?,
                None => solve_forward(&scenario.coeffs, &scenario.init, &scenario.grid, &scenario.solver)?,
            };
            Ok(sol.path)
        }
    })
}

fn dispatch(r: &mut Runner, config: &ScenarioConfig, scenario: &Scenario, kind: ExperimentKind) {
    match kind {
        ExperimentKind::Simulate => {
            r.stage("simulate", |r| {
                let mut summaries = Vec::new();
                let mut ns = scenario.n_list.clone();
                ns.sort_unstable();
                ns.dedup();
                for n in ns {
                    let runs = scenario.run_ensembles("simulate", n, scenario.tilt.as_ref())?;
                    for (rep, run) in runs.iter().enumerate() {
                        let cfg = scenario.sim_config("simulate", n, rep as u64);
                        summaries.push(run.summary(&cfg));
                        r.write_with(&format!("paths/N{n}_r{rep}.csv"), |b| run.path.write_csv(b))?;
                    }
                }
                r.write_json("simulate.json", &summaries)?;
                r.record("simulate", &summaries)
            });
        }
        ExperimentKind::SolvePde | ExperimentKind::SolveTilted => {
            let tilted = kind == ExperimentKind::SolveTilted;
            r.stage(kind.name(), |r| {
                let sol = if tilted {
                    let t = scenario
                        .tilt
                        .as_ref()
                        .ok_or_else(|| StageError::validation("solve-tilted needs a [tilt] section"))?;
                    solve_tilted(&scenario.coeffs, &scenario.init, t, &scenario.grid, &scenario.solver)?
                } else {
                    solve_forward(&scenario.coeffs, &scenario.init, &scenario.grid, &scenario.solver)?
                };
                let summary = json!({
                    "report": sol.report,
                    "invariants": sol.path.check_invariants(scenario.solver.eps_bc),
                });
                r.write_with("solution.csv", |b| sol.path.write_csv(b))?;
                r.write_json("solve.json", &summary)?;
                r.record(kind.name(), &summary)
            });
        }
        ExperimentKind::Rate => {
            if let Some(path) = input_path(r, config, scenario) {
                r.stage("rate", |r| {
                    let mut rep = rate_functional(&path, &scenario.coeffs, &config.experiment.rate);
                    rep.diagnostics = regularity_diagnostics(&path, scenario.init.eta()).ok();
                    r.write_json("rate.json", &rep)?;
                    r.plot(PlotSource::Rate(&rep), PlotKind::Rate)?;
                    r.record("rate", &rep)
                });
            }
        }
        ExperimentKind::Variational => {
            if let Some(path) = input_path(r, config, scenario) {
                r.stage("variational", |r| {
                    let j = rate_functional(&path, &scenario.coeffs, &config.experiment.rate);
                    let opts = VariationalOptions {
                        support: config.experiment.rate,
                        ..VariationalOptions::default()
                    };
                    let mut levels = Vec::new();
                    for degree in 0..=config.experiment.max_degree {
                        let basis = TestBasis::default_for(&path, degree);
                        let res = variational_rate(&path, &scenario.coeffs, &basis, &opts)?;
                        levels.push(json!({
                            "max_degree": degree,
                            "basis_size": basis.len(),
                            "rank": res.rank,
                            "value": res.value,
                        }));
                    }
                    let out = json!({ "J": j.j, "levels": levels });
                    r.write_json("variational.json", &out)?;
                    r.record("variational", &out)
                });
            }
        }
        ExperimentKind::Diagnostics => {
            if let Some(path) = input_path(r, config, scenario) {
                r.stage("diagnostics", |r| {
                    let out = json!({
                        "regularity": regularity_diagnostics(&path, scenario.init.eta())?,
                        "invariants": path.check_invariants(scenario.solver.eps_bc),
                    });
                    r.write_json("diagnostics.json", &out)?;
                    r.record("diagnostics", &out)
                });
            }
        }
        ExperimentKind::Lln => {
            r.stage("lln", |r| {
                let rep = run_lln(scenario)?;
                r.write_json("lln.json", &rep)?;
                r.write_with("lln_traces.csv", |b| rep.write_trace_csv(b))?;
                r.plot(PlotSource::Lln(&rep), PlotKind::Lln)?;
                r.record("lln", &rep)
            });
        }
        ExperimentKind::Ldp => {
            r.stage("ldp", |r| {
                let rep = run_ldp(scenario, &config.ldp_options())?;
                r.write_json("ldp.json", &rep)?;
                r.write_with("ldp_traces.csv", |b| rep.write_trace_csv(b))?;
                r.plot(PlotSource::Ldp(&rep), PlotKind::Ldp)?;
                r.record("ldp", &rep)
            });
        }
        ExperimentKind::Validate => {
            r.stage("validate", |r| {
                let rep = validate_assumptions(&scenario.coeffs, &scenario.init);
                r.write_json("validation.json", &rep)?;
                r.record("validate", &rep)?;
                let failed: Vec<&str> = rep.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
                if failed.is_empty() {
                    Ok(())
                } else {
                    Err(StageError::validation(format!("assumption checks failed: {}", failed.join(", "))))
                }
            });
        }
    }
}
