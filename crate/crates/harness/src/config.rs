//! Scenario configuration: a TOML file with `[coefficients]`, `[init]`,
//! `[grid]`, `[solver]`, `[sim]`, `[tilt]` and `[experiment]` sections.
//! Every field has a default; [`load_config`] fills them in so the echo
//! written next to the outputs carries no hidden state.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rankflow_core::coefficients::{InitFamily, InitialDistribution, RankCoefficients};
use rankflow_core::ldp_probe::{LdpOptions, Scenario};
use rankflow_core::particle::TiltField;
use rankflow_core::pde::{PdeGrid, SolverOptions};
use rankflow_core::rate::RateOptions;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration:\n{}", .0.iter().map(|v| format!("  - {v}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Simulate,
    SolvePde,
    SolveTilted,
    Rate,
    Variational,
    Diagnostics,
    Lln,
    Ldp,
    Validate,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::SolvePde => "solve-pde",
            Self::SolveTilted => "solve-tilted",
            Self::Rate => "rate",
            Self::Variational => "variational",
            Self::Diagnostics => "diagnostics",
            Self::Lln => "lln",
            Self::Ldp => "ldp",
            Self::Validate => "validate",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CoefficientSource {
    Constant { b: f64, sigma: f64 },
    /// Nodal values on a grid of rank fractions, linearly interpolated.
    Table { u: Vec<f64>, b: Vec<f64>, sigma: Vec<f64> },
    /// CSV with header `u,b,sigma`.
    Csv { path: PathBuf },
}

impl Default for CoefficientSource {
    fn default() -> Self {
        Self::Constant {
            b: 0.0,
            sigma: std::f64::consts::SQRT_2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitSection {
    #[serde(flatten)]
    pub family: InitFamily,
    #[serde(default = "default_eta")]
    pub eta: f64,
}

fn default_eta() -> f64 {
    0.5
}

impl Default for InitSection {
    fn default() -> Self {
        Self {
            family: InitFamily::Gaussian { mean: 0.0, std: 1.0 },
            eta: default_eta(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub x_min: f64,
    pub x_max: f64,
    pub dx: f64,
    pub dt: f64,
    pub save_every: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            x_min: -8.0,
            x_max: 8.0,
            dx: 0.02,
            dt: 2e-4,
            save_every: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    #[serde(rename = "N")]
    pub n: Vec<usize>,
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    /// Empty means eleven equally spaced times on `[0, T]`.
    pub snapshot_times: Vec<f64>,
    pub replicas: usize,
    pub seed: u64,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            n: vec![250, 1000, 4000],
            dt: 1e-3,
            t_end: 1.0,
            snapshot_times: Vec::new(),
            replicas: 20,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TiltSection {
    #[default]
    None,
    Constant {
        h0: f64,
    },
    /// CSV with header `t,x,h` on a uniform tensor grid.
    Grid {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: Option<ExperimentKind>,
    /// Input path (`t,x,R` CSV) for rate, variational and diagnostics; when
    /// absent the limit equation is solved, tilted if a tilt is configured.
    pub path: Option<PathBuf>,
    pub deltas: Vec<f64>,
    pub delta_factor: f64,
    pub naive: bool,
    pub max_degree: u32,
    pub rate: RateOptions,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        let ldp = LdpOptions::default();
        Self {
            kind: None,
            path: None,
            deltas: ldp.deltas,
            delta_factor: ldp.delta_factor,
            naive: ldp.naive,
            max_degree: 3,
            rate: RateOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Not echoed: the echo describes what is computed, not where it goes.
    #[serde(default = "default_output_dir", skip_serializing)]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub coefficients: CoefficientSource,
    #[serde(default)]
    pub init: InitSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub tilt: TiltSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            output_dir: default_output_dir(),
            coefficients: CoefficientSource::default(),
            init: InitSection::default(),
            grid: GridSection::default(),
            solver: SolverOptions::default(),
            sim: SimSection::default(),
            tilt: TiltSection::default(),
            experiment: ExperimentSection::default(),
        }
    }
}

/// Reads, fills defaults, resolves relative paths against the config file's
/// directory and validates.
pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut config = parse_config(&text).map_err(|message| ConfigError::Parse {
        path: path.to_path_buf(),
        message,
    })?;
    config.resolve_paths(&base);
    config.fill_defaults();
    config.validate()?;
    Ok(config)
}

/// Parses without touching the file system.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, String> {
    toml::from_str(text).map_err(|e| e.to_string())
}

impl ScenarioConfig {
    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let CoefficientSource::Csv { path } = &mut self.coefficients {
            join(path);
        }
        if let TiltSection::Grid { path } = &mut self.tilt {
            join(path);
        }
        if let Some(p) = &mut self.experiment.path {
            join(p);
        }
        join(&mut self.output_dir);
    }

    /// Materialises implicit defaults.
    pub fn fill_defaults(&mut self) {
        if self.sim.snapshot_times.is_empty() && self.sim.t_end > 0.0 {
            let t = self.sim.t_end;
            self.sim.snapshot_times = (0..=10).map(|k| t * k as f64 / 10.0).collect();
        }
    }

    /// The echo: a TOML document that reproduces this configuration.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    /// Collects every violation rather than stopping at the first.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut v = Vec::new();
        let need_file = |v: &mut Vec<String>, what: &str, p: &Path| {
            if !p.is_file() {
                v.push(format!("{what} file {} does not exist", p.display()));
            }
        };
        match &self.coefficients {
            CoefficientSource::Csv { path } => need_file(&mut v, "coefficient", path),
            _ => {
                if let Err(e) = self.coefficients_unchecked() {
                    v.push(format!("coefficients: {e}"));
                }
            }
        }
        if let Err(e) = InitialDistribution::new(self.init.family.clone(), self.init.eta) {
            v.push(format!("init: {e}"));
        }
        let s = &self.sim;
        if s.n.is_empty() {
            v.push("sim.N must list at least one particle count".into());
        }
        if s.n.contains(&0) {
            v.push("sim.N entries must be positive".into());
        }
        if !(s.t_end > 0.0 && s.t_end.is_finite()) {
            v.push(format!("sim.T must be positive and finite, got {}", s.t_end));
        }
        if !(s.dt > 0.0 && s.dt <= s.t_end) {
            v.push(format!("sim.dt must lie in (0, T], got {}", s.dt));
        }
        if s.replicas == 0 {
            v.push("sim.replicas must be positive".into());
        }
        if let Some(t) = s.snapshot_times.iter().find(|t| !(**t >= 0.0 && **t <= s.t_end)) {
            v.push(format!("sim.snapshot_times entry {t} lies outside [0, T]"));
        }
        if s.t_end > 0.0 && s.t_end.is_finite() {
            if let Err(e) = self.pde_grid() {
                v.push(format!("grid: {e}"));
            }
        }
        match &self.tilt {
            TiltSection::Grid { path } => need_file(&mut v, "tilt", path),
            TiltSection::Constant { h0 } if !h0.is_finite() => v.push(format!("tilt.h0 must be finite, got {h0}")),
            _ => {}
        }
        if let Some(p) = &self.experiment.path {
            need_file(&mut v, "input path", p);
        }
        if let Some(d) = self.experiment.deltas.iter().find(|d| !(**d > 0.0)) {
            v.push(format!("experiment.deltas must be positive, got {d}"));
        }
        if !(self.experiment.delta_factor > 0.0) {
            v.push(format!("experiment.delta_factor must be positive, got {}", self.experiment.delta_factor));
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(v))
        }
    }

    fn coefficients_unchecked(&self) -> rankflow_core::Result<RankCoefficients> {
        match &self.coefficients {
            CoefficientSource::Constant { b, sigma } => RankCoefficients::constant(*b, *sigma),
            CoefficientSource::Table { u, b, sigma } => RankCoefficients::new(u.clone(), b.clone(), sigma.clone()),
            CoefficientSource::Csv { path } => RankCoefficients::from_csv(path),
        }
    }

    pub fn coefficients(&self) -> rankflow_core::Result<RankCoefficients> {
        self.coefficients_unchecked()
    }

    pub fn init(&self) -> rankflow_core::Result<InitialDistribution> {
        InitialDistribution::new(self.init.family.clone(), self.init.eta)
    }

    pub fn pde_grid(&self) -> rankflow_core::Result<PdeGrid> {
        let g = &self.grid;
        PdeGrid::new(g.x_min, g.x_max, g.dx, g.dt, self.sim.t_end)?.with_save_every(g.save_every)
    }

    pub fn tilt(&self) -> rankflow_core::Result<Option<TiltField>> {
        match &self.tilt {
            TiltSection::None => Ok(None),
            TiltSection::Constant { h0 } => TiltField::constant(*h0).map(Some),
            TiltSection::Grid { path } => {
                let f = fs::File::open(path).map_err(|e| rankflow_core::Error::io(path.display().to_string(), e))?;
                TiltField::read_csv(f).map(Some)
            }
        }
    }

    pub fn scenario(&self) -> rankflow_core::Result<Scenario> {
        Ok(Scenario {
            coeffs: self.coefficients()?,
            init: self.init()?,
            grid: self.pde_grid()?,
            solver: self.solver,
            n_list: self.sim.n.clone(),
            sim_dt: self.sim.dt,
            t_end: self.sim.t_end,
            snapshot_times: self.sim.snapshot_times.clone(),
            replicas: self.sim.replicas,
            seed: self.sim.seed,
            tilt: self.tilt()?,
        })
    }

    pub fn ldp_options(&self) -> LdpOptions {
        LdpOptions {
            deltas: self.experiment.deltas.clone(),
            delta_factor: self.experiment.delta_factor,
            naive: self.experiment.naive,
        }
    }
}
