use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rankflow::{load_config, run_experiment, ConfigError, ExperimentKind, ScenarioConfig};

#[derive(Parser)]
#[command(name = "rankflow", version, about = "Rank-based diffusions: particles, limit PDE, rate functional")]
struct Cli {
    /// Scenario file (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `sim.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads for replica fan-out; outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate particle ensembles and write empirical paths.
    Simulate,
    /// Solve the limit equation.
    SolvePde,
    /// Solve the tilted limit equation.
    SolveTilted,
    /// Evaluate the rate functional on a path.
    Rate {
        /// `t,x,R` CSV; the limit equation is solved when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Evaluate the variational lower bound on a path.
    Variational {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Regularity diagnostics of a path.
    Diagnostics {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Law-of-large-numbers convergence study.
    Lln,
    /// Tilted cost and ball-probability study.
    Ldp,
    /// Check the coefficients and initial distribution against the standing assumptions.
    Validate,
}

impl Command {
    fn kind(&self) -> ExperimentKind {
        match self {
            Self::Simulate => ExperimentKind::Simulate,
            Self::SolvePde => ExperimentKind::SolvePde,
            Self::SolveTilted => ExperimentKind::SolveTilted,
            Self::Rate { .. } => ExperimentKind::Rate,
            Self::Variational { .. } => ExperimentKind::Variational,
            Self::Diagnostics { .. } => ExperimentKind::Diagnostics,
            Self::Lln => ExperimentKind::Lln,
            Self::Ldp => ExperimentKind::Ldp,
            Self::Validate => ExperimentKind::Validate,
        }
    }

    fn input(&self) -> Option<&PathBuf> {
        match self {
            Self::Rate { input } | Self::Variational { input } | Self::Diagnostics { input } => input.as_ref(),
            _ => None,
        }
    }
}

fn build_config(cli: &Cli) -> Result<ScenarioConfig, ConfigError> {
    let mut config = match &cli.config {
        Some(p) => load_config(p)?,
        None => {
            let mut c = ScenarioConfig::default();
            c.fill_defaults();
            c
        }
    };
    if let Some(seed) = cli.seed {
        config.sim.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        config.output_dir = dir.clone();
    }
    if let Some(p) = cli.command.input() {
        config.experiment.path = Some(p.clone());
    }
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match build_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let kind = cli.command.kind();
    let run = || run_experiment(&config, Some(kind));
    let report = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(run),
            Err(e) => {
                eprintln!("error: cannot start {n} worker threads: {e}");
                return ExitCode::from(1);
            }
        },
        None => run(),
    };
    for s in &report.stages {
        match &s.error {
            None => println!("{:<14} ok", s.name),
            Some(e) => {
                println!("{:<14} FAILED", s.name);
                eprintln!("error in {}: {e}", s.name);
            }
        }
    }
    println!("outputs in {}", config.output_dir.display());
    ExitCode::from(report.exit_code() as u8)
}
