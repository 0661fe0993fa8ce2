//! Scenario configuration, experiment orchestration and plot data for the
//! `rankflow` command-line tool.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiment;
pub mod plotdata;

pub use config::{load_config, ConfigError, ExperimentKind, ScenarioConfig};
pub use experiment::{run_experiment, ExperimentReport, FailureClass};
pub use plotdata::{emit_plotdata, PlotKind, PlotSource};
