//! The rate functional `J`, its variational dual over finite test bases,
//! and tilt recovery from a path.

mod functional;
mod recover;
mod variational;

pub use functional::{rate_functional, tilt_cost, Floors, GridSummary, RateOptions, RateReport, Residual};
pub use recover::{recover_tilt, RecoverOptions, RecoveredTilt};
pub use variational::{
    solve_dual, variational_rate, BasisElement, SpaceFactor, TestBasis, TimeFactor, VariationalOptions,
    VariationalResult,
};
