//! Euler-Maruyama simulation of the rank-based particle system, under the
//! original dynamics and under a tilt `h`, with exact accumulation of the
//! change-of-measure statistics `M_N` and `A_N`.

mod rank;
mod sim;
mod step;
mod tilt;

pub use rank::{rank_fractions, Ranker};
pub use sim::{simulate_path, ReplicaSummary, SimConfig, SimOutput, StreamId};
pub use step::{em_step, girsanov_update, pathwise_cost, tilted_em_step, GirsanovAccumulator, ParticleEnsemble};
pub use tilt::TiltField;
