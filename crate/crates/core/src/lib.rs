//! Numerical laboratory for diffusions that interact through their ranks.
//!
//! The crate is organised around four pillars:
//!
//! - [`particle`]: Euler–Maruyama simulation of the N-particle rank-based
//!   system, untilted or under a Girsanov tilt, with exact accumulation of
//!   the change-of-measure statistics.
//! - [`pde`]: an IMEX finite-difference solver for the hydrodynamic-limit
//!   porous medium equation with convection (and its tilted variant) acting
//!   directly on the cumulative distribution function `R(t, x)`.
//! - [`rate`]: the explicit rate functional `J`, the finite-basis
//!   variational dual, and tilt recovery from a CDF path.
//! - [`ldp_probe`]: drivers that tie the first three together
//!   (law-of-large-numbers trends, tilted cost vs `J`, ball probabilities).
//!
//! [`coefficients`] and [`measures`] hold the shared domain types.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Stencils index several arrays by the same grid node.
#![allow(clippy::needless_range_loop)]

pub mod coefficients;
pub mod error;
pub mod ldp_probe;
pub mod measures;
pub mod numerics;
pub mod particle;
pub mod pde;
pub mod rate;

pub use error::{Error, Result};
