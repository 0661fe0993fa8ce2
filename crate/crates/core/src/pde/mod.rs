//! Finite-difference solvers for the hydrodynamic-limit Cauchy problem
//! `R_t = (A(R)R_x)_x - b(R)R_x` and its tilted form
//! `R_t = (A(R)R_x)_x + hA(R)R_x`, plus the regularity integrals.

mod diagnostics;
mod solver;

pub use diagnostics::{
    regularity_diagnostics, trapezoid_weights, DerivativeFields, LqNorm, RegularityDiagnostics, LQ_EXPONENTS,
    RX_FLOOR_REL,
};
pub use solver::{
    refinement_study, solve_forward, solve_tilted, sup_error, PdeGrid, PdeSolution, RefinementStudy, Scheme,
    SolveReport, SolverOptions, A_FLOOR, CONVECTIVE_CFL, REPAIR_TOL,
};
