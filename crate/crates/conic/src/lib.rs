//! A small dense conic solver: linear objective over free variables subject
//! to linear equalities, linear inequalities, box bounds, and second-order
//! cone constraints ‖x‖₂ ≤ t.
//!
//! One primal-dual interior-point code path (homogeneous self-dual embedding
//! with Nesterov-Todd scaling and Mehrotra predictor-corrector) serves both
//! minimization and maximization; problem sizes are dense desk scale.

#![allow(clippy::needless_range_loop)]

pub mod cone;
pub mod dense;
mod ipm;
mod program;

pub use program::{
    ConicProgram, ConicSolution, IterStat, LinExpr, ProgramError, Residuals, Sense, SocBlock,
    SolveOptions, SolveStatus, StandardForm,
};
