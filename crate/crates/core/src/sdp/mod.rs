//! Semidefinite-program modeling: variables, affine block constraints, and
//! the regression formulations built from them.

mod expr;
mod formulation;
mod problem;

pub use expr::{AffineExpr, Entries, LinearForm, VarId, VarShape, Variable};
pub use formulation::*;
pub use problem::{ExtraKind, LmiConstraint, RegressionLayout, SdpProblem, SdpSolution, SdpStatus, VarValue};

pub use crate::backend::SolverSettings;

/// Solves a problem with the embedded interior-point backend.
pub fn solve<T: crate::Scalar>(problem: &SdpProblem<T>, settings: &SolverSettings<T>) -> crate::Result<SdpSolution<T>> {
    crate::backend::solve(problem, settings)
}
