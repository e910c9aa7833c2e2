//! Dense semidefinite programming for small LMI problems.
//!
//! The solver works on programs of the form
//!
//! ```text
//! minimize    c' y
//! subject to  F_b0 + sum_i y_i F_bi  >= 0    for every block b
//! ```
//!
//! using an infeasible-start primal-dual interior-point method. Statuses
//! (including infeasibility) are ordinary values, never errors. Results can
//! be re-checked with [`verify_solution`], which uses its own symmetric
//! eigendecomposition and ignores every solver-reported residual.

mod ipm;
mod problem;
mod verify;

use std::fmt;
use std::time::Duration;

pub use problem::{BlockKind, LmiBlock, SdpProblem};
pub use verify::{min_eigenvalue, verify_solution, BlockMargin};

/// Environment variable overriding the default feasibility/gap tolerance.
pub const TOLERANCE_ENV: &str = "SOFSAT_SOLVER_TOL";

#[derive(Debug, thiserror::Error)]
pub enum SdpError {
    #[error("malformed program: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Converged to the requested gap and feasibility tolerances.
    Optimal,
    /// All constraints hold to tolerance but optimality is not certified
    /// (feasibility problems, or a stall after a feasible iterate).
    Feasible,
    Infeasible,
    NumericalFailure,
    IterationLimit,
}

impl SolveStatus {
    pub fn has_solution(self) -> bool {
        matches!(self, Self::Optimal | Self::Feasible)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Optimal => "optimal",
            Self::Feasible => "feasible",
            Self::Infeasible => "infeasible",
            Self::NumericalFailure => "numerical-failure",
            Self::IterationLimit => "iteration-limit",
        }
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Relative duality gap.
    pub gap_tol: f64,
    /// Relative primal/dual residual and constraint violation.
    pub feas_tol: f64,
    /// Threshold on the normalized Farkas ray residual.
    pub infeas_tol: f64,
    /// Optional box `|y_i| <= bound` added to the program. Keeps the
    /// feasible set compact so the primal side has an interior point.
    pub variable_bound: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 120,
            gap_tol: 1e-8,
            feas_tol: 1e-8,
            infeas_tol: 1e-8,
            variable_bound: None,
        }
    }
}

impl SolverOptions {
    /// Defaults, with the tolerances replaced by `SOFSAT_SOLVER_TOL` when set.
    pub fn from_env() -> Self {
        let mut opts = Self::default();
        if let Some(tol) = std::env::var(TOLERANCE_ENV).ok().and_then(|s| s.trim().parse::<f64>().ok()) {
            if tol > 0.0 && tol.is_finite() {
                opts.gap_tol = tol;
                opts.feas_tol = tol;
            }
        }
        opts
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: SolveStatus,
    /// Decision vector; meaningful when `status.has_solution()`.
    pub y: Vec<f64>,
    pub objective: f64,
    /// Largest relative eigenvalue violation over all blocks at `y`.
    pub worst_violation: f64,
    pub iterations: usize,
    pub wall_time: Duration,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub relative_gap: f64,
}

/// Solves the program. Deterministic for identical inputs and options.
pub fn solve(problem: &SdpProblem, options: &SolverOptions) -> Result<SolveReport, SdpError> {
    problem.validate()?;
    Ok(ipm::solve(problem, options))
}
