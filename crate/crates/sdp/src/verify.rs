use nalgebra::{DMatrix, SymmetricEigen};

use crate::problem::SdpProblem;

/// Smallest eigenvalue of a symmetric matrix (symmetrized first).
/// Returns `+inf` for an empty matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockMargin {
    pub label: String,
    pub min_eigenvalue: f64,
    pub violated: bool,
}

/// Recomputes `lambda_min(F_b(y))` for every block of `problem` and flags the
/// ones below `-margin_tol`.
pub fn verify_solution(problem: &SdpProblem, y: &[f64], margin_tol: f64) -> Vec<BlockMargin> {
    problem
        .blocks()
        .iter()
        .map(|block| {
            let min = min_eigenvalue(&block.evaluate(y));
            BlockMargin {
                label: block.label().to_string(),
                min_eigenvalue: min,
                violated: min < -margin_tol,
            }
        })
        .collect()
}
