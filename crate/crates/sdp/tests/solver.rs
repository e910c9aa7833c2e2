use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use sofsat_sdp::{solve, verify_solution, LmiBlock, SdpProblem, SolveStatus, SolverOptions};

/// Basis matrices for a symmetric 2x2 variable (p11, p12, p22).
fn sym2_basis() -> [DMatrix<f64>; 3] {
    [
        DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
        DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]),
    ]
}

/// Embeds a 2x2 coefficient into the top-left corner of a 3x3 block.
fn embed3(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(3, 3);
    out.view_mut((0, 0), (2, 2)).copy_from(m);
    out
}

#[test]
fn scalar_lower_bound() {
    // minimize t s.t. [t] - [1] >= 0
    let mut p = SdpProblem::new(1);
    p.set_objective(DVector::from_vec(vec![1.0]));
    let mut b = LmiBlock::dense(DMatrix::from_element(1, 1, -1.0));
    b.add_term(0, DMatrix::identity(1, 1));
    p.push_block(b);
    let r = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    assert_relative_eq!(r.y[0], 1.0, epsilon = 1e-7);
    assert!(r.worst_violation <= 1e-8);
}

#[test]
fn trace_minimization_over_psd_order() {
    // minimize trace(P) s.t. P - diag(1, 2) >= 0
    let basis = sym2_basis();
    let mut p = SdpProblem::new(3);
    p.set_objective(DVector::from_vec(vec![1.0, 0.0, 1.0]));
    let mut b = LmiBlock::dense(-DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0])));
    for (i, e) in basis.iter().enumerate() {
        b.add_term(i, e.clone());
    }
    p.push_block(b);
    let r = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    assert_relative_eq!(r.objective, 3.0, epsilon = 1e-7);
    assert_relative_eq!(r.y[0], 1.0, epsilon = 1e-6);
    assert!(r.y[1].abs() < 1e-6);
    assert_relative_eq!(r.y[2], 2.0, epsilon = 1e-6);
}

#[test]
fn contradictory_bounds_are_infeasible() {
    // 2I - P >= 0 and [[P, a], [a', 1]] >= 0 with a = (2, 0) needs P11 >= 4.
    let basis = sym2_basis();
    let mut p = SdpProblem::new(3);
    let mut upper = LmiBlock::dense(DMatrix::identity(2, 2) * 2.0);
    for (i, e) in basis.iter().enumerate() {
        upper.add_term(i, -e.clone());
    }
    p.push_block(upper);
    let mut constant = DMatrix::zeros(3, 3);
    constant[(0, 2)] = 2.0;
    constant[(2, 0)] = 2.0;
    constant[(2, 2)] = 1.0;
    let mut facet = LmiBlock::dense(constant);
    for (i, e) in basis.iter().enumerate() {
        facet.add_term(i, embed3(e));
    }
    p.push_block(facet);
    let r = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Infeasible);
}

#[test]
fn relaxing_the_upper_bound_restores_feasibility() {
    let basis = sym2_basis();
    let mut p = SdpProblem::new(3);
    let mut upper = LmiBlock::dense(DMatrix::identity(2, 2) * 5.0);
    for (i, e) in basis.iter().enumerate() {
        upper.add_term(i, -e.clone());
    }
    p.push_block(upper);
    let mut constant = DMatrix::zeros(3, 3);
    constant[(0, 2)] = 2.0;
    constant[(2, 0)] = 2.0;
    constant[(2, 2)] = 1.0;
    let mut facet = LmiBlock::dense(constant);
    for (i, e) in basis.iter().enumerate() {
        facet.add_term(i, embed3(e));
    }
    p.push_block(facet);
    let r = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Feasible);
    for m in verify_solution(&p, &r.y, 1e-7) {
        assert!(!m.violated, "{m:?}");
    }
}

#[test]
fn corrupted_solution_is_flagged() {
    let basis = sym2_basis();
    let mut p = SdpProblem::new(3);
    p.set_objective(DVector::from_vec(vec![1.0, 0.0, 1.0]));
    let mut b = LmiBlock::dense(-DMatrix::identity(2, 2));
    for (i, e) in basis.iter().enumerate() {
        b.add_term(i, e.clone());
    }
    p.push_block(b);
    let r = solve(&p, &SolverOptions::default()).unwrap();
    assert!(verify_solution(&p, &r.y, 1e-7).iter().all(|m| !m.violated));
    let flipped: Vec<f64> = r.y.iter().map(|v| -v).collect();
    assert!(verify_solution(&p, &flipped, 1e-7).iter().any(|m| m.violated));
}

#[test]
fn empty_program_has_no_margins() {
    let p = SdpProblem::new(0);
    assert!(verify_solution(&p, &[], 1e-7).is_empty());
    let r = solve(&p, &SolverOptions::default()).unwrap();
    assert!(r.status.has_solution());
}

#[test]
fn scaling_constant_terms_scales_the_objective() {
    // minimize p11 + p22 s.t. P >= M, scaled constants give 10x objective.
    let basis = sym2_basis();
    let build = |scale: f64| {
        let mut p = SdpProblem::new(3);
        p.set_objective(DVector::from_vec(vec![1.0, 0.0, 1.0]));
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let mut b = LmiBlock::dense(-m * scale);
        for (i, e) in basis.iter().enumerate() {
            b.add_term(i, e.clone());
        }
        p.push_block(b);
        p
    };
    let base = solve(&build(1.0), &SolverOptions::default()).unwrap();
    let scaled = solve(&build(10.0), &SolverOptions::default()).unwrap();
    assert_eq!(base.status, scaled.status);
    assert_relative_eq!(scaled.objective, 10.0 * base.objective, max_relative = 1e-6);
}

#[test]
fn variable_bound_is_respected() {
    // minimize -t s.t. t >= 0 (unbounded without the box)
    let mut p = SdpProblem::new(1);
    p.set_objective(DVector::from_vec(vec![-1.0]));
    let mut b = LmiBlock::dense(DMatrix::zeros(1, 1));
    b.add_term(0, DMatrix::identity(1, 1));
    p.push_block(b);
    let opts = SolverOptions {
        variable_bound: Some(50.0),
        ..SolverOptions::default()
    };
    let r = solve(&p, &opts).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    assert_relative_eq!(r.y[0], 50.0, epsilon = 1e-5);
}

#[test]
fn solves_are_deterministic() {
    let basis = sym2_basis();
    let mut p = SdpProblem::new(3);
    p.set_objective(DVector::from_vec(vec![1.0, 0.3, 2.0]));
    let mut b = LmiBlock::dense(-DMatrix::identity(2, 2));
    for (i, e) in basis.iter().enumerate() {
        b.add_term(i, e.clone());
    }
    p.push_block(b);
    let a = solve(&p, &SolverOptions::default()).unwrap();
    let b = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(a.y, b.y);
    assert_eq!(a.iterations, b.iterations);
}

fn random_symmetric(n: usize, entries: &[f64]) -> DMatrix<f64> {
    let a = DMatrix::from_iterator(n, n, entries.iter().copied());
    (&a + a.transpose()) * 0.5
}

fn max_eig(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    // minimize t s.t. t I - A >= 0 has optimum lambda_max(A), computed here
    // by an eigendecomposition that never sees the solver.
    #[test]
    fn largest_eigenvalue_matches_oracle(entries in prop::collection::vec(-3.0f64..3.0, 16)) {
        let a = random_symmetric(4, &entries);
        let mut p = SdpProblem::new(1);
        p.set_objective(DVector::from_vec(vec![1.0]));
        let mut b = LmiBlock::dense(-a.clone());
        b.add_term(0, DMatrix::identity(4, 4));
        p.push_block(b);
        let r = solve(&p, &SolverOptions::default()).unwrap();
        prop_assert_eq!(r.status, SolveStatus::Optimal);
        prop_assert!((r.objective - max_eig(&a)).abs() <= 1e-6 * (1.0 + max_eig(&a).abs()));
    }

    // Sum of the k largest eigenvalues via two coupled blocks is harder; here
    // a two-variable program with a known analytic optimum:
    // minimize t1 + t2 s.t. t1 I - A >= 0, t2 I - B >= 0.
    #[test]
    fn separable_blocks_match_oracle(
        ea in prop::collection::vec(-2.0f64..2.0, 9),
        eb in prop::collection::vec(-2.0f64..2.0, 4),
    ) {
        let a = random_symmetric(3, &ea);
        let bm = random_symmetric(2, &eb);
        let mut p = SdpProblem::new(2);
        p.set_objective(DVector::from_vec(vec![1.0, 1.0]));
        let mut b1 = LmiBlock::dense(-a.clone());
        b1.add_term(0, DMatrix::identity(3, 3));
        let mut b2 = LmiBlock::dense(-bm.clone());
        b2.add_term(1, DMatrix::identity(2, 2));
        p.push_block(b1);
        p.push_block(b2);
        let r = solve(&p, &SolverOptions::default()).unwrap();
        prop_assert_eq!(r.status, SolveStatus::Optimal);
        let expected = max_eig(&a) + max_eig(&bm);
        prop_assert!((r.objective - expected).abs() <= 1e-6 * (1.0 + expected.abs()));
        for m in verify_solution(&p, &r.y, 1e-7) {
            prop_assert!(!m.violated);
        }
    }
}
