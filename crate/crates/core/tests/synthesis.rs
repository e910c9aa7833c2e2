use std::sync::OnceLock;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sofsat_core::library::{example1, example1_parts, random_model, rational_siso, synthetic_mimo, MimoOutput, RandomModelSpec};
use sofsat_core::synthesis::{
    algorithm1, algorithm2, ellipsoid_metrics, synthesize, Stage, SynthesisOptions, SynthesisResult, SynthesisStatus,
};
use sofsat_core::verifier::{check_facet_inclusion, check_vertex_lmis, verify, VerifyOptions};
use sofsat_core::{AffineMatrix, DarModel};

fn example1_feasibility() -> &'static SynthesisResult {
    static R: OnceLock<SynthesisResult> = OnceLock::new();
    R.get_or_init(|| algorithm1(&example1(), 50, &SynthesisOptions::default()).unwrap())
}

fn light() -> VerifyOptions {
    VerifyOptions {
        boundary_samples: 1000,
        interior_samples: 1000,
        parameter_samples: 200,
        supply_samples: 200,
        trajectories: 12,
        ..VerifyOptions::default()
    }
}

fn nonincreasing(xs: &[f64], tol: f64) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0] + tol)
}

#[test]
fn example1_feasibility_succeeds() {
    let r = example1_feasibility();
    assert_eq!(r.status, SynthesisStatus::Success);
    assert!(r.iterations >= 1 && r.iterations <= 50);
    assert_eq!(r.solves[0].stage, Stage::Calibration);
    let cert = r.certificate.as_ref().unwrap();
    for c in check_vertex_lmis(&example1(), cert, 1e-7).unwrap() {
        assert!(c.passed, "{c:?}");
    }
}

#[test]
fn first_feasibility_solve_is_feasible_after_calibration() {
    let model = synthetic_mimo(MimoOutput::Scalar);
    let r = algorithm1(&model, 50, &SynthesisOptions::default()).unwrap();
    assert_eq!(r.solves[0].stage, Stage::Calibration);
    assert!(r.solves[0].status.has_solution());
    let first = r.solves.iter().find(|s| s.stage == Stage::Feasibility).unwrap();
    assert!(first.status.has_solution(), "{first:?}");
    assert!(nonincreasing(&r.lambda_history, 1e-6), "{:?}", r.lambda_history);
}

#[test]
fn no_control_authority_stalls() {
    // x2' = 0 whatever the input: nothing makes V strictly decrease.
    let mut parts = example1_parts();
    parts.a3 = AffineMatrix::zeros(2, 1, 2, 0);
    let model = DarModel::new(parts).unwrap();
    let r = algorithm1(&model, 5, &SynthesisOptions::default()).unwrap();
    assert_eq!(r.status, SynthesisStatus::IterationLimit);
    assert_eq!(r.iterations, 5);
    let last = *r.lambda_history.last().unwrap();
    assert!(last > 1e-3, "{:?}", r.lambda_history);
    assert!(nonincreasing(&r.lambda_history, 1e-6));
}

#[test]
fn huge_gamma_stops_at_each_bound_after_one_step() {
    let model = example1();
    let seed = example1_feasibility();
    let mut opts = SynthesisOptions::default();
    opts.r_bound_max_rel = 0.0;
    let r = algorithm2(&model, seed, 1e6, 50, &opts).unwrap();
    assert_eq!(r.status, SynthesisStatus::Success);
    assert_eq!(r.maximize_iterations, 1);
    assert!(r.certificate.unwrap().trace_p() <= seed.certificate.as_ref().unwrap().trace_p() + 1e-6);

    // With room to grow, the bound on R goes up tenfold at most three times.
    let r = algorithm2(&model, seed, 1e6, 50, &SynthesisOptions::default()).unwrap();
    assert_eq!(r.status, SynthesisStatus::Success);
    assert!(r.maximize_iterations <= 4, "{}", r.maximize_iterations);
}

#[test]
fn maximization_shrinks_trace_and_keeps_the_gain_formula() {
    let model = example1();
    let r = algorithm2(&model, example1_feasibility(), 1e-2, 50, &SynthesisOptions::default()).unwrap();
    assert_eq!(r.status, SynthesisStatus::Success);
    assert!(nonincreasing(&r.trace_history, 1e-6), "{:?}", r.trace_history);
    let cert = r.certificate.as_ref().unwrap();
    let k = cert.gain().unwrap();
    let r_inv = cert.r.clone().try_inverse().unwrap();
    let expected = -(&r_inv * cert.s.transpose());
    assert!((k.matrix() - expected).amax() < 1e-10);
    for a in [1e-2, 3.0, 1e3] {
        let mut scaled = cert.clone();
        scaled.s *= a;
        scaled.r *= a;
        assert!((scaled.gain().unwrap().matrix() - k.matrix()).amax() < 1e-10);
    }
    let m = ellipsoid_metrics(&cert.p).unwrap();
    assert!(m.semi_axes[0] >= 0.8, "{:?}", m.semi_axes);
}

#[test]
fn every_builtin_success_passes_verification() {
    let models = [
        ("example1", example1()),
        ("mimo-scalar", synthetic_mimo(MimoOutput::Scalar)),
        ("mimo-vector", synthetic_mimo(MimoOutput::Vector)),
        ("rational-siso", rational_siso()),
    ];
    for (name, model) in models {
        let r = synthesize(&model, 50, 1e-2, true, &SynthesisOptions::default()).unwrap();
        assert_eq!(r.status, SynthesisStatus::Success, "{name}: {:?}", r.message);
        let cert = r.certificate.as_ref().unwrap();
        let facets = check_facet_inclusion(&model, cert).unwrap();
        assert!(facets.worst_margin >= -1e-8, "{name}: {facets:?}");
        let rep = verify(&model, cert, &light()).unwrap();
        for c in ["sector-inclusion", "dissipation", "vdot-negative", "monte-carlo-roa"] {
            assert!(rep.check(c).unwrap().passed, "{name}: {:?}", rep.check(c));
        }
    }
}

#[test]
fn facet_inclusion_matches_the_support_function() {
    // a' P^-1 a <= 1 for the box facets of X.
    let cert = example1_feasibility().certificate.as_ref().unwrap();
    let p_inv = cert.p.clone().try_inverse().unwrap();
    for a in example1().x_set().facets() {
        assert!(a.dot(&(&p_inv * &a)) <= 1.0 + 1e-8);
    }
    let mut inflated = cert.clone();
    inflated.p = &cert.p * 0.25;
    assert!(!check_facet_inclusion(&example1(), &inflated).unwrap().passed);
}

#[test]
fn feasibility_gain_is_finite_and_nonzero() {
    let r = example1_feasibility();
    let k = r.gain().unwrap().unwrap();
    assert_eq!(k.matrix().shape(), (1, 1));
    assert!(k.matrix().iter().all(|v| v.is_finite()));
    assert_ne!(k.matrix(), &DMatrix::zeros(1, 1));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn random_successes_satisfy_their_lmis(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_model(&mut rng, RandomModelSpec::default());
        let r = algorithm1(&model, 20, &SynthesisOptions::default()).unwrap();
        prop_assert!(nonincreasing(&r.lambda_history, 1e-6));
        if r.status == SynthesisStatus::Success {
            let cert = r.certificate.as_ref().unwrap();
            for c in check_vertex_lmis(&model, cert, 1e-7).unwrap() {
                prop_assert!(c.passed, "{:?}", c);
            }
            prop_assert!(check_facet_inclusion(&model, cert).unwrap().worst_margin >= -1e-8);
        }
    }
}
