//! Built-in models: the two-state polynomial benchmark, synthetic MIMO
//! plants with an uncertain parameter and a nonlinear output map, and a
//! generator of random well-posed models.

use nalgebra::DMatrix;
use rand::Rng;

use crate::affine::{product_vertices, AffineMatrix, Polytope};
use crate::model::{DarModel, DarModelParts, Dims};
use crate::oracle::PiOracle;

fn m(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

fn affine(c: DMatrix<f64>, xs: Vec<DMatrix<f64>>, ds: Vec<DMatrix<f64>>) -> AffineMatrix {
    AffineMatrix::new(c, xs, ds).expect("built-in model data is consistent")
}

/// Two-state polynomial plant with `pi = (x1^2, x2^2)`, scalar input
/// saturated at 1.5 and `X = [-0.9, 0.9]^2`.
pub fn example1_parts() -> DarModelParts {
    let (n, l) = (2, 0);
    let ups1 = affine(
        DMatrix::zeros(2, 2),
        vec![m(2, 2, &[1.0, 0.0, 0.0, 0.0]), m(2, 2, &[0.0, 0.0, 0.0, 1.0])],
        vec![],
    );
    let sigma1 = ups1.map(|c| -c).expect("negation keeps shape");
    DarModelParts {
        dims: Dims { n, n_pi: 2, n_pi_x: 2, m: 1, p: 1, l },
        a1: AffineMatrix::constant(m(2, 2, &[-1.0, 0.25, 0.0, 0.0]), n, l),
        a2: affine(
            m(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            vec![m(2, 2, &[-1.5, -0.75, 0.0, 0.0]), m(2, 2, &[-1.0, -0.5, 0.0, 0.0])],
            vec![],
        ),
        a3: AffineMatrix::constant(m(2, 1, &[0.0, 1.0]), n, l),
        ups1,
        ups2: AffineMatrix::constant(-DMatrix::identity(2, 2), n, l),
        ups3: AffineMatrix::zeros(2, 1, n, l),
        c1: m(1, 2, &[1.0, -1.0]),
        c2: DMatrix::zeros(1, 2),
        sigma: Some((sigma1, AffineMatrix::constant(DMatrix::identity(2, 2), n, l))),
        u_bar: vec![1.5],
        x_set: Polytope::boxed(vec![0.9, 0.9]).expect("positive bounds"),
        d_set: Polytope::boxed(vec![]).expect("empty box"),
        pi_oracle: Some(PiOracle::parse(&["x1^2", "x2^2"]).expect("valid monomials")),
    }
}

pub fn example1() -> DarModel {
    DarModel::new(example1_parts()).expect("built-in model is valid")
}

/// Which output map the synthetic MIMO plant uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MimoOutput {
    /// `y = x1 + x2 + 0.5 x1^2`
    Scalar,
    /// `y = (x1 + 0.5 x1^2, x2)`
    Vector,
}

/// Synthetic two-input plant with `pi = pi_x = x1^2`, one uncertain
/// parameter `|d1| <= 0.8` entering the drift, and a nonlinear output map:
///
/// ```text
/// x1' = (0.2 + 0.3 d1) x1 + 2.2 x2 - 0.1 x1^2 + u1
/// x2' = 0.2 x1^2 + u2
/// ```
///
/// The linear part is open-loop unstable and `X = [-1.2, 1.2]^2`.
pub fn synthetic_mimo(output: MimoOutput) -> DarModel {
    let (n, l) = (2, 1);
    let ups1 = affine(
        DMatrix::zeros(1, 2),
        vec![m(1, 2, &[1.0, 0.0]), DMatrix::zeros(1, 2)],
        vec![DMatrix::zeros(1, 2)],
    );
    let sigma1 = ups1.map(|c| -c).expect("negation keeps shape");
    let (p, c1, c2) = match output {
        MimoOutput::Scalar => (1, m(1, 2, &[1.0, 1.0]), m(1, 1, &[0.5])),
        MimoOutput::Vector => (2, m(2, 2, &[1.0, 0.0, 0.0, 1.0]), m(2, 1, &[0.5, 0.0])),
    };
    DarModel::new(DarModelParts {
        dims: Dims { n, n_pi: 1, n_pi_x: 1, m: 2, p, l },
        a1: affine(
            m(2, 2, &[0.2, 2.2, 0.0, 0.0]),
            vec![DMatrix::zeros(2, 2), DMatrix::zeros(2, 2)],
            vec![m(2, 2, &[0.3, 0.0, 0.0, 0.0])],
        ),
        a2: AffineMatrix::constant(m(2, 1, &[-0.1, 0.2]), n, l),
        a3: AffineMatrix::constant(DMatrix::identity(2, 2), n, l),
        ups1,
        ups2: AffineMatrix::constant(m(1, 1, &[-1.0]), n, l),
        ups3: AffineMatrix::zeros(1, 2, n, l),
        c1,
        c2,
        sigma: Some((sigma1, AffineMatrix::constant(m(1, 1, &[1.0]), n, l))),
        u_bar: vec![1.0, 1.0],
        x_set: Polytope::boxed(vec![1.2, 1.2]).expect("positive bounds"),
        d_set: Polytope::boxed(vec![0.8]).expect("positive bounds"),
        pi_oracle: Some(PiOracle::parse(&["x1^2"]).expect("valid monomial")),
    })
    .expect("built-in model is valid")
}

/// Rational single-input plant without a state-only nonlinearity
/// (`n_pi_x = 0`):
///
/// ```text
/// x1' = x2
/// x2' = (-0.3 + 0.2 d1) x1 - x2 + 0.3 x1 x2 / (2 + x2) + u
/// ```
///
/// with `pi = x1 x2 / (2 + x2)` and `y = (x1, x2)`.
pub fn rational_siso() -> DarModel {
    let (n, l) = (2, 1);
    DarModel::new(DarModelParts {
        dims: Dims { n, n_pi: 1, n_pi_x: 0, m: 1, p: 2, l },
        a1: affine(
            m(2, 2, &[0.0, 1.0, -0.3, -1.0]),
            vec![DMatrix::zeros(2, 2), DMatrix::zeros(2, 2)],
            vec![m(2, 2, &[0.0, 0.0, 0.2, 0.0])],
        ),
        a2: AffineMatrix::constant(m(2, 1, &[0.0, 0.3]), n, l),
        a3: AffineMatrix::constant(m(2, 1, &[0.0, 1.0]), n, l),
        // x1 x2 - (2 + x2) pi = 0
        ups1: affine(
            DMatrix::zeros(1, 2),
            vec![DMatrix::zeros(1, 2), m(1, 2, &[1.0, 0.0])],
            vec![DMatrix::zeros(1, 2)],
        ),
        ups2: affine(
            m(1, 1, &[-2.0]),
            vec![DMatrix::zeros(1, 1), m(1, 1, &[-1.0])],
            vec![DMatrix::zeros(1, 1)],
        ),
        ups3: AffineMatrix::zeros(1, 1, n, l),
        c1: DMatrix::identity(2, 2),
        c2: DMatrix::zeros(2, 1),
        sigma: None,
        u_bar: vec![2.0],
        x_set: Polytope::boxed(vec![0.8, 0.8]).expect("positive bounds"),
        d_set: Polytope::boxed(vec![1.0]).expect("positive bounds"),
        pi_oracle: None,
    })
    .expect("built-in model is valid")
}

/// Size limits for [`random_model`].
#[derive(Debug, Clone, Copy)]
pub struct RandomModelSpec {
    pub max_n: usize,
    pub max_n_pi: usize,
    pub max_m: usize,
    pub max_p: usize,
    pub max_l: usize,
}

impl Default for RandomModelSpec {
    fn default() -> Self {
        Self {
            max_n: 3,
            max_n_pi: 3,
            max_m: 2,
            max_p: 2,
            max_l: 1,
        }
    }
}

/// Random well-posed model for which some output gain `K*`, unknown to the
/// caller, makes the unsaturated closed-loop Jacobian contractive
/// (`He(J) < 0`) at every vertex of `X x D`.
///
/// The leading `n_pi_x` rows of the algebraic constraint read
/// `pi_i = U1_i(x) x`, so `Sigma_1 = U1[..n_pi_x]` and `Sigma_2 = -I` satisfy
/// the null relation exactly. The remaining rows have `Upsilon_2 = -I + E(x)`
/// with `|E(x)| <= 0.3` on `X`, which keeps `Upsilon_2` invertible. `C2` is
/// nonzero when `Upsilon_3 = 0`.
pub fn random_model<R: Rng + ?Sized>(rng: &mut R, spec: RandomModelSpec) -> DarModel {
    let n = rng.random_range(1..=spec.max_n.max(1));
    let n_pi = rng.random_range(1..=spec.max_n_pi.max(1));
    let n_pi_x = rng.random_range(0..=n_pi);
    let mm = rng.random_range(1..=spec.max_m.max(1));
    let p = rng.random_range(1..=spec.max_p.max(1));
    let l = rng.random_range(0..=spec.max_l);
    let bound = rng.random_range(0.5..1.5);
    let x_bounds = vec![bound; n];
    let a2 = rand_affine(rng, n, l, n, n_pi, 0.5, 0.2, 0.0);
    let a3 = rand_affine(rng, n, l, n, mm, 1.0, 0.0, 0.1);
    let c1 = uniform_matrix(rng, p, n, 1.0);
    let k_star = uniform_matrix(rng, mm, p, 0.6);
    // Drift A_s - B K* C1: open-loop unstable in general, shifted below so
    // that u = K* y makes it contractive at every vertex of X x D.
    let a1_raw = rand_affine(rng, n, l, n, n, 1.0, 0.0, 0.2);
    let a_s = a1_raw.const_term() - a3.const_term() * &k_star * &c1;

    // Upsilon_1: pi_x rows depend on x only.
    let mut ups1 = rand_affine(rng, n, l, n_pi, n, 0.5, 0.5, 0.2);
    if n_pi_x > 0 {
        ups1 = zero_rows_of_delta(&ups1, n_pi_x);
    }
    // Upsilon_2 = -I + E(x) on the h-rows, -I on the pi_x rows.
    let per_coord = 0.3 / (n as f64 * bound);
    let mut e_x: Vec<DMatrix<f64>> = (0..n).map(|_| uniform_matrix(rng, n_pi, n_pi, per_coord / n_pi as f64)).collect();
    for e in &mut e_x {
        e.rows_mut(0, n_pi_x).fill(0.0);
    }
    let ups2 = affine(-DMatrix::identity(n_pi, n_pi), e_x, vec![DMatrix::zeros(n_pi, n_pi); l]);

    let use_ups3 = n_pi_x < n_pi && rng.random_bool(0.3);
    let mut ups3_c = if use_ups3 { uniform_matrix(rng, n_pi, mm, 0.5) } else { DMatrix::zeros(n_pi, mm) };
    ups3_c.rows_mut(0, n_pi_x).fill(0.0);
    let ups3 = AffineMatrix::constant(ups3_c, n, l);

    let c2 = if use_ups3 { DMatrix::zeros(p, n_pi) } else { uniform_matrix(rng, p, n_pi, 0.3) };

    let sigma = (n_pi_x > 0).then(|| {
        let rows = |a: &DMatrix<f64>| a.rows(0, n_pi_x).into_owned();
        let s1 = AffineMatrix::new(
            rows(ups1.const_term()),
            ups1.x_coeffs().iter().map(rows).collect(),
            ups1.delta_coeffs().iter().map(rows).collect(),
        )
        .expect("row slices keep consistent shapes");
        (s1, AffineMatrix::constant(-DMatrix::identity(n_pi_x, n_pi_x), n, l))
    });

    let u_bar = (0..mm).map(|_| rng.random_range(0.5..2.0)).collect();
    let d_bounds: Vec<f64> = (0..l).map(|_| rng.random_range(0.2..1.0)).collect();
    let x_set = Polytope::boxed(x_bounds).expect("positive bounds");
    let d_set = Polytope::boxed(d_bounds).expect("positive bounds");

    let a1 = affine(a_s, a1_raw.x_coeffs().to_vec(), a1_raw.delta_coeffs().to_vec());
    let worst = product_vertices(&x_set, &d_set)
        .iter()
        .map(|(x, d)| {
            let at = |a: &AffineMatrix| a.evaluate(x, d).expect("vertex has model dimensions");
            // C2 = 0 whenever Upsilon_3 != 0, so y = C1 x in that case.
            let rhs = at(&ups1) + at(&ups3) * &k_star * &c1;
            let pi = -at(&ups2).lu().solve(&rhs).expect("Upsilon_2 is invertible on X");
            let m_cl = at(&a1) + at(&a2) * &pi + at(&a3) * &k_star * (&c1 + &c2 * &pi);
            ((&m_cl + m_cl.transpose()) * 0.5).symmetric_eigenvalues().max()
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let shift = worst + rng.random_range(0.3..1.0);
    let a1 = affine(
        a1.const_term() - DMatrix::identity(n, n) * shift,
        a1.x_coeffs().to_vec(),
        a1.delta_coeffs().to_vec(),
    );

    DarModel::new(DarModelParts {
        dims: Dims { n, n_pi, n_pi_x, m: mm, p, l },
        a1,
        a2,
        a3,
        ups1,
        ups2,
        ups3,
        c1,
        c2,
        sigma,
        u_bar,
        x_set,
        d_set,
        pi_oracle: None,
    })
    .expect("generator produces consistent shapes")
}

fn uniform_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * rng.random_range(-1.0..=1.0))
}

#[allow(clippy::too_many_arguments)]
fn rand_affine<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    l: usize,
    rows: usize,
    cols: usize,
    s0: f64,
    sx: f64,
    sd: f64,
) -> AffineMatrix {
    let c0 = uniform_matrix(rng, rows, cols, s0);
    let xs = (0..n).map(|_| uniform_matrix(rng, rows, cols, sx)).collect();
    let ds = (0..l).map(|_| uniform_matrix(rng, rows, cols, sd)).collect();
    affine(c0, xs, ds)
}

fn zero_rows_of_delta(a: &AffineMatrix, rows: usize) -> AffineMatrix {
    let ds = a
        .delta_coeffs()
        .iter()
        .map(|d| {
            let mut d = d.clone();
            d.rows_mut(0, rows).fill(0.0);
            d
        })
        .collect();
    AffineMatrix::new(a.const_term().clone(), a.x_coeffs().to_vec(), ds).expect("same shapes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DEFAULT_CONDITION_CAP, DEFAULT_GRID_PER_AXIS};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn builtins_are_well_posed() {
        for model in [example1(), synthetic_mimo(MimoOutput::Scalar), synthetic_mimo(MimoOutput::Vector), rational_siso()] {
            let wp = model.check_well_posedness(DEFAULT_GRID_PER_AXIS, DEFAULT_CONDITION_CAP);
            assert!(wp.passed(), "{:?}", wp.failures);
        }
    }

    #[test]
    fn random_models_are_well_posed() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..40 {
            let model = random_model(&mut rng, RandomModelSpec::default());
            let wp = model.check_well_posedness(DEFAULT_GRID_PER_AXIS, DEFAULT_CONDITION_CAP);
            assert!(wp.passed(), "{:?} {:?}", model.dims(), wp.failures);
        }
    }
}
