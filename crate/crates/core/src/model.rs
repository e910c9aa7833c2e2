//! The plant in differential-algebraic form:
//!
//! ```text
//! xdot = A1(x,d) x + A2(x,d) pi + A3(x,d) sat(v)
//!    0 = U1(x,d) x + U2(x,d) pi + U3(x,d) sat(v)
//!    y = C1 x + C2 pi
//!    v = K y
//! ```

use nalgebra::{DMatrix, DVector, LU, SVD};

use crate::affine::{AffineMatrix, Polytope};
use crate::error::{Error, Result};
use crate::oracle::PiOracle;

/// Condition-number cap for `Upsilon_2` (and `Sigma_2`).
pub const DEFAULT_CONDITION_CAP: f64 = 1e8;

/// Interior grid resolution used by the well-posedness check.
pub const DEFAULT_GRID_PER_AXIS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub n_pi: usize,
    pub n_pi_x: usize,
    pub m: usize,
    pub p: usize,
    pub l: usize,
}

/// Output-feedback gain `v = K y`, `m x p`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrix(DMatrix<f64>);

impl GainMatrix {
    pub fn new(k: DMatrix<f64>) -> Result<Self> {
        if !k.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("gain has non-finite entries".into()));
        }
        Ok(Self(k))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}

/// Raw model data, validated by [`DarModel::new`].
#[derive(Debug, Clone)]
pub struct DarModelParts {
    pub dims: Dims,
    pub a1: AffineMatrix,
    pub a2: AffineMatrix,
    pub a3: AffineMatrix,
    pub ups1: AffineMatrix,
    pub ups2: AffineMatrix,
    pub ups3: AffineMatrix,
    pub c1: DMatrix<f64>,
    pub c2: DMatrix<f64>,
    /// `(Sigma_1, Sigma_2)`, required iff `n_pi_x > 0`.
    pub sigma: Option<(AffineMatrix, AffineMatrix)>,
    pub u_bar: Vec<f64>,
    pub x_set: Polytope,
    pub d_set: Polytope,
    pub pi_oracle: Option<PiOracle>,
}

#[derive(Debug, Clone)]
pub struct DarModel {
    dims: Dims,
    a1: AffineMatrix,
    a2: AffineMatrix,
    a3: AffineMatrix,
    ups1: AffineMatrix,
    ups2: AffineMatrix,
    ups3: AffineMatrix,
    c1: DMatrix<f64>,
    c2: DMatrix<f64>,
    sigma: Option<(AffineMatrix, AffineMatrix)>,
    u_bar: DVector<f64>,
    x_set: Polytope,
    d_set: Polytope,
    pi_oracle: Option<PiOracle>,
    // LU of Upsilon_2 when it does not depend on (x, d).
    ups2_const: Option<LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

/// One evaluation of the closed loop.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopPoint {
    pub xdot: DVector<f64>,
    pub y: DVector<f64>,
    pub v: DVector<f64>,
    pub u: DVector<f64>,
    pub pi: DVector<f64>,
}

impl DarModel {
    pub fn new(parts: DarModelParts) -> Result<Self> {
        let DarModelParts {
            dims,
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
            pi_oracle,
        } = parts;
        let Dims { n, n_pi, n_pi_x, m, p, l } = dims;
        if n == 0 {
            return Err(Error::Dimension("n must be positive".into()));
        }
        if n_pi_x > n_pi {
            return Err(Error::Dimension(format!("n_pi_x = {n_pi_x} exceeds n_pi = {n_pi}")));
        }
        let check = |name: &str, a: &AffineMatrix, rows: usize, cols: usize| -> Result<()> {
            if a.shape() != (rows, cols) || a.n_states() != n || a.n_uncertain() != l {
                return Err(Error::Dimension(format!(
                    "{name}: expected {rows}x{cols} affine in ({n}, {l}), got {:?} affine in ({}, {})",
                    a.shape(),
                    a.n_states(),
                    a.n_uncertain()
                )));
            }
            Ok(())
        };
        check("A1", &a1, n, n)?;
        check("A2", &a2, n, n_pi)?;
        check("A3", &a3, n, m)?;
        check("Ups1", &ups1, n_pi, n)?;
        check("Ups2", &ups2, n_pi, n_pi)?;
        check("Ups3", &ups3, n_pi, m)?;
        if c1.shape() != (p, n) {
            return Err(Error::Dimension(format!("C1: expected {p}x{n}, got {:?}", c1.shape())));
        }
        if c2.shape() != (p, n_pi) {
            return Err(Error::Dimension(format!("C2: expected {p}x{n_pi}, got {:?}", c2.shape())));
        }
        match (&sigma, n_pi_x) {
            (None, 0) => {}
            (Some(_), 0) => {
                return Err(Error::Dimension("Sigma1/Sigma2 given but n_pi_x = 0".into()));
            }
            (None, _) => {
                return Err(Error::Dimension("Sigma1/Sigma2 required when n_pi_x > 0".into()));
            }
            (Some((s1, s2)), k) => {
                check("Sigma1", s1, k, n)?;
                check("Sigma2", s2, k, k)?;
            }
        }
        if u_bar.len() != m {
            return Err(Error::Dimension(format!("u_bar: expected {m} entries, got {}", u_bar.len())));
        }
        if let Some(v) = u_bar.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput(format!("saturation bounds must be positive, got {v}")));
        }
        if x_set.dim() != n {
            return Err(Error::Dimension(format!("X has dimension {}, expected {n}", x_set.dim())));
        }
        if d_set.dim() != l {
            return Err(Error::Dimension(format!("D has dimension {}, expected {l}", d_set.dim())));
        }
        if let Some(o) = &pi_oracle {
            if o.len() != n_pi {
                return Err(Error::Dimension(format!("pi oracle has {} entries, expected {n_pi}", o.len())));
            }
            o.check_dims(n, m, l)?;
        }
        if !c2.iter().all(|v| *v == 0.0) && !ups3.is_zero() {
            return Err(Error::InvalidInput(
                "C2 != 0 together with Ups3 != 0 makes the output depend on sat(v); not supported".into(),
            ));
        }
        if !c1.iter().chain(c2.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("C1/C2 contain non-finite entries".into()));
        }
        let ups2_const = if ups2.is_constant() && n_pi > 0 {
            Some(ups2.const_term().clone().lu())
        } else {
            None
        };
        Ok(Self {
            dims,
            a1,
            a2,
            a3,
            ups1,
            ups2,
            ups3,
            c1,
            c2,
            sigma,
            u_bar: DVector::from_vec(u_bar),
            x_set,
            d_set,
            pi_oracle,
            ups2_const,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }
    pub fn a1(&self) -> &AffineMatrix {
        &self.a1
    }
    pub fn a2(&self) -> &AffineMatrix {
        &self.a2
    }
    pub fn a3(&self) -> &AffineMatrix {
        &self.a3
    }
    pub fn ups1(&self) -> &AffineMatrix {
        &self.ups1
    }
    pub fn ups2(&self) -> &AffineMatrix {
        &self.ups2
    }
    pub fn ups3(&self) -> &AffineMatrix {
        &self.ups3
    }
    pub fn c1(&self) -> &DMatrix<f64> {
        &self.c1
    }
    pub fn c2(&self) -> &DMatrix<f64> {
        &self.c2
    }
    pub fn sigma(&self) -> Option<(&AffineMatrix, &AffineMatrix)> {
        self.sigma.as_ref().map(|(a, b)| (a, b))
    }
    pub fn u_bar(&self) -> &DVector<f64> {
        &self.u_bar
    }
    pub fn x_set(&self) -> &Polytope {
        &self.x_set
    }
    pub fn d_set(&self) -> &Polytope {
        &self.d_set
    }
    pub fn pi_oracle(&self) -> Option<&PiOracle> {
        self.pi_oracle.as_ref()
    }

    /// Copy of the model with a different oracle (or none).
    pub fn with_pi_oracle(mut self, oracle: Option<PiOracle>) -> Result<Self> {
        if let Some(o) = &oracle {
            if o.len() != self.dims.n_pi {
                return Err(Error::Dimension("pi oracle length mismatch".into()));
            }
            o.check_dims(self.dims.n, self.dims.m, self.dims.l)?;
        }
        self.pi_oracle = oracle;
        Ok(self)
    }

    fn check_point(&self, x: &[f64], delta: &[f64]) -> Result<()> {
        if x.len() != self.dims.n || delta.len() != self.dims.l {
            return Err(Error::Dimension(format!(
                "point has (len x, len d) = ({}, {}), expected ({}, {})",
                x.len(),
                delta.len(),
                self.dims.n,
                self.dims.l
            )));
        }
        Ok(())
    }

    /// Solves `U2 pi = -(U1 x + U3 u)`.
    pub fn recover_pi(&self, x: &[f64], delta: &[f64], u_sat: &[f64]) -> Result<DVector<f64>> {
        self.check_point(x, delta)?;
        if u_sat.len() != self.dims.m {
            return Err(Error::Dimension(format!("u has length {}, expected {}", u_sat.len(), self.dims.m)));
        }
        self.pi_unchecked(x, delta, u_sat)
    }

    pub(crate) fn pi_unchecked(&self, x: &[f64], delta: &[f64], u_sat: &[f64]) -> Result<DVector<f64>> {
        if self.dims.n_pi == 0 {
            return Ok(DVector::zeros(0));
        }
        let xv = DVector::from_column_slice(x);
        let mut rhs = -(self.ups1.eval(x, delta) * &xv);
        if !self.ups3.is_zero() {
            rhs -= self.ups3.eval(x, delta) * DVector::from_column_slice(u_sat);
        }
        let solved = match &self.ups2_const {
            Some(lu) => lu.solve(&rhs),
            None => {
                let u2 = self.ups2.eval(x, delta);
                let cond = condition_number(&u2);
                if cond > DEFAULT_CONDITION_CAP {
                    return Err(self.wp_error(x, delta, format!("cond(Ups2) = {cond:.3e}")));
                }
                u2.lu().solve(&rhs)
            }
        };
        match solved {
            Some(pi) if pi.iter().all(|v| v.is_finite()) => Ok(pi),
            _ => Err(self.wp_error(x, delta, "Ups2 is singular".into())),
        }
    }

    fn wp_error(&self, x: &[f64], delta: &[f64], reason: String) -> Error {
        Error::WellPosedness {
            x: x.to_vec(),
            delta: delta.to_vec(),
            reason,
        }
    }

    /// Closed-loop vector field with `v = K y`.
    ///
    /// `pi` is first computed with `sat(v) = 0`. That value is exact for the
    /// output whenever `U3 = 0` or `C2 = 0`, which the constructor enforces;
    /// `pi` is then recomputed with the actual saturated input.
    pub fn closed_loop(&self, k: &GainMatrix, x: &[f64], delta: &[f64]) -> Result<LoopPoint> {
        self.check_point(x, delta)?;
        let Dims { m, p, .. } = self.dims;
        if k.matrix().shape() != (m, p) {
            return Err(Error::Dimension(format!(
                "gain is {:?}, expected {m}x{p}",
                k.matrix().shape()
            )));
        }
        self.closed_loop_unchecked(k.matrix(), x, delta)
    }

    pub(crate) fn closed_loop_unchecked(&self, k: &DMatrix<f64>, x: &[f64], delta: &[f64]) -> Result<LoopPoint> {
        let m = self.dims.m;
        let zeros = vec![0.0; m];
        let xv = DVector::from_column_slice(x);
        let pi_free = self.pi_unchecked(x, delta, &zeros)?;
        let y = &self.c1 * &xv + &self.c2 * &pi_free;
        let v = k * &y;
        let u = saturate(&v, &self.u_bar);
        let pi = if self.ups3.is_zero() {
            pi_free
        } else {
            self.pi_unchecked(x, delta, u.as_slice())?
        };
        let mut xdot = self.a1.eval(x, delta) * &xv;
        if self.dims.n_pi > 0 {
            xdot += self.a2.eval(x, delta) * &pi;
        }
        xdot += self.a3.eval(x, delta) * &u;
        Ok(LoopPoint { xdot, y, v, u, pi })
    }

    /// Closed-loop `xdot` only.
    pub fn closed_loop_derivative(&self, k: &GainMatrix, x: &[f64], delta: &[f64]) -> Result<DVector<f64>> {
        Ok(self.closed_loop(k, x, delta)?.xdot)
    }

    /// Verifies invertibility of `Upsilon_2` at the vertices of `X x D` and
    /// on a regular interior grid, invertibility of `Sigma_2` at the same
    /// points, and the null relation `Sigma_1 x + Sigma_2 pi_x = 0` with
    /// `pi_x` taken from [`recover_pi`](Self::recover_pi) for `u = 0` and
    /// `u = u_bar`.
    ///
    /// This is sampling-based evidence, not an exhaustive proof.
    pub fn check_well_posedness(&self, per_axis: usize, condition_cap: f64) -> WellPosednessReport {
        let xs = self.x_set.check_points(per_axis);
        let ds = if self.dims.l == 0 {
            vec![Vec::new()]
        } else {
            self.d_set.check_points(per_axis)
        };
        let mut report = WellPosednessReport::default();
        let u_max: Vec<f64> = self.u_bar.iter().copied().collect();
        let u_zero = vec![0.0; self.dims.m];
        for x in &xs {
            for d in &ds {
                report.points_checked += 1;
                if self.dims.n_pi > 0 {
                    let cond = condition_number(&self.ups2.eval(x, d));
                    if cond > report.worst_condition {
                        report.worst_condition = cond;
                        report.worst_point = Some((x.clone(), d.clone()));
                    }
                    if !(cond <= condition_cap) {
                        report.failures.push(format!(
                            "Ups2 ill-conditioned (cond = {cond:.3e}) at x = {x:?}, d = {d:?}"
                        ));
                        continue;
                    }
                }
                if let Some((s1, s2)) = &self.sigma {
                    let s2v = s2.eval(x, d);
                    let cond = condition_number(&s2v);
                    if !(cond <= condition_cap) {
                        report.failures.push(format!(
                            "Sigma2 ill-conditioned (cond = {cond:.3e}) at x = {x:?}, d = {d:?}"
                        ));
                        continue;
                    }
                    let k = self.dims.n_pi_x;
                    let xv = DVector::from_column_slice(x);
                    for u in [&u_zero, &u_max] {
                        let Ok(pi) = self.pi_unchecked(x, d, u) else { continue };
                        let pix = pi.rows(0, k).into_owned();
                        let r = s1.eval(x, d) * &xv + &s2v * pix;
                        let scale = 1.0 + xv.amax();
                        report.null_residual = report.null_residual.max(r.amax() / scale);
                    }
                }
            }
        }
        if report.null_residual > 1e-8 {
            report.failures.push(format!(
                "Sigma1 x + Sigma2 pi_x = 0 violated (max residual {:.3e})",
                report.null_residual
            ));
        }
        report
    }

    /// Compares the DAR algebraic constraint with the oracle nonlinearity.
    pub fn residual_check(&self, samples: &[(Vec<f64>, Vec<f64>, Vec<f64>)]) -> Result<ResidualReport> {
        let oracle = self
            .pi_oracle
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("residual check needs a pi oracle".into()))?;
        let mut report = ResidualReport::default();
        for (x, d, u) in samples {
            self.check_point(x, d)?;
            if u.len() != self.dims.m {
                return Err(Error::Dimension("sample input length mismatch".into()));
            }
            let pi_o = DVector::from_vec(oracle.eval(x, u, d));
            let xv = DVector::from_column_slice(x);
            let uv = DVector::from_column_slice(u);
            let r = self.ups1.eval(x, d) * &xv + self.ups2.eval(x, d) * &pi_o + self.ups3.eval(x, d) * &uv;
            let pi = self.pi_unchecked(x, d, u)?;
            report.samples += 1;
            report.max_constraint_residual = report.max_constraint_residual.max(r.norm());
            report.max_pi_mismatch = report.max_pi_mismatch.max((&pi - &pi_o).norm());
        }
        Ok(report)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WellPosednessReport {
    pub points_checked: usize,
    pub worst_condition: f64,
    pub worst_point: Option<(Vec<f64>, Vec<f64>)>,
    pub null_residual: f64,
    pub failures: Vec<String>,
}

impl WellPosednessReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResidualReport {
    pub samples: usize,
    /// max `|U1 x + U2 pi_oracle + U3 u|`
    pub max_constraint_residual: f64,
    /// max `|pi_oracle - recover_pi|`
    pub max_pi_mismatch: f64,
}

impl ResidualReport {
    pub fn max_residual(&self) -> f64 {
        self.max_constraint_residual.max(self.max_pi_mismatch)
    }
}

/// Componentwise clamp to `[-u_bar_i, u_bar_i]`.
pub fn saturate(v: &DVector<f64>, u_bar: &DVector<f64>) -> DVector<f64> {
    v.zip_map(u_bar, |vi, ui| vi.clamp(-ui, ui))
}

/// `sat(v) - v`.
pub fn deadzone(v: &DVector<f64>, u_bar: &DVector<f64>) -> DVector<f64> {
    saturate(v, u_bar) - v
}

/// 2-norm condition number; `inf` for singular matrices.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let sv = SVD::new(m.clone(), false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::example1;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn saturate_examples() {
        assert_eq!(saturate(&v(&[0.5]), &v(&[1.0]))[0], 0.5);
        assert_eq!(saturate(&v(&[-3.0]), &v(&[1.5]))[0], -1.5);
        assert_eq!(saturate(&v(&[2.0, -0.3]), &v(&[1.0, 1.0])), v(&[1.0, -0.3]));
    }

    #[test]
    fn deadzone_examples() {
        assert_eq!(deadzone(&v(&[0.5]), &v(&[1.0]))[0], 0.0);
        assert_eq!(deadzone(&v(&[2.0]), &v(&[1.5]))[0], -0.5);
        assert_eq!(deadzone(&v(&[-3.0, 0.0]), &v(&[1.0, 1.0])), v(&[2.0, 0.0]));
    }

    #[test]
    fn recover_pi_example1() {
        let model = example1();
        assert_eq!(model.recover_pi(&[0.0, 0.0], &[], &[0.7]).unwrap(), v(&[0.0, 0.0]));
        let pi = model.recover_pi(&[0.5, 0.2], &[], &[-1.0]).unwrap();
        assert!((pi - v(&[0.25, 0.04])).amax() < 1e-15);
    }

    #[test]
    fn singular_ups2_is_reported() {
        // Ups2 = diag(x1, 1) is singular at x1 = 0.
        let n = 2;
        let ups2 = AffineMatrix::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]),
            vec![DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]), DMatrix::zeros(2, 2)],
            vec![],
        )
        .unwrap();
        let parts = crate::library::example1_parts();
        let model = DarModel::new(DarModelParts { ups2, ..parts }).unwrap();
        let err = model.recover_pi(&[0.0, 0.3], &[], &[0.0]).unwrap_err();
        assert!(matches!(err, Error::WellPosedness { .. }));
        let k = GainMatrix::new(DMatrix::from_element(1, 1, 0.3785)).unwrap();
        assert!(model.closed_loop_derivative(&k, &[0.0, 0.3], &[]).is_err());
        let wp = model.check_well_posedness(DEFAULT_GRID_PER_AXIS, DEFAULT_CONDITION_CAP);
        assert!(!wp.passed());
        assert_eq!(n, model.dims().n);
    }

    #[test]
    fn example1_is_well_posed() {
        let wp = example1().check_well_posedness(DEFAULT_GRID_PER_AXIS, DEFAULT_CONDITION_CAP);
        assert!(wp.passed(), "{:?}", wp.failures);
        assert_eq!(wp.points_checked, 4 + 25);
        assert!(wp.null_residual < 1e-12);
    }

    #[test]
    fn origin_is_equilibrium() {
        let model = example1();
        let k = GainMatrix::new(DMatrix::from_element(1, 1, 0.3785)).unwrap();
        assert_eq!(model.closed_loop_derivative(&k, &[0.0, 0.0], &[]).unwrap(), v(&[0.0, 0.0]));
    }

    #[test]
    fn residual_check_cases() {
        let model = example1();
        let r = model.residual_check(&[]).unwrap();
        assert_eq!(r.max_residual(), 0.0);
        assert_eq!(r.samples, 0);

        // Perturbing A2 does not affect the Upsilon-row residual.
        let mut parts = crate::library::example1_parts();
        parts.a2 = parts.a2.map(|m| m.add_scalar(1e-3)).unwrap();
        let perturbed = DarModel::new(parts).unwrap();
        let samples = vec![(vec![0.3, -0.7], vec![], vec![0.2])];
        assert!(perturbed.residual_check(&samples).unwrap().max_residual() < 1e-15);

        let no_oracle = example1().with_pi_oracle(None).unwrap();
        assert!(no_oracle.residual_check(&samples).is_err());
    }

    #[test]
    fn rejects_output_loop_through_saturation() {
        let mut parts = crate::library::example1_parts();
        parts.c2 = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        parts.ups3 = AffineMatrix::constant(DMatrix::from_row_slice(2, 1, &[1.0, 0.0]), 2, 0);
        parts.pi_oracle = None;
        assert!(DarModel::new(parts).is_err());
    }

    #[test]
    fn rejects_bad_dimensions() {
        let mut parts = crate::library::example1_parts();
        parts.u_bar = vec![1.0, 1.0];
        assert!(DarModel::new(parts).is_err());
        let mut parts = crate::library::example1_parts();
        parts.u_bar = vec![0.0];
        assert!(DarModel::new(parts).is_err());
        let mut parts = crate::library::example1_parts();
        parts.sigma = None;
        assert!(DarModel::new(parts).is_err());
    }

    proptest! {
        #[test]
        fn saturation_identities(vals in prop::collection::vec(-10.0f64..10.0, 3), bounds in prop::collection::vec(0.1f64..5.0, 3)) {
            let vv = v(&vals);
            let ub = v(&bounds);
            let s = saturate(&vv, &ub);
            prop_assert_eq!(saturate(&s, &ub), s.clone());
            let dz = deadzone(&vv, &ub);
            for i in 0..3 {
                prop_assert_eq!(dz[i] == 0.0, s[i] == vv[i]);
                prop_assert!((s[i] - (vv[i] + dz[i])).abs() <= 1e-15);
            }
        }
    }
}
