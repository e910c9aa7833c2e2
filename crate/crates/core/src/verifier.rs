//! Solver-free checks of a certificate against the raw model.
//!
//! Every matrix here is rebuilt numerically from the model data and the
//! certificate blocks; nothing is read back from the symbolic assembly or
//! the solver report.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::affine::product_vertices;
use crate::error::{Error, Result};
use crate::lmi::supply_multiplier;
use crate::model::{deadzone, DarModel, GainMatrix};
use crate::simulate::{
    ellipsoid_boundary_points, random_directions, simulate, DeltaMode, DeltaSignal, SimOptions, Termination,
};
use crate::synthesis::Certificate;

pub const DEFAULT_SEED: u64 = 2024;

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Points on the boundary of `E(P,1)` for the sector-set check.
    pub boundary_samples: usize,
    /// Points inside `E(P,1)` for the dissipation check.
    pub interior_samples: usize,
    /// Random `(x, d)` in `X x D` for the interior LMI re-evaluation.
    pub parameter_samples: usize,
    /// Random `(y, Ky)` pairs for the supply-rate sign.
    pub supply_samples: usize,
    pub trajectories: usize,
    pub sim: SimOptions,
    pub convergence_tol: f64,
    /// Allowed negative margin of the vertex LMIs.
    pub lmi_tol: f64,
    /// Allowed excess over `u_bar` in the sector-set check.
    pub sector_tol: f64,
    /// Relative tolerance of `max eig(Q - S R^-1 S') <= tol * scale`.
    pub schur_tol_rel: f64,
    /// Relative tolerance between the given gain and `-R^-1 S'`.
    pub gain_tol: f64,
    /// Signal generators, used round-robin over the trajectories; empty
    /// means `zero` for `l = 0` and cycle/random/sine otherwise.
    pub delta_modes: Vec<DeltaMode>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            boundary_samples: 10_000,
            interior_samples: 10_000,
            parameter_samples: 1_000,
            supply_samples: 1_000,
            trajectories: 100,
            sim: SimOptions {
                t_final: 50.0,
                step: 1e-2,
                record_every: 0,
                ..SimOptions::default()
            },
            convergence_tol: 1e-3,
            lmi_tol: 1e-7,
            sector_tol: 1e-8,
            schur_tol_rel: 1e-7,
            gain_tol: 1e-6,
            delta_modes: Vec::new(),
        }
    }
}

/// One named check. It passes iff `worst_margin >= threshold` (or `>` when
/// `strict`).
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub samples: usize,
    pub worst_margin: f64,
    pub threshold: f64,
    pub strict: bool,
    pub passed: bool,
    pub note: Option<String>,
}

impl CheckResult {
    fn new(name: &str, samples: usize, worst_margin: f64, threshold: f64, strict: bool) -> Self {
        let passed = if strict {
            worst_margin > threshold
        } else {
            worst_margin >= threshold
        };
        Self {
            name: name.to_string(),
            samples,
            worst_margin,
            threshold,
            strict,
            passed,
            note: None,
        }
    }

    fn failed(name: &str, samples: usize, note: String) -> Self {
        Self {
            name: name.to_string(),
            samples,
            worst_margin: f64::NEG_INFINITY,
            threshold: 0.0,
            strict: false,
            passed: false,
            note: Some(note),
        }
    }

    fn with_note(mut self, note: Option<String>) -> Self {
        self.note = note;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect()
    }
}

pub fn max_eig(m: &DMatrix<f64>) -> f64 {
    let s = (m + m.transpose()) * 0.5;
    s.symmetric_eigenvalues().max()
}

pub fn min_eig(m: &DMatrix<f64>) -> f64 {
    let s = (m + m.transpose()) * 0.5;
    s.symmetric_eigenvalues().min()
}

fn he(m: &DMatrix<f64>) -> DMatrix<f64> {
    m + m.transpose()
}

fn check_shapes(model: &DarModel, cert: &Certificate) -> Result<()> {
    let d = model.dims();
    let size = d.n + d.n_pi + 2 * d.m;
    let want = [
        ("P", cert.p.shape(), (d.n, d.n)),
        ("N", cert.n.shape(), (d.n, d.n)),
        ("Q", cert.q.shape(), (d.p, d.p)),
        ("S", cert.s.shape(), (d.p, d.m)),
        ("R", cert.r.shape(), (d.m, d.m)),
        ("W", cert.w.shape(), (d.m, d.m)),
        ("Imult", cert.imult.shape(), (size, d.n_pi)),
    ];
    for (name, got, exp) in want {
        if got != exp {
            return Err(Error::Dimension(format!("certificate {name} is {got:?}, expected {exp:?}")));
        }
    }
    let coeffs = [1, 1 + d.n + d.l];
    if !coeffs.contains(&cert.gbar.len()) || cert.gbar.iter().any(|g| g.shape() != (d.m, d.n)) {
        return Err(Error::Dimension("certificate Gbar has the wrong shape".into()));
    }
    if d.n_pi_x > 0 {
        let z_ok = cert.z.as_ref().is_some_and(|z| z.shape() == (d.n_pi_x, d.n_pi_x));
        if !z_ok || cert.gbar_pi.len() != cert.gbar.len() || cert.gbar_pi.iter().any(|g| g.shape() != (d.m, d.n_pi_x)) {
            return Err(Error::Dimension("certificate Z / Gbar_pi do not match n_pi_x".into()));
        }
    } else if cert.z.is_some() || !cert.gbar_pi.is_empty() {
        return Err(Error::Dimension("certificate has Z / Gbar_pi but the model has no pi_x".into()));
    }
    Ok(())
}

fn gbar_at(coeffs: &[DMatrix<f64>], x: &[f64], delta: &[f64]) -> DMatrix<f64> {
    Certificate::affine_gbar_at(coeffs, x, delta).expect("shape-checked certificate")
}

/// Numeric `Phi + He(I Gamma)` at `(x, d)`, block order `(x, pi, v, phi)`.
pub fn dissipativity_matrix(model: &DarModel, cert: &Certificate, x: &[f64], delta: &[f64]) -> DMatrix<f64> {
    let d = model.dims();
    let (n, np, m) = (d.n, d.n_pi, d.m);
    let a1 = model.a1().eval(x, delta);
    let a2 = model.a2().eval(x, delta);
    let a3 = model.a3().eval(x, delta);
    let (c1, c2) = (model.c1(), model.c2());
    let (p, q, s, r, w) = (&cert.p, &cert.q, &cert.s, &cert.r, &cert.w);
    let gbar = gbar_at(&cert.gbar, x, delta);
    let mut g_aux = DMatrix::zeros(m, np);
    if d.n_pi_x > 0 {
        g_aux.columns_mut(0, d.n_pi_x).copy_from(&gbar_at(&cert.gbar_pi, x, delta));
    }

    let size = n + np + 2 * m;
    let (ox, op, ov, of) = (0, n, n + np, n + np + m);
    let mut phi = DMatrix::zeros(size, size);
    let mut put = |r0: usize, c0: usize, b: DMatrix<f64>| {
        phi.view_mut((r0, c0), b.shape()).copy_from(&b);
        if r0 != c0 {
            phi.view_mut((c0, r0), (b.ncols(), b.nrows())).copy_from(&b.transpose());
        }
    };
    put(ox, ox, he(&(p * &a1)) + &cert.n - c1.transpose() * q * c1);
    put(op, ox, a2.transpose() * p - c2.transpose() * q * c1);
    put(op, op, -(c2.transpose() * q * c2));
    put(ov, ox, a3.transpose() * p - s.transpose() * c1);
    put(ov, op, -(s.transpose() * c2));
    put(ov, ov, -r.clone());
    put(of, ox, a3.transpose() * p + gbar);
    put(of, op, g_aux);
    put(of, ov, -w.clone());
    put(of, of, -w * 2.0);

    if np > 0 {
        let mut gamma = DMatrix::zeros(np, size);
        let u3 = model.ups3().eval(x, delta);
        gamma.columns_mut(ox, n).copy_from(&model.ups1().eval(x, delta));
        gamma.columns_mut(op, np).copy_from(&model.ups2().eval(x, delta));
        gamma.columns_mut(ov, m).copy_from(&u3);
        gamma.columns_mut(of, m).copy_from(&u3);
        phi += he(&(&cert.imult * gamma));
    }
    phi
}

/// Numeric sector-inclusion block of channel `i` at `(x, d)` (must be PSD).
pub fn sector_matrix(model: &DarModel, cert: &Certificate, x: &[f64], delta: &[f64], i: usize) -> DMatrix<f64> {
    let d = model.dims();
    let gi = gbar_at(&cert.gbar, x, delta).row(i).transpose();
    let u = model.u_bar()[i];
    let corner = 2.0 * cert.w[(i, i)] - 1.0 / (u * u);
    match (model.sigma(), &cert.z) {
        (Some((s1, s2)), Some(z)) => {
            let k = d.n_pi_x;
            let size = d.n + k + 1;
            let mut b = DMatrix::zeros(size, size);
            let z_s1 = z * s1.eval(x, delta);
            let gpi = gbar_at(&cert.gbar_pi, x, delta).row(i).transpose();
            b.view_mut((0, 0), (d.n, d.n)).copy_from(&cert.p);
            b.view_mut((d.n, 0), (k, d.n)).copy_from(&z_s1);
            b.view_mut((0, d.n), (d.n, k)).copy_from(&z_s1.transpose());
            b.view_mut((d.n, d.n), (k, k)).copy_from(&he(&(z * s2.eval(x, delta))));
            b.view_mut((0, d.n + k), (d.n, 1)).copy_from(&gi);
            b.view_mut((d.n + k, 0), (1, d.n)).copy_from(&gi.transpose());
            b.view_mut((d.n, d.n + k), (k, 1)).copy_from(&gpi);
            b.view_mut((d.n + k, d.n), (1, k)).copy_from(&gpi.transpose());
            b[(size - 1, size - 1)] = corner;
            b
        }
        _ => {
            let mut b = DMatrix::zeros(d.n + 1, d.n + 1);
            b.view_mut((0, 0), (d.n, d.n)).copy_from(&cert.p);
            b.view_mut((0, d.n), (d.n, 1)).copy_from(&gi);
            b.view_mut((d.n, 0), (1, d.n)).copy_from(&gi.transpose());
            b[(d.n, d.n)] = corner;
            b
        }
    }
}

/// `[P a; a' 1]` for facet normal `a` (must be PSD).
pub fn facet_matrix(p: &DMatrix<f64>, a: &DVector<f64>) -> DMatrix<f64> {
    let n = p.nrows();
    let mut b = DMatrix::zeros(n + 1, n + 1);
    b.view_mut((0, 0), (n, n)).copy_from(p);
    b.view_mut((0, n), (n, 1)).copy_from(a);
    b.view_mut((n, 0), (1, n)).copy_from(&a.transpose());
    b[(n, n)] = 1.0;
    b
}

/// `[Q S; S' R] + He(Ls [S' R])` (must be negative definite).
pub fn supply_matrix(cert: &Certificate, ls: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, m) = cert.s.shape();
    let mut md = DMatrix::zeros(p + m, p + m);
    md.view_mut((0, 0), (p, p)).copy_from(&cert.q);
    md.view_mut((0, p), (p, m)).copy_from(&cert.s);
    md.view_mut((p, 0), (m, p)).copy_from(&cert.s.transpose());
    md.view_mut((p, p), (m, m)).copy_from(&cert.r);
    let mut cs = DMatrix::zeros(m, p + m);
    cs.view_mut((0, 0), (m, p)).copy_from(&cert.s.transpose());
    cs.view_mut((0, p), (m, m)).copy_from(&cert.r);
    md + he(&(ls * cs))
}

/// Worst margins of the four families at one `(x, d)`: dissipativity and
/// supply as `-max eig`, sector and facet as `min eig`.
fn family_margins(model: &DarModel, cert: &Certificate, ls: &DMatrix<f64>, x: &[f64], delta: &[f64]) -> [f64; 4] {
    let diss = -max_eig(&dissipativity_matrix(model, cert, x, delta));
    let sector = (0..model.dims().m)
        .map(|i| min_eig(&sector_matrix(model, cert, x, delta, i)))
        .fold(f64::INFINITY, f64::min);
    let facet = model
        .x_set()
        .facets()
        .iter()
        .map(|a| min_eig(&facet_matrix(&cert.p, a)))
        .fold(f64::INFINITY, f64::min);
    let supply = -max_eig(&supply_matrix(cert, ls));
    [diss, sector, facet, supply]
}

const FAMILY_NAMES: [&str; 4] = ["dissipativity-lmi", "sector-lmi", "facet-lmi", "supply-lmi"];

/// Re-evaluates the four matrix inequalities at every vertex of `X x D`,
/// with the supply multiplier built from the certificate's own `(S, R)`.
pub fn check_vertex_lmis(model: &DarModel, cert: &Certificate, tol: f64) -> Result<Vec<CheckResult>> {
    check_shapes(model, cert)?;
    let ls = supply_multiplier(&cert.s, &cert.r)?;
    let vertices = product_vertices(model.x_set(), model.d_set());
    let mut worst = [f64::INFINITY; 4];
    for (x, d) in &vertices {
        for (w, v) in worst.iter_mut().zip(family_margins(model, cert, &ls, x, d)) {
            *w = w.min(v);
        }
    }
    Ok(FAMILY_NAMES
        .iter()
        .zip(worst)
        .map(|(name, w)| CheckResult::new(name, vertices.len(), w, -tol, false))
        .collect())
}

/// The same inequalities at random interior points of `X x D`; convexity
/// in `(x, d)` means these margins can only be better than the vertex ones.
pub fn check_vertex_sufficiency(model: &DarModel, cert: &Certificate, samples: usize, seed: u64) -> Result<CheckResult> {
    check_shapes(model, cert)?;
    let ls = supply_multiplier(&cert.s, &cert.r)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    let mut at = None;
    for _ in 0..samples {
        let x = model.x_set().sample(&mut rng);
        let d = model.d_set().sample(&mut rng);
        let w = family_margins(model, cert, &ls, &x, &d).into_iter().fold(f64::INFINITY, f64::min);
        if w < worst {
            worst = w;
            at = Some((x, d));
        }
    }
    let note = at.map(|(x, d)| format!("worst at x = {x:?}, d = {d:?}"));
    Ok(CheckResult::new("vertex-sufficiency", samples, worst, 0.0, false).with_note(note))
}

pub fn check_definiteness(cert: &Certificate) -> CheckResult {
    let w_diag = cert.w.diagonal().min();
    let off_diag = (cert.w.clone() - DMatrix::from_diagonal(&cert.w.diagonal())).amax();
    let margin = min_eig(&cert.p).min(min_eig(&cert.n)).min(min_eig(&cert.r)).min(w_diag);
    let mut c = CheckResult::new("definiteness", 4, margin, 0.0, true);
    if off_diag != 0.0 {
        c.passed = false;
        c.note = Some(format!("W has off-diagonal entries up to {off_diag:e}"));
    }
    c
}

pub fn check_schur(cert: &Certificate, tol_rel: f64) -> Result<CheckResult> {
    let tol = tol_rel * cert.supply_scale();
    let r_inv_st = cert
        .r
        .clone()
        .lu()
        .solve(&cert.s.transpose())
        .ok_or_else(|| Error::InvalidInput("R is singular".into()))?;
    let worst = if cert.q.nrows() == 0 {
        f64::NEG_INFINITY
    } else {
        max_eig(&(&cert.q - &cert.s * r_inv_st))
    };
    Ok(CheckResult::new("schur", 1, -worst, -tol, false))
}

/// `a_k' P^-1 a_k <= 1` for every facet, i.e. `E(P,1)` inside `X`.
pub fn check_facet_inclusion(model: &DarModel, cert: &Certificate) -> Result<CheckResult> {
    let chol = cert
        .p
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidInput("P is not positive definite".into()))?;
    let facets = model.x_set().facets();
    let worst = facets
        .iter()
        .map(|a| 1.0 - a.dot(&chol.solve(a)))
        .fold(f64::INFINITY, f64::min);
    Ok(CheckResult::new("facet-inclusion", facets.len(), worst, -1e-8, false))
}

fn uncertainty_vertices(model: &DarModel) -> Vec<Vec<f64>> {
    if model.dims().l == 0 {
        vec![Vec::new()]
    } else {
        model.d_set().vertices().iter().map(|v| v.iter().copied().collect()).collect()
    }
}

/// `|G_i x + G_pi,i pi_x| <= u_bar_i` on boundary samples of `E(P,1)`
/// against every vertex of `D`.
pub fn check_sector_inclusion(model: &DarModel, cert: &Certificate, samples: usize, tol: f64, seed: u64) -> Result<CheckResult> {
    check_shapes(model, cert)?;
    let d = model.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = ellipsoid_boundary_points(&cert.p, &random_directions(&mut rng, d.n, samples), 1.0);
    let deltas = uncertainty_vertices(model);
    let u_zero = vec![0.0; d.m];
    let mut worst = f64::INFINITY;
    let mut checked = 0;
    for x in &points {
        for delta in &deltas {
            let xs = x.as_slice();
            let g = cert.g_at(xs, delta)?;
            let mut level = &g * x;
            if let Some(gpi) = cert.g_pi_at(xs, delta)? {
                // pi_x rows do not depend on the input.
                let pi = match model.recover_pi(xs, delta, &u_zero) {
                    Ok(pi) => pi,
                    Err(e) => return Ok(CheckResult::failed("sector-inclusion", checked, e.to_string())),
                };
                level += gpi * pi.rows(0, d.n_pi_x);
            }
            for i in 0..d.m {
                worst = worst.min(model.u_bar()[i] - level[i].abs());
            }
            checked += 1;
        }
    }
    Ok(CheckResult::new("sector-inclusion", checked, worst, -tol, false))
}

/// Uniform point in the unit ball mapped into `E(P,1)`.
fn interior_point<R: Rng + ?Sized>(rng: &mut R, p_inv_sqrt: &DMatrix<f64>) -> DVector<f64> {
    let n = p_inv_sqrt.nrows();
    let mut dir = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
    let norm = dir.norm();
    if norm > 0.0 {
        dir /= norm;
    }
    let radius = rng.random::<f64>().powf(1.0 / n as f64);
    p_inv_sqrt * dir * radius
}

fn inv_sqrt(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = p.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidInput("P is not positive definite".into()));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// Along the closed loop inside `E(P,1)`:
/// `Vdot + x'Nx + B <= y'Qy + 2y'Sv + v'Rv` with `v = K y`, and `Vdot < 0`
/// away from the origin. Returns the two checks.
pub fn check_dissipation(
    model: &DarModel,
    cert: &Certificate,
    k: &GainMatrix,
    samples: usize,
    seed: u64,
) -> Result<[CheckResult; 2]> {
    check_shapes(model, cert)?;
    let d = model.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p_inv_sqrt = inv_sqrt(&cert.p)?;
    let max_axis = 1.0 / min_eig(&cert.p).sqrt();
    let floor = 1e-6 * max_axis;
    let deltas = uncertainty_vertices(model);
    let (mut worst_diss, mut worst_vdot) = (f64::INFINITY, f64::INFINITY);
    let (mut diss_at, mut vdot_at) = (None, None);
    let mut strict_samples = 0;
    for i in 0..samples {
        let x = interior_point(&mut rng, &p_inv_sqrt);
        // Alternate between vertices of D and random interior points.
        let delta = if i % 2 == 0 || d.l == 0 {
            deltas[(i / 2) % deltas.len()].clone()
        } else {
            model.d_set().sample(&mut rng)
        };
        let xs = x.as_slice();
        let pt = match model.closed_loop(k, xs, &delta) {
            Ok(pt) => pt,
            Err(e) => {
                let c = CheckResult::failed("dissipation", i, e.to_string());
                return Ok([c.clone(), CheckResult { name: "vdot-negative".into(), ..c }]);
            }
        };
        let vdot = 2.0 * x.dot(&(&cert.p * &pt.xdot));
        let t = x.dot(&(&cert.n * &x));
        let phi = deadzone(&pt.v, model.u_bar());
        let mut theta = &pt.v - cert.g_at(xs, &delta)? * &x;
        if let Some(gpi) = cert.g_pi_at(xs, &delta)? {
            theta -= gpi * pt.pi.rows(0, d.n_pi_x);
        }
        let b = -2.0 * phi.dot(&(&cert.w * (&phi + theta)));
        let r = pt.y.dot(&(&cert.q * &pt.y)) + 2.0 * pt.y.dot(&(&cert.s * &pt.v)) + pt.v.dot(&(&cert.r * &pt.v));
        let margin = r - (vdot + t + b);
        if margin < worst_diss {
            worst_diss = margin;
            diss_at = Some((xs.to_vec(), delta.clone()));
        }
        if x.norm() >= floor {
            strict_samples += 1;
            if -vdot < worst_vdot {
                worst_vdot = -vdot;
                vdot_at = Some((xs.to_vec(), delta));
            }
        }
    }
    let note = |at: Option<(Vec<f64>, Vec<f64>)>| at.map(|(x, d)| format!("worst at x = {x:?}, d = {d:?}"));
    Ok([
        CheckResult::new("dissipation", samples, worst_diss, 0.0, false).with_note(note(diss_at)),
        CheckResult::new("vdot-negative", strict_samples, worst_vdot, 0.0, true).with_note(note(vdot_at)),
    ])
}

/// `r(y, Ky) <= tol * scale` on random unit `y`.
pub fn check_supply_rate_sign(cert: &Certificate, k: &GainMatrix, samples: usize, seed: u64) -> CheckResult {
    let p = cert.q.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let worst = (0..samples)
        .map(|_| {
            let mut y = DVector::from_fn(p, |_, _| StandardNormal.sample(&mut rng));
            let norm = y.norm();
            if norm > 0.0 {
                y /= norm;
            }
            let v = k.matrix() * &y;
            -(y.dot(&(&cert.q * &y)) + 2.0 * y.dot(&(&cert.s * &v)) + v.dot(&(&cert.r * &v)))
        })
        .fold(f64::INFINITY, f64::min);
    CheckResult::new("supply-rate-sign", samples, worst, -1e-10 * cert.supply_scale(), false)
}

/// `K` against `-R^-1 S'`; margin is minus the relative max-abs gap.
pub fn check_gain_consistency(cert: &Certificate, k: &GainMatrix, tol: f64) -> Result<CheckResult> {
    let expected = cert.gain()?;
    let scale = expected.matrix().amax().max(1.0);
    let gap = (k.matrix() - expected.matrix()).amax() / scale;
    Ok(CheckResult::new("gain-consistency", 1, 0.0 - gap, -tol, false))
}

fn default_modes(model: &DarModel) -> Vec<DeltaMode> {
    if model.dims().l == 0 {
        vec![DeltaMode::Zero]
    } else {
        vec![
            DeltaMode::Cycle { dwell: 1.0 },
            DeltaMode::Random { dwell: 1.0 },
            DeltaMode::Sine { period: 5.0 },
        ]
    }
}

/// Simulates from boundary points of `E(P,1)`; margin is
/// `tol - max |x(t_final)|`.
pub fn monte_carlo_roa(
    model: &DarModel,
    k: &GainMatrix,
    p: &DMatrix<f64>,
    opts: &VerifyOptions,
) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed_0a0a);
    let points = ellipsoid_boundary_points(p, &random_directions(&mut rng, model.dims().n, opts.trajectories), 1.0);
    let modes = if opts.delta_modes.is_empty() {
        default_modes(model)
    } else {
        opts.delta_modes.clone()
    };
    let mut worst = f64::INFINITY;
    let mut failures = 0;
    let mut first_failure = None;
    for (j, x0) in points.iter().enumerate() {
        let mode = modes[j % modes.len()];
        let signal = DeltaSignal::new(mode, model.d_set(), opts.seed.wrapping_add(j as u64))?;
        let traj = simulate(model, k, x0.as_slice(), &signal, &opts.sim)?;
        let end = match &traj.termination {
            Termination::Completed => traj.final_state.norm(),
            _ => f64::INFINITY,
        };
        let margin = opts.convergence_tol - end;
        worst = worst.min(margin);
        if margin < 0.0 {
            failures += 1;
            first_failure.get_or_insert_with(|| format!("x0 = {:?} under {mode}: {:?}", x0.as_slice(), traj.termination));
        }
    }
    let note = first_failure.map(|f| format!("{failures} trajectories did not converge; first: {f}"));
    Ok(CheckResult::new("monte-carlo-roa", points.len(), worst, 0.0, false).with_note(note))
}

/// Runs every check with the gain `k` (normally `-R^-1 S'`).
pub fn verify_with_gain(model: &DarModel, cert: &Certificate, k: &GainMatrix, opts: &VerifyOptions) -> Result<VerificationReport> {
    check_shapes(model, cert)?;
    let d = model.dims();
    if k.matrix().shape() != (d.m, d.p) {
        return Err(Error::Dimension(format!("gain is {:?}, expected {}x{}", k.matrix().shape(), d.m, d.p)));
    }
    let mut checks = vec![check_definiteness(cert)];
    if checks[0].passed {
        checks.extend(check_vertex_lmis(model, cert, opts.lmi_tol)?);
        checks.push(check_schur(cert, opts.schur_tol_rel)?);
        checks.push(check_gain_consistency(cert, k, opts.gain_tol)?);
        checks.push(check_facet_inclusion(model, cert)?);
        checks.push(check_vertex_sufficiency(model, cert, opts.parameter_samples, opts.seed.wrapping_add(1))?);
        checks.push(check_sector_inclusion(model, cert, opts.boundary_samples, opts.sector_tol, opts.seed.wrapping_add(2))?);
        checks.extend(check_dissipation(model, cert, k, opts.interior_samples, opts.seed.wrapping_add(3))?);
        checks.push(check_supply_rate_sign(cert, k, opts.supply_samples, opts.seed.wrapping_add(4)));
        checks.push(monte_carlo_roa(model, k, &cert.p, opts)?);
    }
    Ok(VerificationReport { seed: opts.seed, checks })
}

pub fn verify(model: &DarModel, cert: &Certificate, opts: &VerifyOptions) -> Result<VerificationReport> {
    let k = cert.gain()?;
    verify_with_gain(model, cert, &k, opts)
}
