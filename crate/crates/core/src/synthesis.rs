//! Iterative gain synthesis (relaxed feasibility search, then trace
//! minimization of the Lyapunov matrix) and ellipsoid metrics.

use std::f64::consts::PI;
use std::fmt;
use std::time::Duration;

use nalgebra::DMatrix;
use sofsat_sdp::{solve, SolveStatus, SolverOptions};

use crate::error::{Error, Result};
use crate::lmi::{
    schur_stability_check, supply_multiplier, AssemblyOptions, DecisionRegistry, LmiProgram, Objective, SchurCheck,
    SupplyRateSpec,
};
use crate::model::{DarModel, GainMatrix};

pub const DEFAULT_I_MAX: usize = 50;
pub const DEFAULT_GAMMA: f64 = 1e-2;

/// Decision values of one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub p: DMatrix<f64>,
    pub n: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub imult: DMatrix<f64>,
    pub z: Option<DMatrix<f64>>,
    /// `Gbar` coefficients `[const, x_1.., d_1..]` (or `[const]`).
    pub gbar: Vec<DMatrix<f64>>,
    pub gbar_pi: Vec<DMatrix<f64>>,
    pub lambda: Option<f64>,
}

impl Certificate {
    pub fn from_solution(reg: &DecisionRegistry, y: &[f64]) -> Self {
        let sym = |m: DMatrix<f64>| (&m + m.transpose()) * 0.5;
        Self {
            p: sym(reg.value(reg.p, y)),
            n: sym(reg.value(reg.n, y)),
            q: sym(reg.value(reg.q, y)),
            s: reg.value(reg.s, y),
            r: sym(reg.value(reg.r, y)),
            w: reg.value(reg.w, y),
            imult: reg.value(reg.imult, y),
            z: reg.z.map(|id| reg.value(id, y)),
            gbar: reg.gbar.iter().map(|id| reg.value(*id, y)).collect(),
            gbar_pi: reg.gbar_pi.iter().map(|id| reg.value(*id, y)).collect(),
            lambda: reg.lambda.map(|id| reg.value(id, y)[(0, 0)]),
        }
    }

    /// Inverse of [`from_solution`](Self::from_solution) for a registry of
    /// matching layout.
    pub fn to_solution(&self, reg: &DecisionRegistry) -> Result<Vec<f64>> {
        let mut y = vec![0.0; reg.num_vars()];
        let check = |name: &str, got: (usize, usize), want: (usize, usize)| {
            if got == want {
                Ok(())
            } else {
                Err(Error::Dimension(format!("certificate {name} is {got:?}, expected {want:?}")))
            }
        };
        let put = |id, m: &DMatrix<f64>, y: &mut Vec<f64>| -> Result<()> {
            let shape = reg.shape(id).dims();
            check(reg.name(id), m.shape(), shape)?;
            reg.set_value(id, m, y);
            Ok(())
        };
        put(reg.p, &self.p, &mut y)?;
        put(reg.n, &self.n, &mut y)?;
        put(reg.q, &self.q, &mut y)?;
        put(reg.s, &self.s, &mut y)?;
        put(reg.r, &self.r, &mut y)?;
        put(reg.w, &self.w, &mut y)?;
        put(reg.imult, &self.imult, &mut y)?;
        match (reg.z, &self.z) {
            (Some(id), Some(z)) => put(id, z, &mut y)?,
            (None, None) => {}
            _ => return Err(Error::Dimension("certificate Z presence does not match the model".into())),
        }
        if reg.gbar.len() != self.gbar.len() || reg.gbar_pi.len() != self.gbar_pi.len() {
            return Err(Error::Dimension("certificate Gbar coefficient count does not match".into()));
        }
        for (id, m) in reg.gbar.iter().zip(&self.gbar) {
            put(*id, m, &mut y)?;
        }
        for (id, m) in reg.gbar_pi.iter().zip(&self.gbar_pi) {
            put(*id, m, &mut y)?;
        }
        if let (Some(id), Some(l)) = (reg.lambda, self.lambda) {
            y[reg.offset(id)] = l;
        }
        Ok(y)
    }

    pub fn gain(&self) -> Result<GainMatrix> {
        compute_gain(&self.s, &self.r)
    }

    pub fn trace_p(&self) -> f64 {
        self.p.trace()
    }

    pub fn schur(&self, tol: f64) -> Result<SchurCheck> {
        schur_stability_check(&self.q, &self.s, &self.r, tol)
    }

    /// `max(1, max |[Q S; S' R]|)`, the scale of the supply-rate tolerance.
    pub fn supply_scale(&self) -> f64 {
        self.q.amax().max(self.s.amax()).max(self.r.amax()).max(1.0)
    }

    pub fn affine_gbar_at(coeffs: &[DMatrix<f64>], x: &[f64], delta: &[f64]) -> Option<DMatrix<f64>> {
        let mut out = coeffs.first()?.clone();
        if coeffs.len() > 1 {
            for (xi, c) in x.iter().zip(&coeffs[1..]) {
                out += c * *xi;
            }
            for (dj, c) in delta.iter().zip(&coeffs[1 + x.len()..]) {
                out += c * *dj;
            }
        }
        Some(out)
    }

    /// `G(x, d) = W^-1 Gbar(x, d)`.
    pub fn g_at(&self, x: &[f64], delta: &[f64]) -> Result<DMatrix<f64>> {
        let gbar = Self::affine_gbar_at(&self.gbar, x, delta).ok_or_else(|| Error::InvalidInput("empty Gbar".into()))?;
        self.w_inv_times(&gbar)
    }

    /// `G_pi(x, d) = W^-1 Gbar_pi(x, d)`; `None` when there is no `pi_x`.
    pub fn g_pi_at(&self, x: &[f64], delta: &[f64]) -> Result<Option<DMatrix<f64>>> {
        match Self::affine_gbar_at(&self.gbar_pi, x, delta) {
            Some(g) => Ok(Some(self.w_inv_times(&g)?)),
            None => Ok(None),
        }
    }

    fn w_inv_times(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut out = m.clone();
        for i in 0..self.w.nrows() {
            let wi = self.w[(i, i)];
            if !(wi > 0.0) {
                return Err(Error::InvalidInput(format!("W[{i},{i}] = {wi} is not positive")));
            }
            out.row_mut(i).scale_mut(1.0 / wi);
        }
        Ok(out)
    }
}

/// `K = -R^-1 S'` by a linear solve.
pub fn compute_gain(s: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<GainMatrix> {
    let (_, m) = s.shape();
    if r.shape() != (m, m) {
        return Err(Error::Dimension(format!("R is {:?}, expected {m}x{m}", r.shape())));
    }
    let k = r
        .clone()
        .lu()
        .solve(&s.transpose())
        .ok_or_else(|| Error::InvalidInput("R is singular".into()))?;
    GainMatrix::new(-k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthesisStatus {
    Success,
    IterationLimit,
    SolverFailure,
}

impl SynthesisStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Success => "success",
            Self::IterationLimit => "iteration-limit",
            Self::SolverFailure => "solver-failure",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "success" => Some(Self::Success),
            "iteration-limit" => Some(Self::IterationLimit),
            "solver-failure" => Some(Self::SolverFailure),
            _ => None,
        }
    }
}

impl fmt::Display for SynthesisStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One SDP solve inside an iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveRecord {
    pub stage: Stage,
    pub iteration: usize,
    pub status: SolveStatus,
    pub objective: f64,
    pub ipm_iterations: usize,
    pub wall_time: Duration,
    pub worst_violation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Sizing of the initial bound on `R`.
    Calibration,
    Feasibility,
    Maximization,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Calibration => "calibration",
            Self::Feasibility => "feasibility",
            Self::Maximization => "maximization",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisResult {
    pub status: SynthesisStatus,
    /// Final (or best available) certificate.
    pub certificate: Option<Certificate>,
    pub lambda_history: Vec<f64>,
    pub trace_history: Vec<f64>,
    /// Feasibility-stage iterations.
    pub iterations: usize,
    /// Maximization-stage iterations.
    pub maximize_iterations: usize,
    pub solves: Vec<SolveRecord>,
    pub message: Option<String>,
    /// Absolute entrywise bound on `R` used by every solve.
    pub r_bound: f64,
}

impl SynthesisResult {
    pub fn gain(&self) -> Option<Result<GainMatrix>> {
        self.certificate.as_ref().map(|c| c.gain())
    }

    pub fn total_iterations(&self) -> usize {
        self.iterations + self.maximize_iterations
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisOptions {
    pub assembly: AssemblyOptions,
    pub solver: SolverOptions,
    /// Lower bound on lambda; the relaxed program is unbounded below
    /// once feasible without relaxation.
    pub lambda_floor: f64,
    /// Entrywise bound on the Finsler multiplier, `Q` and `Z`, relative to
    /// the model scale. The multiplier is unbounded along `-s Gamma'`, `Q`
    /// along directions outside the range of `[C1 C2]`, and `Z` whenever
    /// `Sigma_1` vanishes at a vertex.
    pub multiplier_bound_rel: f64,
    /// Entrywise bound on `R`, relative to the model scale. Enlarging `R`
    /// together with `S` always helps, so `R` sits on this bound and the
    /// gain change per iteration scales like its inverse, while too small a
    /// bound stalls the maximization early. The bound only ever grows, so
    /// every previous iterate stays feasible. It starts at twice the
    /// smallest-trace `R` admitted by the first relaxed program (when that
    /// exceeds this value), grows tenfold if a first feasibility solve still
    /// fails, and tenfold (up to `r_bound_max_rel`) whenever the
    /// maximization would otherwise stop.
    pub r_bound_rel: f64,
    pub r_bound_max_rel: f64,
    /// Schur-test tolerance relative to the supply-rate scale.
    pub schur_tol_rel: f64,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            assembly: AssemblyOptions::default(),
            solver: SolverOptions::from_env(),
            lambda_floor: -1.0,
            multiplier_bound_rel: 1e4,
            r_bound_rel: 1.0,
            r_bound_max_rel: 1e3,
            schur_tol_rel: 1e-7,
        }
    }
}

impl SynthesisOptions {
    fn scale(model: &DarModel) -> f64 {
        let facet = model.x_set().facets().iter().map(|a| a.norm_squared()).fold(1.0, f64::max);
        let sat = model.u_bar().iter().map(|u| 1.0 / (u * u)).fold(1.0, f64::max);
        facet.max(sat)
    }

    fn bound_program(&self, model: &DarModel, prog: &mut LmiProgram, r_bound: f64) {
        let b = self.multiplier_bound_rel * Self::scale(model);
        let reg = &prog.registry;
        prog.bounds = vec![(reg.r, r_bound), (reg.imult, b), (reg.q, b)];
        prog.bounds.extend(reg.z.map(|z| (z, b)));
    }
}

fn run_solve(
    prog: &LmiProgram,
    opts: &SynthesisOptions,
    stage: Stage,
    iteration: usize,
) -> Result<(SolveRecord, Vec<f64>)> {
    let report = solve(&prog.to_sdp(), &opts.solver)?;
    let rec = SolveRecord {
        stage,
        iteration,
        status: report.status,
        objective: report.objective,
        ipm_iterations: report.iterations,
        wall_time: report.wall_time,
        worst_violation: report.worst_violation,
    };
    Ok((rec, report.y))
}

/// Smallest-trace `R` of the first relaxed program with `R` and `lambda`
/// boxed only by `cap`; `None` if that program has no solution.
fn calibrate(
    model: &DarModel,
    s0: &DMatrix<f64>,
    r0: &DMatrix<f64>,
    cap: f64,
    opts: &SynthesisOptions,
) -> Result<(SolveRecord, Option<f64>)> {
    let ls = supply_multiplier(s0, r0)?;
    let mut prog = LmiProgram::theorem(model, &SupplyRateSpec { ls, relaxed: true }, Objective::TraceR, &opts.assembly)?;
    opts.bound_program(model, &mut prog, cap);
    prog.bounds.extend(prog.registry.lambda.map(|l| (l, cap)));
    let (rec, y) = run_solve(&prog, opts, Stage::Calibration, 0)?;
    let r_min = rec.status.has_solution().then(|| prog.registry.value(prog.registry.r, &y).amax());
    Ok((rec, r_min))
}

/// Feasibility search with the relaxed supply rate.
///
/// Starts from `S0 = 0`, `R0 = I`, minimizes `lambda` with the multiplier
/// built from the previous `(S, R)`, and stops at `lambda <= 0` or once
/// `Q - S R^-1 S' <= 0`. On failure the lowest-`lambda` certificate is
/// returned.
pub fn algorithm1(model: &DarModel, i_max: usize, opts: &SynthesisOptions) -> Result<SynthesisResult> {
    let d = model.dims();
    let mut s0 = DMatrix::zeros(d.p, d.m);
    let mut r0 = DMatrix::identity(d.m, d.m);
    let mut result = SynthesisResult {
        status: SynthesisStatus::IterationLimit,
        certificate: None,
        lambda_history: Vec::new(),
        trace_history: Vec::new(),
        iterations: 0,
        maximize_iterations: 0,
        solves: Vec::new(),
        message: None,
        r_bound: opts.r_bound_rel * SynthesisOptions::scale(model),
    };
    let r_bound_max = opts.multiplier_bound_rel.max(opts.r_bound_rel) * SynthesisOptions::scale(model);
    if i_max > 0 {
        let (rec, r_min) = calibrate(model, &s0, &r0, r_bound_max, opts)?;
        result.solves.push(rec);
        if let Some(r_min) = r_min {
            result.r_bound = result.r_bound.max(2.0 * r_min).min(r_bound_max);
        }
    }
    let mut best: Option<Certificate> = None;
    for it in 0..i_max {
        let ls = supply_multiplier(&s0, &r0)?;
        let mut prog = LmiProgram::theorem(model, &SupplyRateSpec { ls, relaxed: true }, Objective::Lambda, &opts.assembly)?;
        prog.lambda_floor = Some(opts.lambda_floor);
        let (rec, y) = loop {
            opts.bound_program(model, &mut prog, result.r_bound);
            let (rec, y) = run_solve(&prog, opts, Stage::Feasibility, it)?;
            if it > 0 || rec.status.has_solution() || result.r_bound * 10.0 > r_bound_max {
                break (rec, y);
            }
            result.solves.push(rec);
            result.r_bound *= 10.0;
        };
        let status = rec.status;
        result.solves.push(rec);
        result.iterations = it + 1;
        if !status.has_solution() {
            result.status = SynthesisStatus::SolverFailure;
            result.message = Some(format!("feasibility iteration {it}: solver returned {status}"));
            result.certificate = best;
            return Ok(result);
        }
        let cert = Certificate::from_solution(&prog.registry, &y);
        let lambda = cert.lambda.expect("relaxed program has lambda");
        result.lambda_history.push(lambda);
        result.trace_history.push(cert.trace_p());
        if best.as_ref().is_none_or(|b| lambda < b.lambda.unwrap_or(f64::INFINITY)) {
            best = Some(cert.clone());
        }
        let tol = opts.schur_tol_rel * cert.supply_scale();
        let schur = cert.schur(tol);
        if lambda <= 0.0 || schur.as_ref().is_ok_and(|s| s.passed) {
            result.status = SynthesisStatus::Success;
            result.certificate = Some(cert);
            return Ok(result);
        }
        s0 = cert.s.clone();
        r0 = cert.r.clone();
    }
    result.certificate = best;
    if i_max > 0 {
        result.message = Some(format!("no certificate within {i_max} feasibility iterations"));
    }
    Ok(result)
}

/// Trace minimization of `P` seeded with a successful feasibility result.
/// Stops once `|trace(P) - trace(P0)| <= gamma`.
pub fn algorithm2(
    model: &DarModel,
    seed: &SynthesisResult,
    gamma: f64,
    i_max: usize,
    opts: &SynthesisOptions,
) -> Result<SynthesisResult> {
    if seed.status != SynthesisStatus::Success {
        return Err(Error::InvalidInput(format!("maximization needs a successful seed, got {}", seed.status)));
    }
    let seed_cert = seed
        .certificate
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("seed has no certificate".into()))?;
    if !(gamma >= 0.0) {
        return Err(Error::InvalidInput(format!("gamma must be nonnegative, got {gamma}")));
    }
    let mut result = seed.clone();
    result.trace_history.clear();
    result.maximize_iterations = 0;
    result.status = SynthesisStatus::IterationLimit;
    result.message = None;
    let mut current = seed_cert.clone();
    let mut tr0 = current.trace_p();
    // The seed must stay feasible under the box on R.
    let mut r_bound = seed.r_bound.max(current.r.amax());
    let r_bound_max = opts.r_bound_max_rel * SynthesisOptions::scale(model);
    let mut escalated = false;
    for it in 0..i_max {
        let ls = supply_multiplier(&current.s, &current.r)?;
        let mut prog = LmiProgram::theorem(model, &SupplyRateSpec { ls, relaxed: false }, Objective::TraceP, &opts.assembly)?;
        opts.bound_program(model, &mut prog, r_bound);
        let (rec, y) = run_solve(&prog, opts, Stage::Maximization, it)?;
        let status = rec.status;
        result.solves.push(rec);
        result.maximize_iterations = it + 1;
        let cert = status.has_solution().then(|| Certificate::from_solution(&prog.registry, &y));
        // The previous iterate is feasible, so a non-optimal point with a
        // larger trace is solver inaccuracy, not progress.
        let cert = cert.filter(|c| status == SolveStatus::Optimal || c.trace_p() <= tr0);
        let Some(cert) = cert else {
            if escalated {
                // Converged at a smaller bound already.
                result.status = SynthesisStatus::Success;
                result.message = Some(format!("maximization iteration {it}: solver returned {status}; kept the converged certificate"));
            } else if status.has_solution() {
                result.trace_history.push(tr0);
                result.r_bound = r_bound;
                if r_bound * 10.0 <= r_bound_max {
                    r_bound *= 10.0;
                    escalated = true;
                    continue;
                }
                result.status = SynthesisStatus::Success;
            } else {
                result.status = SynthesisStatus::SolverFailure;
                result.message = Some(format!("maximization iteration {it}: solver returned {status}"));
            }
            result.certificate = Some(current);
            return Ok(result);
        };
        result.r_bound = r_bound;
        let tr = cert.trace_p();
        result.trace_history.push(tr);
        current = cert;
        if (tr - tr0).abs() <= gamma {
            if r_bound * 10.0 > r_bound_max {
                result.status = SynthesisStatus::Success;
                result.certificate = Some(current);
                return Ok(result);
            }
            r_bound *= 10.0;
            escalated = true;
        }
        tr0 = tr;
    }
    result.certificate = Some(current);
    Ok(result)
}

/// Both stages, or only the first with `maximize = false`.
pub fn synthesize(
    model: &DarModel,
    i_max: usize,
    gamma: f64,
    maximize: bool,
    opts: &SynthesisOptions,
) -> Result<SynthesisResult> {
    let first = algorithm1(model, i_max, opts)?;
    if !maximize || first.status != SynthesisStatus::Success {
        return Ok(first);
    }
    algorithm2(model, &first, gamma, i_max, opts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidMetrics {
    /// Ascending.
    pub semi_axes: Vec<f64>,
    pub max_radius: f64,
    pub min_radius: f64,
    pub log_det_p_inv: f64,
    /// `n`-dimensional volume (area for `n = 2`).
    pub volume: f64,
}

/// Metrics of `{x : x' P x <= 1}`.
pub fn ellipsoid_metrics(p: &DMatrix<f64>) -> Result<EllipsoidMetrics> {
    if !p.is_square() || p.nrows() == 0 {
        return Err(Error::Dimension("P must be square and nonempty".into()));
    }
    let sym = (p + p.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    if eig.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidInput("P is not positive definite".into()));
    }
    let mut axes: Vec<f64> = eig.iter().map(|e| 1.0 / e.sqrt()).collect();
    axes.sort_by(f64::total_cmp);
    let log_det: f64 = eig.iter().map(|e| e.ln()).sum();
    let n = p.nrows();
    Ok(EllipsoidMetrics {
        max_radius: *axes.last().expect("nonempty"),
        min_radius: axes[0],
        semi_axes: axes,
        log_det_p_inv: -log_det,
        volume: unit_ball_volume(n) * (-0.5 * log_det).exp(),
    })
}

/// `pi^(n/2) / Gamma(n/2 + 1)`
fn unit_ball_volume(n: usize) -> f64 {
    // V_0 = 1, V_1 = 2, V_n = 2 pi / n V_{n-2}
    let mut v = if n % 2 == 0 { 1.0 } else { 2.0 };
    let mut k = if n % 2 == 0 { 2 } else { 3 };
    while k <= n {
        v *= 2.0 * PI / k as f64;
        k += 2;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dm(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, v)
    }

    #[test]
    fn gain_examples() {
        let k = compute_gain(&DMatrix::zeros(1, 1), &DMatrix::identity(1, 1)).unwrap();
        assert_eq!(k.matrix()[(0, 0)], 0.0);
        let k = compute_gain(&dm(1, 1, &[-2.0]), &dm(1, 1, &[4.0])).unwrap();
        assert_eq!(k.matrix()[(0, 0)], 0.5);
        let k = compute_gain(&dm(2, 1, &[1.0, 1.0]), &dm(1, 1, &[2.0])).unwrap();
        assert_eq!(k.matrix(), &dm(1, 2, &[-0.5, -0.5]));
        assert!(compute_gain(&dm(1, 1, &[1.0]), &dm(1, 1, &[0.0])).is_err());
    }

    #[test]
    fn gain_is_invariant_under_supply_scaling() {
        let s = dm(2, 2, &[0.3, -1.2, 0.7, 0.1]);
        let r = dm(2, 2, &[2.0, 0.4, 0.4, 1.0]);
        let k = compute_gain(&s, &r).unwrap();
        for a in [1e-3, 0.5, 7.0, 1e4] {
            let ka = compute_gain(&(&s * a), &(&r * a)).unwrap();
            assert!((ka.matrix() - k.matrix()).amax() < 1e-12);
        }
    }

    #[test]
    fn ellipsoid_examples() {
        let m = ellipsoid_metrics(&DMatrix::identity(2, 2)).unwrap();
        assert_eq!(m.semi_axes, vec![1.0, 1.0]);
        assert_relative_eq!(m.volume, PI, epsilon = 1e-15);
        assert_eq!(m.log_det_p_inv, 0.0);
        let m = ellipsoid_metrics(&dm(2, 2, &[4.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(m.semi_axes, vec![0.5, 1.0]);
        assert_relative_eq!(m.volume, PI / 2.0, epsilon = 1e-15);
        assert!(ellipsoid_metrics(&dm(2, 2, &[1.0, 0.0, 0.0, -1.0])).is_err());
        assert_relative_eq!(unit_ball_volume(3), 4.0 / 3.0 * PI, epsilon = 1e-14);
        assert_relative_eq!(unit_ball_volume(1), 2.0);
    }

    #[test]
    fn zero_iterations_is_an_immediate_limit() {
        let model = crate::library::example1();
        let r = algorithm1(&model, 0, &SynthesisOptions::default()).unwrap();
        assert_eq!(r.status, SynthesisStatus::IterationLimit);
        assert!(r.lambda_history.is_empty() && r.trace_history.is_empty());
        assert!(r.certificate.is_none());
    }

    #[test]
    fn maximization_rejects_failed_seed() {
        let model = crate::library::example1();
        let seed = algorithm1(&model, 0, &SynthesisOptions::default()).unwrap();
        assert!(algorithm2(&model, &seed, DEFAULT_GAMMA, 5, &SynthesisOptions::default()).is_err());
    }
}
