//! Infeasible-start primal-dual path-following method.
//!
//! The LMI program is the dual member of the pair
//!
//! ```text
//! (D)  min  c'y        s.t.  Z = F0 + sum_i y_i F_i,  Z >= 0
//! (P)  max -<F0, X>    s.t.  <F_i, X> = c_i,          X >= 0
//! ```
//!
//! Search directions are HKM with a Mehrotra predictor-corrector step. The
//! Schur complement `M_ij = <F_i, X F_j Z^-1>` is dense; blocks are small.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::problem::{BlockKind, SdpProblem};
use crate::{SolveReport, SolveStatus, SolverOptions};

/// Nonzero entries `(row, col, value)` of a coefficient matrix, both
/// triangles included.
type Sparse = Vec<(usize, usize, f64)>;

fn sparse(m: &DMatrix<f64>) -> Sparse {
    let mut out = Vec::new();
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            let v = m[(r, c)];
            if v != 0.0 {
                out.push((r, c, v));
            }
        }
    }
    out
}

fn sparse_dot(f: &Sparse, m: &DMatrix<f64>) -> f64 {
    f.iter().map(|&(r, c, v)| v * m[(r, c)]).sum()
}

fn sparse_axpy(f: &Sparse, a: f64, m: &mut DMatrix<f64>) {
    for &(r, c, v) in f {
        m[(r, c)] += a * v;
    }
}

/// Working representation of one block.
enum Work {
    Dense {
        constant: DMatrix<f64>,
        terms: Vec<(usize, Sparse)>,
        x: DMatrix<f64>,
        z: DMatrix<f64>,
    },
    Diag {
        constant: DVector<f64>,
        /// For every entry, the variables touching it with their coefficients.
        entries: Vec<Vec<(usize, f64)>>,
        x: DVector<f64>,
        z: DVector<f64>,
    },
}

/// Per-iteration cached factorizations and residuals for one block.
enum Cache {
    Dense { z_inv: DMatrix<f64>, rd: DMatrix<f64> },
    Diag { rd: DVector<f64> },
}

/// Search direction for one block.
enum Dir {
    Dense { dx: DMatrix<f64>, dz: DMatrix<f64> },
    Diag { dx: DVector<f64>, dz: DVector<f64> },
}

pub(crate) fn solve(problem: &SdpProblem, options: &SolverOptions) -> SolveReport {
    let start = Instant::now();
    let m = problem.num_vars;
    let c = problem.objective.clone();
    let mut work = build_work(problem, options);
    let total_dim: usize = work.iter().map(block_dim).sum();
    let mut y = DVector::<f64>::zeros(m);

    let c_norm = c.norm();
    let f0_norms: Vec<f64> = work
        .iter()
        .map(|w| match w {
            Work::Dense { constant, .. } => constant.norm(),
            Work::Diag { constant, .. } => constant.norm(),
        })
        .collect();

    let mut status = SolveStatus::IterationLimit;
    let mut iterations = 0;
    let mut last = Residuals::default();
    let mut best_feasible: Option<DVector<f64>> = None;

    for iter in 0..options.max_iterations {
        iterations = iter;
        // Residuals.
        let mut caches = Vec::with_capacity(work.len());
        let mut a_of_x = DVector::<f64>::zeros(m);
        let mut gap = 0.0;
        let mut f0_dot_x = 0.0;
        let mut dinf: f64 = 0.0;
        for (b, w) in work.iter().enumerate() {
            match w {
                Work::Dense { constant, terms, x, z } => {
                    let mut rd = constant - z;
                    for (var, coef) in terms {
                        sparse_axpy(coef, y[*var], &mut rd);
                        a_of_x[*var] += sparse_dot(coef, x);
                    }
                    gap += x.dot(z);
                    f0_dot_x += constant.dot(x);
                    dinf = dinf.max(rd.norm() / (1.0 + f0_norms[b]));
                    caches.push(Cache::Dense { z_inv: DMatrix::zeros(0, 0), rd });
                }
                Work::Diag { constant, entries, x, z } => {
                    let mut rd = constant - z;
                    for (t, list) in entries.iter().enumerate() {
                        for (var, val) in list {
                            rd[t] += val * y[*var];
                            a_of_x[*var] += val * x[t];
                        }
                    }
                    gap += x.dot(z);
                    f0_dot_x += constant.dot(x);
                    dinf = dinf.max(rd.norm() / (1.0 + f0_norms[b]));
                    caches.push(Cache::Diag { rd });
                }
            }
        }
        let rp = &c - &a_of_x;
        let pinf = rp.norm() / (1.0 + c_norm);
        let pobj = c.dot(&y);
        let dobj = -f0_dot_x;
        let rel_gap = (pobj - dobj).abs().max(gap.abs()) / (1.0 + pobj.abs() + dobj.abs());
        last = Residuals { pinf, dinf, rel_gap, pobj };

        // The residual of Z stalls near 1e-8 once y is large, so feasibility
        // of y itself is checked from the eigenvalues of F(y).
        if dinf <= options.feas_tol.sqrt() {
            let viol = worst_violation(problem, y.as_slice(), options);
            if viol <= options.feas_tol {
                best_feasible = Some(y.clone());
                if pinf <= options.feas_tol && rel_gap <= options.gap_tol {
                    status = SolveStatus::Optimal;
                    break;
                }
            }
        }

        // Farkas ray for (D): X >= 0, <F_i, X> ~ 0, <F0, X> < 0.
        if f0_dot_x < 0.0 {
            let ray = a_of_x.norm() / (-f0_dot_x);
            if ray <= options.infeas_tol {
                status = SolveStatus::Infeasible;
                break;
            }
        }

        let mu = gap / total_dim as f64;

        // Factor Z in every block.
        let mut failed = false;
        for (w, cache) in work.iter().zip(caches.iter_mut()) {
            if let (Work::Dense { z, .. }, Cache::Dense { z_inv, .. }) = (w, cache) {
                match Cholesky::new(z.clone()) {
                    Some(ch) => *z_inv = symmetrize(&ch.inverse()),
                    None => {
                        failed = true;
                        break;
                    }
                }
            }
        }
        if failed {
            status = SolveStatus::NumericalFailure;
            break;
        }

        let schur = assemble_schur(&work, &caches, m);
        let Some(schur_solver) = SchurSolver::new(schur) else {
            status = SolveStatus::NumericalFailure;
            break;
        };

        // Predictor.
        let rhs_aff = rhs(&work, &caches, &c, 0.0, None);
        let dy_aff = schur_solver.solve(&rhs_aff);
        let dir_aff = directions(&work, &caches, &dy_aff, 0.0, None);
        let (ap_aff, ad_aff) = match step_lengths(&work, &dir_aff) {
            Some(s) => s,
            None => {
                status = SolveStatus::NumericalFailure;
                break;
            }
        };
        let ap_aff = ap_aff.min(1.0);
        let ad_aff = ad_aff.min(1.0);
        let mu_aff = predicted_gap(&work, &dir_aff, ap_aff, ad_aff) / total_dim as f64;
        let expon = (3.0 * ap_aff.min(ad_aff).powi(2)).max(1.0);
        let sigma = if mu > 0.0 { (mu_aff / mu).max(0.0).powf(expon).min(1.0) } else { 0.0 };

        // Corrector.
        let rhs_cor = rhs(&work, &caches, &c, sigma * mu, Some(&dir_aff));
        let dy = schur_solver.solve(&rhs_cor);
        let dir = directions(&work, &caches, &dy, sigma * mu, Some(&dir_aff));
        let (ap, ad) = match step_lengths(&work, &dir) {
            Some(s) => s,
            None => {
                status = SolveStatus::NumericalFailure;
                break;
            }
        };
        let tau = 0.9 + 0.09 * ap_aff.min(ad_aff);
        let ap = (tau * ap).min(1.0);
        let ad = (tau * ad).min(1.0);
        if ap < 1e-12 && ad < 1e-12 {
            status = SolveStatus::NumericalFailure;
            break;
        }

        for (w, d) in work.iter_mut().zip(dir.iter()) {
            match (w, d) {
                (Work::Dense { x, z, .. }, Dir::Dense { dx, dz }) => {
                    *x += dx * ap;
                    *z += dz * ad;
                    *x = symmetrize(x);
                    *z = symmetrize(z);
                }
                (Work::Diag { x, z, .. }, Dir::Diag { dx, dz }) => {
                    *x += dx * ap;
                    *z += dz * ad;
                }
                _ => unreachable!("block kinds are fixed"),
            }
        }
        y += &dy * ad;
        iterations = iter + 1;
    }

    if status == SolveStatus::IterationLimit || status == SolveStatus::NumericalFailure {
        // A feasible point may still have been found on the way.
        if let Some(best) = best_feasible {
            y = best;
            status = SolveStatus::Feasible;
        }
    }
    if status == SolveStatus::Optimal && problem.is_feasibility() {
        status = SolveStatus::Feasible;
    }

    let y_vec: Vec<f64> = y.iter().copied().collect();
    let worst = worst_violation(problem, &y_vec, options);
    SolveReport {
        status,
        objective: c.dot(&y),
        y: y_vec,
        worst_violation: worst,
        iterations,
        wall_time: start.elapsed(),
        primal_infeasibility: last.pinf,
        dual_infeasibility: last.dinf,
        relative_gap: last.rel_gap,
    }
}

#[derive(Default)]
struct Residuals {
    pinf: f64,
    dinf: f64,
    rel_gap: f64,
    #[allow(dead_code)]
    pobj: f64,
}

fn block_dim(w: &Work) -> usize {
    match w {
        Work::Dense { x, .. } => x.nrows(),
        Work::Diag { x, .. } => x.len(),
    }
}

fn build_work(problem: &SdpProblem, options: &SolverOptions) -> Vec<Work> {
    let c = &problem.objective;
    let mut work = Vec::with_capacity(problem.blocks.len() + 1);
    for block in &problem.blocks {
        let n = block.dim;
        if n == 0 {
            continue;
        }
        let max_term = block.terms.iter().map(|(_, f)| f.norm()).fold(0.0, f64::max);
        let ratio = block
            .terms
            .iter()
            .map(|(v, f)| (1.0 + c[*v].abs()) / (1.0 + f.norm()))
            .fold(0.0, f64::max);
        let xi = 10f64.max((n as f64).sqrt()).max(n as f64 * ratio);
        let eta = 10f64.max((n as f64).sqrt()).max(block.constant.norm()).max(max_term);
        match block.kind {
            BlockKind::Dense => work.push(Work::Dense {
                constant: block.constant.clone(),
                terms: block.terms.iter().map(|(v, f)| (*v, sparse(f))).collect(),
                x: DMatrix::identity(n, n) * xi,
                z: DMatrix::identity(n, n) * eta,
            }),
            BlockKind::Diagonal => {
                let mut entries = vec![Vec::new(); n];
                for (var, coef) in &block.terms {
                    for (t, list) in entries.iter_mut().enumerate() {
                        let v = coef[(t, t)];
                        if v != 0.0 {
                            list.push((*var, v));
                        }
                    }
                }
                work.push(Work::Diag {
                    constant: block.constant.diagonal(),
                    entries,
                    x: DVector::from_element(n, xi),
                    z: DVector::from_element(n, eta),
                });
            }
        }
    }
    if let Some(bound) = options.variable_bound {
        let m = problem.num_vars;
        if m > 0 {
            // bound - y_i >= 0 and bound + y_i >= 0
            let entries: Vec<Vec<(usize, f64)>> = (0..2 * m)
                .map(|t| vec![(t / 2, if t % 2 == 0 { -1.0 } else { 1.0 })])
                .collect();
            let xi = 10f64.max(c.iter().map(|v| 1.0 + v.abs()).fold(0.0, f64::max));
            let eta = 10f64.max(bound);
            work.push(Work::Diag {
                constant: DVector::from_element(2 * m, bound),
                entries,
                x: DVector::from_element(2 * m, xi),
                z: DVector::from_element(2 * m, eta),
            });
        }
    }
    work
}

fn assemble_schur(work: &[Work], caches: &[Cache], m: usize) -> DMatrix<f64> {
    let mut schur = DMatrix::<f64>::zeros(m, m);
    for (w, cache) in work.iter().zip(caches) {
        match (w, cache) {
            (Work::Dense { terms, x, .. }, Cache::Dense { z_inv, .. }) => {
                let n = x.nrows();
                let mut xf = DMatrix::<f64>::zeros(n, n);
                let mut g = DMatrix::<f64>::zeros(n, n);
                let mut cols = Vec::with_capacity(n);
                for (a, (vi, fi)) in terms.iter().enumerate() {
                    // g = X F_i Z^-1, touching only the nonzero columns of F_i.
                    cols.clear();
                    for &(r, c, v) in fi {
                        if !cols.contains(&c) {
                            cols.push(c);
                            xf.column_mut(c).fill(0.0);
                        }
                        xf.column_mut(c).axpy(v, &x.column(r), 1.0);
                    }
                    g.fill(0.0);
                    for &c in &cols {
                        g.ger(1.0, &xf.column(c), &z_inv.row(c).transpose(), 1.0);
                    }
                    for (vk, fk) in &terms[a..] {
                        let val = sparse_dot(fk, &g);
                        schur[(*vi, *vk)] += val;
                        if vi != vk {
                            schur[(*vk, *vi)] += val;
                        }
                    }
                }
            }
            (Work::Diag { entries, x, z, .. }, Cache::Diag { .. }) => {
                for (t, list) in entries.iter().enumerate() {
                    let d = x[t] / z[t];
                    for (vi, ai) in list {
                        for (vk, ak) in list {
                            schur[(*vi, *vk)] += d * ai * ak;
                        }
                    }
                }
            }
            _ => unreachable!("block kinds are fixed"),
        }
    }
    symmetrize(&schur)
}

/// Right-hand side `sum_b <F_bi, (target - corr) Z^-1 - X Rd Z^-1> - c_i`.
fn rhs(work: &[Work], caches: &[Cache], c: &DVector<f64>, target: f64, corr: Option<&[Dir]>) -> DVector<f64> {
    let mut out = -c.clone();
    for (b, (w, cache)) in work.iter().zip(caches).enumerate() {
        match (w, cache) {
            (Work::Dense { terms, x, .. }, Cache::Dense { z_inv, rd }) => {
                let n = x.nrows();
                let mut inner = DMatrix::<f64>::identity(n, n) * target;
                if let Some(Dir::Dense { dx, dz }) = corr.map(|d| &d[b]) {
                    inner -= dx * dz;
                }
                inner -= x * rd;
                let t = inner * z_inv;
                for (var, f) in terms {
                    out[*var] += sparse_dot(f, &t);
                }
            }
            (Work::Diag { entries, x, z, .. }, Cache::Diag { rd }) => {
                for (t, list) in entries.iter().enumerate() {
                    let mut inner = target - x[t] * rd[t];
                    if let Some(Dir::Diag { dx, dz }) = corr.map(|d| &d[b]) {
                        inner -= dx[t] * dz[t];
                    }
                    let val = inner / z[t];
                    for (var, a) in list {
                        out[*var] += a * val;
                    }
                }
            }
            _ => unreachable!("block kinds are fixed"),
        }
    }
    out
}

fn directions(
    work: &[Work],
    caches: &[Cache],
    dy: &DVector<f64>,
    target: f64,
    corr: Option<&[Dir]>,
) -> Vec<Dir> {
    let mut out = Vec::with_capacity(work.len());
    for (b, (w, cache)) in work.iter().zip(caches).enumerate() {
        match (w, cache) {
            (Work::Dense { terms, x, .. }, Cache::Dense { z_inv, rd }) => {
                let n = x.nrows();
                let mut dz = rd.clone();
                for (var, f) in terms {
                    sparse_axpy(f, dy[*var], &mut dz);
                }
                let mut inner = DMatrix::<f64>::identity(n, n) * target;
                if let Some(Dir::Dense { dx: ax, dz: az }) = corr.map(|d| &d[b]) {
                    inner -= ax * az;
                }
                inner -= x * &dz;
                let dx = symmetrize(&(inner * z_inv)) - x;
                out.push(Dir::Dense { dx, dz: symmetrize(&dz) });
            }
            (Work::Diag { entries, x, z, .. }, Cache::Diag { rd }) => {
                let n = x.len();
                let mut dz = rd.clone();
                for (t, list) in entries.iter().enumerate() {
                    for (var, a) in list {
                        dz[t] += a * dy[*var];
                    }
                }
                let mut dx = DVector::zeros(n);
                for t in 0..n {
                    let mut inner = target - x[t] * dz[t];
                    if let Some(Dir::Diag { dx: ax, dz: az }) = corr.map(|d| &d[b]) {
                        inner -= ax[t] * az[t];
                    }
                    dx[t] = inner / z[t] - x[t];
                }
                out.push(Dir::Diag { dx, dz });
            }
            _ => unreachable!("block kinds are fixed"),
        }
    }
    out
}

/// Largest primal and dual steps keeping X and Z in the cone.
fn step_lengths(work: &[Work], dir: &[Dir]) -> Option<(f64, f64)> {
    let mut ap = f64::INFINITY;
    let mut ad = f64::INFINITY;
    for (w, d) in work.iter().zip(dir) {
        match (w, d) {
            (Work::Dense { x, z, .. }, Dir::Dense { dx, dz }) => {
                ap = ap.min(max_step_dense(x, dx)?);
                ad = ad.min(max_step_dense(z, dz)?);
            }
            (Work::Diag { x, z, .. }, Dir::Diag { dx, dz }) => {
                ap = ap.min(max_step_diag(x, dx));
                ad = ad.min(max_step_diag(z, dz));
            }
            _ => unreachable!("block kinds are fixed"),
        }
    }
    Some((ap, ad))
}

fn max_step_dense(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> Option<f64> {
    let chol = Cholesky::new(x.clone())?;
    let l = chol.l();
    let a = l.solve_lower_triangular(dx)?;
    let b = l.solve_lower_triangular(&a.transpose())?;
    let eig = SymmetricEigen::new(symmetrize(&b));
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return None;
    }
    Some(if min >= 0.0 { f64::INFINITY } else { -1.0 / min })
}

fn max_step_diag(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(v, d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

fn predicted_gap(work: &[Work], dir: &[Dir], ap: f64, ad: f64) -> f64 {
    let mut gap = 0.0;
    for (w, d) in work.iter().zip(dir) {
        match (w, d) {
            (Work::Dense { x, z, .. }, Dir::Dense { dx, dz }) => {
                gap += (x + dx * ap).dot(&(z + dz * ad));
            }
            (Work::Diag { x, z, .. }, Dir::Diag { dx, dz }) => {
                gap += (x + dx * ap).dot(&(z + dz * ad));
            }
            _ => unreachable!("block kinds are fixed"),
        }
    }
    gap
}

/// Cholesky with diagonal regularization fallback, then LU.
enum SchurSolver {
    Chol(Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl SchurSolver {
    fn new(m: DMatrix<f64>) -> Option<Self> {
        if let Some(ch) = Cholesky::new(m.clone()) {
            return Some(Self::Chol(ch));
        }
        let scale = m.diagonal().amax().max(1e-300);
        let n = m.nrows();
        for k in [1e-14, 1e-12, 1e-10] {
            let reg = &m + DMatrix::<f64>::identity(n, n) * (k * scale);
            if let Some(ch) = Cholesky::new(reg) {
                return Some(Self::Chol(ch));
            }
        }
        let lu = m.lu();
        if lu.is_invertible() {
            Some(Self::Lu(lu))
        } else {
            None
        }
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Chol(ch) => ch.solve(rhs),
            Self::Lu(lu) => lu.solve(rhs).unwrap_or_else(|| DVector::zeros(rhs.len())),
        }
    }
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest relative violation `max(0, -lambda_min(F_b(y))) / (1 + max|F_b0|)`,
/// including the variable bound when one is configured.
pub(crate) fn worst_violation(problem: &SdpProblem, y: &[f64], options: &SolverOptions) -> f64 {
    let mut worst: f64 = 0.0;
    for block in &problem.blocks {
        if block.dim == 0 {
            continue;
        }
        let f = block.evaluate(y);
        let min = match block.kind {
            BlockKind::Dense => crate::verify::min_eigenvalue(&f),
            BlockKind::Diagonal => f.diagonal().min(),
        };
        worst = worst.max((-min).max(0.0) / (1.0 + block.constant.amax()));
    }
    if let Some(bound) = options.variable_bound {
        for v in y {
            worst = worst.max((v.abs() - bound).max(0.0) / (1.0 + bound));
        }
    }
    worst
}
