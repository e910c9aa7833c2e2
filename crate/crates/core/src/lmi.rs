//! Decision registry, linear matrix expressions and the matrix
//! inequalities certifying stability, sector inclusion, set inclusion and
//! the supply-rate sign.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use sofsat_sdp::{LmiBlock, SdpProblem};

use crate::affine::product_vertices;
use crate::error::{Error, Result};
use crate::model::DarModel;

/// `C + sum_k y_k F_k` over scalar decision variables `y`. Rectangular in
/// general; constraints use square symmetric ones.
#[derive(Debug, Clone, PartialEq)]
pub struct MatExpr {
    constant: DMatrix<f64>,
    terms: BTreeMap<usize, DMatrix<f64>>,
}

impl MatExpr {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(DMatrix::zeros(rows, cols))
    }

    pub fn constant(c: DMatrix<f64>) -> Self {
        Self {
            constant: c,
            terms: BTreeMap::new(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.constant.shape()
    }

    pub fn constant_term(&self) -> &DMatrix<f64> {
        &self.constant
    }

    pub fn terms(&self) -> impl Iterator<Item = (usize, &DMatrix<f64>)> {
        self.terms.iter().map(|(k, v)| (*k, v))
    }

    pub fn variables(&self) -> impl Iterator<Item = usize> + '_ {
        self.terms.keys().copied()
    }

    fn add_term(&mut self, var: usize, coef: DMatrix<f64>) {
        if coef.iter().all(|v| *v == 0.0) {
            return;
        }
        match self.terms.get_mut(&var) {
            Some(existing) => {
                *existing += coef;
                if existing.iter().all(|v| *v == 0.0) {
                    self.terms.remove(&var);
                }
            }
            None => {
                self.terms.insert(var, coef);
            }
        }
    }

    fn map_all(&self, f: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> Self {
        let mut out = Self::constant(f(&self.constant));
        for (k, v) in &self.terms {
            out.add_term(*k, f(v));
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape(), "MatExpr::add shape mismatch");
        let mut out = self.clone();
        out.constant += &other.constant;
        for (k, v) in &other.terms {
            out.add_term(*k, v.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn add_constant(&self, c: &DMatrix<f64>) -> Self {
        let mut out = self.clone();
        out.constant += c;
        out
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map_all(|m| m * a)
    }

    /// `A * self`
    pub fn mul_left(&self, a: &DMatrix<f64>) -> Self {
        self.map_all(|m| a * m)
    }

    /// `self * B`
    pub fn mul_right(&self, b: &DMatrix<f64>) -> Self {
        self.map_all(|m| m * b)
    }

    pub fn transpose(&self) -> Self {
        self.map_all(|m| m.transpose())
    }

    /// `self + self'`
    pub fn he(&self) -> Self {
        self.add(&self.transpose())
    }

    pub fn view(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        self.map_all(|m| m.view((r0, c0), (rows, cols)).into_owned())
    }

    /// `[self, other]`
    pub fn hcat(&self, other: &Self) -> Self {
        assert_eq!(self.shape().0, other.shape().0, "MatExpr::hcat row mismatch");
        let (r, c1) = self.shape();
        let c2 = other.shape().1;
        let widen = |m: &DMatrix<f64>, left: bool| {
            let mut out = DMatrix::zeros(r, c1 + c2);
            if left {
                out.view_mut((0, 0), (r, c1)).copy_from(m);
            } else {
                out.view_mut((0, c1), (r, c2)).copy_from(m);
            }
            out
        };
        self.map_all(|m| widen(m, true)).add(&other.map_all(|m| widen(m, false)))
    }

    pub fn evaluate(&self, y: &[f64]) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (k, v) in &self.terms {
            out += v * y[*k];
        }
        out
    }

    /// The decision-dependent part `sum_k y_k F_k`.
    pub fn evaluate_linear(&self, y: &[f64]) -> DMatrix<f64> {
        self.evaluate(y) - &self.constant
    }

    /// Exact symmetry of every stored coefficient.
    pub fn is_symmetric(&self) -> bool {
        let sym = |m: &DMatrix<f64>| m.is_square() && *m == m.transpose();
        sym(&self.constant) && self.terms.values().all(sym)
    }

    fn symmetrized(&self) -> Self {
        self.map_all(|m| (m + m.transpose()) * 0.5)
    }
}

/// Builds a symmetric block matrix from its lower-triangular blocks.
/// Missing blocks are zero; diagonal blocks are symmetrized.
pub fn symmetric_blocks(sizes: &[usize], lower: Vec<(usize, usize, MatExpr)>) -> MatExpr {
    let offsets: Vec<usize> = sizes
        .iter()
        .scan(0, |acc, s| {
            let o = *acc;
            *acc += s;
            Some(o)
        })
        .collect();
    let total: usize = sizes.iter().sum();
    let mut out = MatExpr::zeros(total, total);
    for (i, j, e) in lower {
        assert!(i >= j, "symmetric_blocks takes lower blocks only");
        assert_eq!(e.shape(), (sizes[i], sizes[j]), "block ({i},{j}) has wrong shape");
        let place = |m: &DMatrix<f64>, transposed: bool| {
            let mut big = DMatrix::zeros(total, total);
            if transposed {
                big.view_mut((offsets[j], offsets[i]), (sizes[j], sizes[i])).copy_from(&m.transpose());
            } else {
                big.view_mut((offsets[i], offsets[j]), (sizes[i], sizes[j])).copy_from(m);
            }
            big
        };
        if i == j {
            let s = e.symmetrized();
            out = out.add(&s.map_all(|m| place(m, false)));
        } else {
            out = out.add(&e.map_all(|m| place(m, false)));
            out = out.add(&e.map_all(|m| place(m, true)));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockShape {
    Symmetric(usize),
    Diagonal(usize),
    Full(usize, usize),
}

impl BlockShape {
    fn len(&self) -> usize {
        match *self {
            Self::Symmetric(n) => n * (n + 1) / 2,
            Self::Diagonal(n) => n,
            Self::Full(r, c) => r * c,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        match *self {
            Self::Symmetric(n) | Self::Diagonal(n) => (n, n),
            Self::Full(r, c) => (r, c),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockId(usize);

#[derive(Debug, Clone, PartialEq)]
struct BlockInfo {
    name: String,
    shape: BlockShape,
    offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyOptions {
    /// Margin for strict (and, for robustness, non-strict) inequalities,
    /// relative to the per-constraint scale.
    pub eps_rel: f64,
    /// Lower bound `N >= n_min I`.
    pub n_min: f64,
    /// Use a constant `Gbar`, `Gbar_pi` instead of affine ones.
    pub constant_gbar: bool,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self {
            eps_rel: 1e-7,
            n_min: 1e-6,
            constant_gbar: false,
        }
    }
}

/// Layout of all decision blocks as one vector of scalar variables.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRegistry {
    blocks: Vec<BlockInfo>,
    num_vars: usize,
    pub p: BlockId,
    pub n: BlockId,
    pub r: BlockId,
    pub q: BlockId,
    pub w: BlockId,
    pub s: BlockId,
    pub imult: BlockId,
    pub z: Option<BlockId>,
    /// Coefficients `[const, x_1..x_n, d_1..d_l]`, or just `[const]`.
    pub gbar: Vec<BlockId>,
    pub gbar_pi: Vec<BlockId>,
    pub lambda: Option<BlockId>,
}

impl DecisionRegistry {
    pub fn new(model: &DarModel, relaxed: bool, constant_gbar: bool) -> Self {
        let d = model.dims();
        let mut reg = Self {
            blocks: Vec::new(),
            num_vars: 0,
            p: BlockId(0),
            n: BlockId(0),
            r: BlockId(0),
            q: BlockId(0),
            w: BlockId(0),
            s: BlockId(0),
            imult: BlockId(0),
            z: None,
            gbar: Vec::new(),
            gbar_pi: Vec::new(),
            lambda: None,
        };
        reg.p = reg.push("P", BlockShape::Symmetric(d.n));
        reg.n = reg.push("N", BlockShape::Symmetric(d.n));
        reg.r = reg.push("R", BlockShape::Symmetric(d.m));
        reg.q = reg.push("Q", BlockShape::Symmetric(d.p));
        reg.w = reg.push("W", BlockShape::Diagonal(d.m));
        reg.s = reg.push("S", BlockShape::Full(d.p, d.m));
        reg.imult = reg.push("Imult", BlockShape::Full(d.n + d.n_pi + 2 * d.m, d.n_pi));
        if d.n_pi_x > 0 {
            reg.z = Some(reg.push("Z", BlockShape::Full(d.n_pi_x, d.n_pi_x)));
        }
        let coeffs = if constant_gbar { 1 } else { 1 + d.n + d.l };
        for k in 0..coeffs {
            let id = reg.push(&format!("Gbar[{k}]"), BlockShape::Full(d.m, d.n));
            reg.gbar.push(id);
        }
        if d.n_pi_x > 0 {
            for k in 0..coeffs {
                let id = reg.push(&format!("Gbar_pi[{k}]"), BlockShape::Full(d.m, d.n_pi_x));
                reg.gbar_pi.push(id);
            }
        }
        if relaxed {
            reg.lambda = Some(reg.push("lambda", BlockShape::Full(1, 1)));
        }
        reg
    }

    fn push(&mut self, name: &str, shape: BlockShape) -> BlockId {
        let id = BlockId(self.blocks.len());
        self.blocks.push(BlockInfo {
            name: name.to_string(),
            shape,
            offset: self.num_vars,
        });
        self.num_vars += shape.len();
        id
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn name(&self, id: BlockId) -> &str {
        &self.blocks[id.0].name
    }

    pub fn shape(&self, id: BlockId) -> BlockShape {
        self.blocks[id.0].shape
    }

    pub fn offset(&self, id: BlockId) -> usize {
        self.blocks[id.0].offset
    }

    /// Whether Gbar has `1 + n + l` coefficient blocks (else one).
    pub fn affine_gbar(&self) -> bool {
        self.gbar.len() > 1
    }

    /// `(var, basis matrix)` pairs of a block.
    fn basis(&self, id: BlockId) -> Vec<(usize, DMatrix<f64>)> {
        let info = &self.blocks[id.0];
        let (r, c) = info.shape.dims();
        let mut out = Vec::with_capacity(info.shape.len());
        let mut var = info.offset;
        match info.shape {
            BlockShape::Symmetric(n) => {
                for j in 0..n {
                    for i in 0..=j {
                        let mut e = DMatrix::zeros(n, n);
                        e[(i, j)] = 1.0;
                        e[(j, i)] = 1.0;
                        out.push((var, e));
                        var += 1;
                    }
                }
            }
            BlockShape::Diagonal(n) => {
                for i in 0..n {
                    let mut e = DMatrix::zeros(n, n);
                    e[(i, i)] = 1.0;
                    out.push((var, e));
                    var += 1;
                }
            }
            BlockShape::Full(..) => {
                for j in 0..c {
                    for i in 0..r {
                        let mut e = DMatrix::zeros(r, c);
                        e[(i, j)] = 1.0;
                        out.push((var, e));
                        var += 1;
                    }
                }
            }
        }
        out
    }

    pub fn expr(&self, id: BlockId) -> MatExpr {
        let (r, c) = self.blocks[id.0].shape.dims();
        let mut e = MatExpr::zeros(r, c);
        for (var, m) in self.basis(id) {
            e.add_term(var, m);
        }
        e
    }

    pub fn value(&self, id: BlockId, y: &[f64]) -> DMatrix<f64> {
        self.expr(id).evaluate(y)
    }

    /// Writes `value` into the variables of block `id` (symmetric blocks
    /// read the upper triangle, diagonal blocks the diagonal).
    pub fn set_value(&self, id: BlockId, value: &DMatrix<f64>, y: &mut [f64]) {
        let info = &self.blocks[id.0];
        assert_eq!(value.shape(), info.shape.dims(), "value shape for {}", info.name);
        let mut var = info.offset;
        match info.shape {
            BlockShape::Symmetric(n) => {
                for j in 0..n {
                    for i in 0..=j {
                        y[var] = value[(i, j)];
                        var += 1;
                    }
                }
            }
            BlockShape::Diagonal(n) => {
                for i in 0..n {
                    y[var] = value[(i, i)];
                    var += 1;
                }
            }
            BlockShape::Full(r, c) => {
                for j in 0..c {
                    for i in 0..r {
                        y[var] = value[(i, j)];
                        var += 1;
                    }
                }
            }
        }
    }

    /// `Gbar(x, d)` (or `Gbar_pi`) as a linear expression.
    pub fn affine_at(&self, coeffs: &[BlockId], x: &[f64], delta: &[f64]) -> Option<MatExpr> {
        let first = coeffs.first()?;
        let mut e = self.expr(*first);
        if coeffs.len() > 1 {
            for (xi, id) in x.iter().zip(&coeffs[1..]) {
                e = e.add(&self.expr(*id).scale(*xi));
            }
            for (dj, id) in delta.iter().zip(&coeffs[1 + x.len()..]) {
                e = e.add(&self.expr(*id).scale(*dj));
            }
        }
        Some(e)
    }

    /// Numeric `Gbar(x, d)` from a solution vector.
    pub fn affine_value(&self, coeffs: &[BlockId], y: &[f64], x: &[f64], delta: &[f64]) -> Option<DMatrix<f64>> {
        self.affine_at(coeffs, x, delta).map(|e| e.evaluate(y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    /// `E >= margin I`
    PositiveSemidefinite,
    /// `E <= -margin I`
    NegativeDefinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub label: String,
    pub expr: MatExpr,
    pub sense: Sense,
    pub margin: f64,
}

impl Constraint {
    fn new(label: String, expr: MatExpr, sense: Sense, eps_rel: f64) -> Self {
        let scale = expr.constant_term().amax().max(1.0);
        Self {
            label,
            expr,
            sense,
            margin: eps_rel * scale,
        }
    }

    /// The block `F(y) >= 0` handed to the solver.
    pub fn to_block(&self) -> LmiBlock {
        let (k, _) = self.expr.shape();
        let sign = match self.sense {
            Sense::PositiveSemidefinite => 1.0,
            Sense::NegativeDefinite => -1.0,
        };
        let constant = self.expr.constant_term() * sign - DMatrix::identity(k, k) * self.margin;
        let mut block = LmiBlock::dense(constant).with_label(self.label.clone());
        for (var, m) in self.expr.terms() {
            block.add_term(var, m * sign);
        }
        block
    }

    /// Smallest eigenvalue of the solver-side block at `y`, i.e. how far the
    /// constraint (margin included) is from being violated.
    pub fn slack(&self, y: &[f64]) -> f64 {
        let sign = match self.sense {
            Sense::PositiveSemidefinite => 1.0,
            Sense::NegativeDefinite => -1.0,
        };
        sofsat_sdp::min_eigenvalue(&(self.expr.evaluate(y) * sign)) - self.margin
    }
}

/// Extended vector layout `(x, pi, v, phi)`.
fn z_sizes(model: &DarModel) -> [usize; 4] {
    let d = model.dims();
    [d.n, d.n_pi, d.m, d.m]
}

pub fn build_phi(model: &DarModel, x: &[f64], delta: &[f64], reg: &DecisionRegistry) -> Result<MatExpr> {
    let d = model.dims();
    if x.len() != d.n || delta.len() != d.l {
        return Err(Error::Dimension("vertex does not match the model".into()));
    }
    let a1 = model.a1().eval(x, delta);
    let a2 = model.a2().eval(x, delta);
    let a3 = model.a3().eval(x, delta);
    let c1 = model.c1();
    let c2 = model.c2();
    let p = reg.expr(reg.p);
    let q = reg.expr(reg.q);
    let s = reg.expr(reg.s);
    let r = reg.expr(reg.r);
    let w = reg.expr(reg.w);
    let n = reg.expr(reg.n);
    let gbar = reg.affine_at(&reg.gbar, x, delta).expect("Gbar always registered");

    let c1t = c1.transpose();
    let c2t = c2.transpose();
    let phi11 = p.mul_right(&a1).he().add(&n).sub(&q.mul_left(&c1t).mul_right(c1));
    let phi21 = p.mul_left(&a2.transpose()).sub(&q.mul_left(&c2t).mul_right(c1));
    let phi22 = q.mul_left(&c2t).mul_right(c2).scale(-1.0);
    let st = s.transpose();
    let phi31 = p.mul_left(&a3.transpose()).sub(&st.mul_right(c1));
    let phi32 = st.mul_right(c2).scale(-1.0);
    let phi33 = r.scale(-1.0);
    let phi41 = p.mul_left(&a3.transpose()).add(&gbar);
    let mut phi42 = MatExpr::zeros(d.m, d.n_pi);
    if let Some(gpi) = reg.affine_at(&reg.gbar_pi, x, delta) {
        let mut pad = DMatrix::zeros(d.n_pi_x, d.n_pi);
        pad.view_mut((0, 0), (d.n_pi_x, d.n_pi_x)).fill_with_identity();
        phi42 = gpi.mul_right(&pad);
    }
    let phi43 = w.scale(-1.0);
    let phi44 = w.scale(-2.0);
    Ok(symmetric_blocks(
        &z_sizes(model),
        vec![
            (0, 0, phi11),
            (1, 0, phi21),
            (1, 1, phi22),
            (2, 0, phi31),
            (2, 1, phi32),
            (2, 2, phi33),
            (3, 0, phi41),
            (3, 1, phi42),
            (3, 2, phi43),
            (3, 3, phi44),
        ],
    ))
}

/// `[U1 U2 U3 U3]` at `(x, d)`.
pub fn build_gamma(model: &DarModel, x: &[f64], delta: &[f64]) -> DMatrix<f64> {
    let d = model.dims();
    let mut g = DMatrix::zeros(d.n_pi, d.n + d.n_pi + 2 * d.m);
    let u3 = model.ups3().eval(x, delta);
    g.view_mut((0, 0), (d.n_pi, d.n)).copy_from(&model.ups1().eval(x, delta));
    g.view_mut((0, d.n), (d.n_pi, d.n_pi)).copy_from(&model.ups2().eval(x, delta));
    g.view_mut((0, d.n + d.n_pi), (d.n_pi, d.m)).copy_from(&u3);
    g.view_mut((0, d.n + d.n_pi + d.m), (d.n_pi, d.m)).copy_from(&u3);
    g
}

/// `Phi + He{Imult Gamma} <= -eps I` at every vertex of `X x D`.
pub fn assemble_dissipativity(model: &DarModel, reg: &DecisionRegistry, opts: &AssemblyOptions) -> Result<Vec<Constraint>> {
    let imult = reg.expr(reg.imult);
    product_vertices(model.x_set(), model.d_set())
        .into_iter()
        .enumerate()
        .map(|(k, (x, d))| {
            let phi = build_phi(model, &x, &d, reg)?;
            let gamma = build_gamma(model, &x, &d);
            let e = phi.add(&imult.mul_right(&gamma).he());
            Ok(Constraint::new(format!("dissipativity[v{k}]"), e, Sense::NegativeDefinite, opts.eps_rel))
        })
        .collect()
}

/// Sector-inclusion block for channel `i` at `(x, d)`.
pub fn sector_block(model: &DarModel, reg: &DecisionRegistry, x: &[f64], delta: &[f64], i: usize) -> MatExpr {
    let d = model.dims();
    let p = reg.expr(reg.p);
    let gbar = reg.affine_at(&reg.gbar, x, delta).expect("Gbar always registered");
    let gi_t = gbar.view(i, 0, 1, d.n).transpose();
    let u = model.u_bar()[i];
    let corner = reg
        .expr(reg.w)
        .view(i, i, 1, 1)
        .scale(2.0)
        .add_constant(&DMatrix::from_element(1, 1, -1.0 / (u * u)));
    match (model.sigma(), reg.z) {
        (Some((s1, s2)), Some(zid)) => {
            let z = reg.expr(zid);
            let s1v = s1.eval(x, delta);
            let s2v = s2.eval(x, delta);
            let b21 = z.mul_right(&s1v); // (Sigma1' Z')' = Z Sigma1
            let b22 = z.mul_right(&s2v).he();
            let gpi = reg.affine_at(&reg.gbar_pi, x, delta).expect("Gbar_pi registered with Z");
            let b32 = gpi.view(i, 0, 1, d.n_pi_x);
            symmetric_blocks(
                &[d.n, d.n_pi_x, 1],
                vec![
                    (0, 0, p),
                    (1, 0, b21),
                    (1, 1, b22),
                    (2, 0, gi_t.transpose()),
                    (2, 1, b32),
                    (2, 2, corner),
                ],
            )
        }
        _ => symmetric_blocks(&[d.n, 1], vec![(0, 0, p), (1, 0, gi_t.transpose()), (1, 1, corner)]),
    }
}

/// One sector-inclusion block per channel per vertex.
pub fn assemble_sector_inclusion(model: &DarModel, reg: &DecisionRegistry, opts: &AssemblyOptions) -> Vec<Constraint> {
    let mut out = Vec::new();
    for (k, (x, d)) in product_vertices(model.x_set(), model.d_set()).into_iter().enumerate() {
        for i in 0..model.dims().m {
            out.push(Constraint::new(
                format!("sector[v{k},u{i}]"),
                sector_block(model, reg, &x, &d, i),
                Sense::PositiveSemidefinite,
                opts.eps_rel,
            ));
        }
    }
    out
}

/// `[[P, a_k], [a_k', 1]] >= 0` for every facet of `X`.
pub fn assemble_polytope_inclusion(model: &DarModel, reg: &DecisionRegistry, opts: &AssemblyOptions) -> Vec<Constraint> {
    let n = model.dims().n;
    model
        .x_set()
        .facets()
        .into_iter()
        .enumerate()
        .map(|(k, a)| {
            let e = symmetric_blocks(
                &[n, 1],
                vec![
                    (0, 0, reg.expr(reg.p)),
                    (1, 0, MatExpr::constant(DMatrix::from_row_slice(1, n, a.as_slice()))),
                    (1, 1, MatExpr::constant(DMatrix::from_element(1, 1, 1.0))),
                ],
            );
            Constraint::new(format!("facet[{k}]"), e, Sense::PositiveSemidefinite, opts.eps_rel)
        })
        .collect()
}

/// `Ls = [-S0 R0^-1; -I]`, the multiplier built from a previous iterate.
pub fn supply_multiplier(s0: &DMatrix<f64>, r0: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (p, m) = s0.shape();
    if r0.shape() != (m, m) {
        return Err(Error::Dimension("R0 must be m x m".into()));
    }
    // (R0^-1 S0')' = S0 R0^-1 for symmetric R0.
    let rs = r0
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidInput("R0 is not positive definite".into()))?
        .solve(&s0.transpose());
    let mut ls = DMatrix::zeros(p + m, m);
    ls.view_mut((0, 0), (p, m)).copy_from(&(-rs.transpose()));
    ls.view_mut((p, 0), (m, m)).copy_from(&(-DMatrix::identity(m, m)));
    Ok(ls)
}

/// `[[Q, S], [S', R]] + He{Ls [S' R]}` (`+ lambda [[-I, 0], [0, 0]]` when
/// relaxed) `<= -eps I`.
pub fn supply_rate_expr(reg: &DecisionRegistry, ls: &DMatrix<f64>, relaxed: bool) -> Result<MatExpr> {
    let (p, m) = reg.shape(reg.s).dims();
    if ls.shape() != (p + m, m) {
        return Err(Error::Dimension(format!("Ls must be {}x{m}, got {:?}", p + m, ls.shape())));
    }
    let q = reg.expr(reg.q);
    let s = reg.expr(reg.s);
    let r = reg.expr(reg.r);
    let md = symmetric_blocks(&[p, m], vec![(0, 0, q), (1, 0, s.transpose()), (1, 1, r.clone())]);
    let cs = s.transpose().hcat(&r);
    let mut e = md.add(&cs.mul_left(ls).he());
    if relaxed {
        let lam = reg
            .lambda
            .ok_or_else(|| Error::InvalidInput("relaxed supply rate needs a lambda block".into()))?;
        let mut shape = DMatrix::zeros(p + m, p + m);
        shape.view_mut((0, 0), (p, p)).fill_with_identity();
        let lam_e = reg.expr(lam);
        let (var, _) = lam_e.terms().next().expect("lambda has one variable");
        let mut term = MatExpr::zeros(p + m, p + m);
        term.add_term(var, -shape);
        e = e.add(&term);
    }
    Ok(e)
}

pub fn assemble_supply_rate(reg: &DecisionRegistry, ls: &DMatrix<f64>, relaxed: bool, opts: &AssemblyOptions) -> Result<Constraint> {
    let e = supply_rate_expr(reg, ls, relaxed)?;
    Ok(Constraint::new("supply-rate".into(), e, Sense::NegativeDefinite, opts.eps_rel))
}

/// Result of the `Q - S R^-1 S' <= 0` test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchurCheck {
    pub passed: bool,
    /// Largest eigenvalue of `Q - S R^-1 S'`.
    pub margin: f64,
}

pub fn schur_stability_check(q: &DMatrix<f64>, s: &DMatrix<f64>, r: &DMatrix<f64>, tol: f64) -> Result<SchurCheck> {
    let (p, m) = s.shape();
    if q.shape() != (p, p) || r.shape() != (m, m) {
        return Err(Error::Dimension("Q, S, R shapes are inconsistent".into()));
    }
    let chol = r
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidInput("R is not positive definite".into()))?;
    let t = q - s * chol.solve(&s.transpose());
    let sym = (&t + t.transpose()) * 0.5;
    let margin = if p == 0 {
        f64::NEG_INFINITY
    } else {
        sym.symmetric_eigenvalues().max()
    };
    Ok(SchurCheck {
        passed: margin <= tol,
        margin,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    Feasibility,
    /// Minimize the relaxation scalar.
    Lambda,
    /// Minimize `trace(P)`.
    TraceP,
    /// Minimize `trace(R)`.
    TraceR,
}

/// Which supply-rate constraint a program carries.
#[derive(Debug, Clone, PartialEq)]
pub struct SupplyRateSpec {
    pub ls: DMatrix<f64>,
    pub relaxed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmiProgram {
    pub registry: DecisionRegistry,
    pub constraints: Vec<Constraint>,
    pub objective: Objective,
    /// Optional lower bound on lambda, keeping the relaxed program bounded.
    pub lambda_floor: Option<f64>,
    /// Entrywise box `|y_i| <= b` on selected blocks.
    pub bounds: Vec<(BlockId, f64)>,
}

impl LmiProgram {
    /// Full program: definiteness of P, N, R, W, all vertex inequalities,
    /// facet inclusion and the supply rate.
    pub fn theorem(model: &DarModel, supply: &SupplyRateSpec, objective: Objective, opts: &AssemblyOptions) -> Result<Self> {
        let reg = DecisionRegistry::new(model, supply.relaxed, opts.constant_gbar);
        let d = model.dims();
        let mut constraints = vec![
            Constraint::new("P>0".into(), reg.expr(reg.p), Sense::PositiveSemidefinite, opts.eps_rel),
            Constraint {
                label: "N>0".into(),
                expr: reg.expr(reg.n),
                sense: Sense::PositiveSemidefinite,
                margin: opts.n_min,
            },
            Constraint::new("R>0".into(), reg.expr(reg.r), Sense::PositiveSemidefinite, opts.eps_rel),
            Constraint::new("W>0".into(), reg.expr(reg.w), Sense::PositiveSemidefinite, opts.eps_rel),
        ];
        if d.n == 0 {
            constraints.clear();
        }
        constraints.extend(assemble_dissipativity(model, &reg, opts)?);
        constraints.extend(assemble_sector_inclusion(model, &reg, opts));
        constraints.extend(assemble_polytope_inclusion(model, &reg, opts));
        constraints.push(assemble_supply_rate(&reg, &supply.ls, supply.relaxed, opts)?);
        if objective == Objective::Lambda && reg.lambda.is_none() {
            return Err(Error::InvalidInput("lambda objective needs the relaxed supply rate".into()));
        }
        Ok(Self {
            registry: reg,
            constraints,
            objective,
            lambda_floor: None,
            bounds: Vec::new(),
        })
    }

    pub fn objective_vector(&self) -> DVector<f64> {
        let reg = &self.registry;
        let mut c = DVector::zeros(reg.num_vars());
        match self.objective {
            Objective::Feasibility => {}
            Objective::Lambda => {
                if let Some(l) = reg.lambda {
                    c[reg.offset(l)] = 1.0;
                }
            }
            Objective::TraceP => c += trace_vector(reg, reg.p),
            Objective::TraceR => c += trace_vector(reg, reg.r),
        }
        c
    }

    pub fn to_sdp(&self) -> SdpProblem {
        let mut sdp = SdpProblem::new(self.registry.num_vars());
        sdp.set_objective(self.objective_vector());
        for c in &self.constraints {
            sdp.push_block(c.to_block());
        }
        if let (Some(floor), Some(l)) = (self.lambda_floor, self.registry.lambda) {
            let mut b = LmiBlock::diagonal(DVector::from_element(1, -floor)).with_label("lambda-floor");
            b.add_term(self.registry.offset(l), DMatrix::identity(1, 1));
            sdp.push_block(b);
        }
        for &(id, bound) in &self.bounds {
            let len = self.registry.shape(id).len();
            if len == 0 {
                continue;
            }
            let off = self.registry.offset(id);
            // bound - y_i >= 0 and bound + y_i >= 0
            let mut b = LmiBlock::diagonal(DVector::from_element(2 * len, bound)).with_label(format!("box[{}]", self.registry.name(id)));
            for i in 0..len {
                let mut coef = DMatrix::zeros(2 * len, 2 * len);
                coef[(2 * i, 2 * i)] = -1.0;
                coef[(2 * i + 1, 2 * i + 1)] = 1.0;
                b.add_term(off + i, coef);
            }
            sdp.push_block(b);
        }
        sdp
    }

    /// Smallest constraint slack at `y` and the label where it occurs.
    pub fn worst_slack(&self, y: &[f64]) -> Option<(String, f64)> {
        self.constraints
            .iter()
            .map(|c| (c.label.clone(), c.slack(y)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Coefficients of `trace(B)` for a symmetric block `B`.
fn trace_vector(reg: &DecisionRegistry, id: BlockId) -> DVector<f64> {
    let mut c = DVector::zeros(reg.num_vars());
    let n = reg.shape(id).dims().0;
    // Diagonal entry (j, j) sits at j (j + 1) / 2 + j in column-major upper storage.
    for j in 0..n {
        c[reg.offset(id) + j * (j + 1) / 2 + j] = 1.0;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::{example1, synthetic_mimo, MimoOutput};
    use proptest::prelude::*;

    fn dm(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, v)
    }

    fn y_with(reg: &DecisionRegistry, set: &[(BlockId, DMatrix<f64>)]) -> Vec<f64> {
        let mut y = vec![0.0; reg.num_vars()];
        for (id, v) in set {
            reg.set_value(*id, v, &mut y);
        }
        y
    }

    #[test]
    fn registry_roundtrip() {
        let model = example1();
        let reg = DecisionRegistry::new(&model, true, false);
        let p = dm(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let s = dm(1, 1, &[-0.7]);
        let y = y_with(&reg, &[(reg.p, p.clone()), (reg.s, s.clone())]);
        assert_eq!(reg.value(reg.p, &y), p);
        assert_eq!(reg.value(reg.s, &y), s);
        assert_eq!(reg.gbar.len(), 3);
        assert_eq!(reg.shape(reg.imult), BlockShape::Full(6, 2));
        assert!(reg.lambda.is_some());
    }

    #[test]
    fn phi_zero_registry_is_zero() {
        let model = example1();
        let reg = DecisionRegistry::new(&model, false, false);
        let phi = build_phi(&model, &[0.9, 0.9], &[], &reg).unwrap();
        let y = vec![0.0; reg.num_vars()];
        assert_eq!(phi.evaluate(&y), DMatrix::zeros(6, 6));
        assert!(phi.is_symmetric());
    }

    #[test]
    fn phi_with_identity_p() {
        let model = example1();
        let reg = DecisionRegistry::new(&model, false, false);
        let y = y_with(&reg, &[(reg.p, DMatrix::identity(2, 2))]);
        let phi = build_phi(&model, &[0.9, 0.9], &[], &reg).unwrap().evaluate(&y);
        assert_eq!(phi.view((0, 0), (2, 2)).into_owned(), dm(2, 2, &[-2.0, 0.25, 0.25, 0.0]));
        // A2(0.9, 0.9)' P in block (pi, x)
        let a2 = dm(2, 2, &[1.0 - 1.35 - 0.9, -0.675 - 0.45, 0.0, 0.0]);
        assert!((phi.view((2, 0), (2, 2)).into_owned() - a2.transpose()).amax() < 1e-15);
    }

    #[test]
    fn phi_with_identity_w() {
        let model = example1();
        let reg = DecisionRegistry::new(&model, false, false);
        let y = y_with(&reg, &[(reg.w, DMatrix::identity(1, 1))]);
        let phi = build_phi(&model, &[0.9, -0.9], &[], &reg).unwrap().evaluate(&y);
        let mut expected = DMatrix::zeros(6, 6);
        expected[(5, 4)] = -1.0;
        expected[(4, 5)] = -1.0;
        expected[(5, 5)] = -2.0;
        assert_eq!(phi, expected);
    }

    #[test]
    fn gamma_examples() {
        let model = example1();
        let g = build_gamma(&model, &[0.0, 0.0], &[]);
        let mut expected = DMatrix::zeros(2, 6);
        expected[(0, 2)] = -1.0;
        expected[(1, 3)] = -1.0;
        assert_eq!(g, expected);
        let mimo = synthetic_mimo(MimoOutput::Vector);
        assert_eq!(build_gamma(&mimo, &[0.1, 0.2], &[0.3]).ncols(), 2 + 1 + 4);
    }

    #[test]
    fn gamma_annihilates_consistent_samples() {
        let model = example1();
        let k = crate::model::GainMatrix::new(dm(1, 1, &[0.9])).unwrap();
        for x in [[0.3, -0.5], [0.9, 0.9], [-0.2, 0.7]] {
            let pt = model.closed_loop(&k, &x, &[]).unwrap();
            let phi = crate::model::deadzone(&pt.v, model.u_bar());
            let z = DVector::from_iterator(6, x.iter().copied().chain(pt.pi.iter().copied()).chain(pt.v.iter().copied()).chain(phi.iter().copied()));
            assert!((build_gamma(&model, &x, &[]) * z).amax() < 1e-15);
        }
    }

    #[test]
    fn constraint_counts() {
        let model = example1();
        let opts = AssemblyOptions::default();
        let reg = DecisionRegistry::new(&model, false, false);
        let dis = assemble_dissipativity(&model, &reg, &opts).unwrap();
        assert_eq!(dis.len(), 4);
        // n + n_pi + 2m = 2 + 2 + 2
        assert!(dis.iter().all(|c| c.expr.shape() == (6, 6) && c.expr.is_symmetric()));
        let sec = assemble_sector_inclusion(&model, &reg, &opts);
        assert_eq!(sec.len(), 4);
        assert!(sec.iter().all(|c| c.expr.shape() == (5, 5) && c.expr.is_symmetric()));
        let fac = assemble_polytope_inclusion(&model, &reg, &opts);
        assert_eq!(fac.len(), 4);

        let mimo = synthetic_mimo(MimoOutput::Scalar);
        let reg = DecisionRegistry::new(&mimo, false, false);
        assert_eq!(assemble_dissipativity(&mimo, &reg, &opts).unwrap().len(), 8);
        assert_eq!(assemble_sector_inclusion(&mimo, &reg, &opts).len(), 16);
    }

    #[test]
    fn remark2_sector_block_size() {
        let model = crate::library::rational_siso();
        let reg = DecisionRegistry::new(&model, false, false);
        let sec = assemble_sector_inclusion(&model, &reg, &AssemblyOptions::default());
        assert!(sec.iter().all(|c| c.expr.shape() == (3, 3)));
        assert!(reg.z.is_none() && reg.gbar_pi.is_empty());
    }

    #[test]
    fn sector_corner_tracks_u_bar() {
        let model = example1();
        let reg = DecisionRegistry::new(&model, false, false);
        let y = vec![0.0; reg.num_vars()];
        let c = sector_block(&model, &reg, &[0.9, 0.9], &[], 0).evaluate(&y)[(4, 4)];
        assert_eq!(c, -1.0 / (1.5 * 1.5));
        let mut parts = crate::library::example1_parts();
        parts.u_bar = vec![15.0];
        let scaled = DarModel::new(parts).unwrap();
        let c10 = sector_block(&scaled, &reg, &[0.9, 0.9], &[], 0).evaluate(&y)[(4, 4)];
        assert!((c10 - c - 0.99 / (1.5 * 1.5)).abs() < 1e-15);
    }

    #[test]
    fn facet_examples() {
        let mut parts = crate::library::example1_parts();
        parts.x_set = crate::affine::Polytope::boxed(vec![1.0, 1.0]).unwrap();
        let model = DarModel::new(parts).unwrap();
        let reg = DecisionRegistry::new(&model, false, false);
        let opts = AssemblyOptions { eps_rel: 0.0, ..AssemblyOptions::default() };
        let facets = assemble_polytope_inclusion(&model, &reg, &opts);
        assert_eq!(facets.len(), 4);
        let y = y_with(&reg, &[(reg.p, DMatrix::identity(2, 2))]);
        assert!(facets.iter().all(|c| c.slack(&y) >= -1e-15));
        let y = y_with(&reg, &[(reg.p, DMatrix::identity(2, 2) * 0.25)]);
        assert!(facets[0].slack(&y) < 0.0);
    }

    #[test]
    fn supply_rate_with_trivial_multiplier() {
        let model = example1();
        let reg = DecisionRegistry::new(&model, false, false);
        let ls = supply_multiplier(&DMatrix::zeros(1, 1), &DMatrix::identity(1, 1)).unwrap();
        assert_eq!(ls, dm(2, 1, &[0.0, -1.0]));
        let e = supply_rate_expr(&reg, &ls, false).unwrap();
        let y = y_with(&reg, &[(reg.q, dm(1, 1, &[-0.4])), (reg.r, dm(1, 1, &[1.0])), (reg.s, dm(1, 1, &[0.0]))]);
        assert_eq!(e.evaluate(&y), dm(2, 2, &[-0.4, 0.0, 0.0, -1.0]));
    }

    #[test]
    fn relaxed_supply_rate_is_always_satisfiable() {
        let model = example1();
        let reg = DecisionRegistry::new(&model, true, false);
        let ls = supply_multiplier(&DMatrix::zeros(1, 1), &DMatrix::identity(1, 1)).unwrap();
        let c = assemble_supply_rate(&reg, &ls, true, &AssemblyOptions::default()).unwrap();
        let y = y_with(
            &reg,
            &[
                (reg.q, dm(1, 1, &[5.0])),
                (reg.s, dm(1, 1, &[3.0])),
                (reg.r, dm(1, 1, &[2.0])),
                (reg.lambda.unwrap(), dm(1, 1, &[100.0])),
            ],
        );
        assert!(c.slack(&y) > 0.0);
    }

    #[test]
    fn schur_examples() {
        let i = DMatrix::identity(1, 1);
        let z = DMatrix::zeros(1, 1);
        let c = schur_stability_check(&(-&i), &z, &i, 0.0).unwrap();
        assert!(c.passed && (c.margin + 1.0).abs() < 1e-15);
        let c = schur_stability_check(&i, &z, &i, 0.0).unwrap();
        assert!(!c.passed && (c.margin - 1.0).abs() < 1e-15);
        let c = schur_stability_check(&dm(1, 1, &[1.0]), &dm(1, 1, &[2.0]), &dm(1, 1, &[4.0]), 0.0).unwrap();
        assert!(c.passed && c.margin.abs() < 1e-15);
        assert!(schur_stability_check(&i, &z, &(-&i), 0.0).is_err());
    }

    #[test]
    fn program_shapes() {
        let model = example1();
        let ls = supply_multiplier(&DMatrix::zeros(1, 1), &DMatrix::identity(1, 1)).unwrap();
        let spec = SupplyRateSpec { ls, relaxed: true };
        let prog = LmiProgram::theorem(&model, &spec, Objective::Lambda, &AssemblyOptions::default()).unwrap();
        let sdp = prog.to_sdp();
        assert!(sdp.validate().is_ok());
        assert_eq!(sdp.blocks().len(), 4 + 4 + 4 + 4 + 1);
        let trace = LmiProgram::theorem(&model, &SupplyRateSpec { relaxed: false, ..spec }, Objective::TraceP, &AssemblyOptions::default()).unwrap();
        let c = trace.objective_vector();
        let mut y = vec![0.0; trace.registry.num_vars()];
        trace.registry.set_value(trace.registry.p, &dm(2, 2, &[3.0, 7.0, 7.0, 5.0]), &mut y);
        assert_eq!(c.dot(&DVector::from_vec(y)), 8.0);
    }

    fn random_y(reg: &DecisionRegistry, seed: &[f64]) -> Vec<f64> {
        (0..reg.num_vars()).map(|i| seed[i % seed.len()] * (1.0 + i as f64 * 0.01)).collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn assembly_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0,
                              s1 in prop::collection::vec(-2.0f64..2.0, 7),
                              s2 in prop::collection::vec(-2.0f64..2.0, 5)) {
            let model = synthetic_mimo(MimoOutput::Vector);
            let opts = AssemblyOptions::default();
            let ls = supply_multiplier(&DMatrix::from_element(2, 2, 0.3), &DMatrix::identity(2, 2)).unwrap();
            let prog = LmiProgram::theorem(&model, &SupplyRateSpec { ls, relaxed: true }, Objective::Lambda, &opts).unwrap();
            let y1 = random_y(&prog.registry, &s1);
            let y2 = random_y(&prog.registry, &s2);
            let comb: Vec<f64> = y1.iter().zip(&y2).map(|(u, v)| a * u + b * v).collect();
            for c in &prog.constraints {
                prop_assert!(c.expr.is_symmetric());
                let lhs = c.expr.evaluate_linear(&comb);
                let rhs = c.expr.evaluate_linear(&y1) * a + c.expr.evaluate_linear(&y2) * b;
                prop_assert!((lhs - rhs).amax() <= 1e-12 * (1.0 + a.abs() + b.abs()) * 10.0);
            }
        }

        // Remark-3 equivalence against an eigenvalue oracle.
        #[test]
        fn multiplier_equivalence(q in prop::collection::vec(-2.0f64..2.0, 9),
                                  s in prop::collection::vec(-2.0f64..2.0, 6),
                                  r in prop::collection::vec(-2.0f64..2.0, 4)) {
            let qm = DMatrix::from_column_slice(3, 3, &q);
            let qm = (&qm + qm.transpose()) * 0.5;
            let sm = DMatrix::from_column_slice(3, 2, &s);
            let rm = DMatrix::from_column_slice(2, 2, &r);
            let rm = &rm * rm.transpose() + DMatrix::identity(2, 2) * 0.1;
            let ls = supply_multiplier(&sm, &rm).unwrap();
            let md = {
                let mut m = DMatrix::zeros(5, 5);
                m.view_mut((0, 0), (3, 3)).copy_from(&qm);
                m.view_mut((0, 3), (3, 2)).copy_from(&sm);
                m.view_mut((3, 0), (2, 3)).copy_from(&sm.transpose());
                m.view_mut((3, 3), (2, 2)).copy_from(&rm);
                m
            };
            let mut cs = DMatrix::zeros(2, 5);
            cs.view_mut((0, 0), (2, 3)).copy_from(&sm.transpose());
            cs.view_mut((0, 3), (2, 2)).copy_from(&rm);
            let x = &ls * &cs;
            let lmi = &md + &x + x.transpose();
            let lmi_max = lmi.symmetric_eigenvalues().max();
            let schur = schur_stability_check(&qm, &sm, &rm, 0.0).unwrap().margin;
            prop_assume!(lmi_max.abs() > 1e-9 && schur.abs() > 1e-9);
            prop_assert_eq!(lmi_max < 0.0, schur < 0.0);
        }
    }
}
