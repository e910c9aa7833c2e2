//! Problem description in linear-matrix-inequality form.
//!
//! ```text
//! minimize    c' y
//! subject to  F_b(y) = F_b0 + sum_i y_i F_bi  >= 0     for every block b
//! ```
//!
//! Blocks are either dense symmetric matrices or diagonal (a bundle of scalar
//! linear inequalities). Variables are free.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::SdpError;

/// One symmetric block `F0 + sum_i y_i F_i >= 0`.
#[derive(Debug, Clone)]
pub struct LmiBlock {
    pub(crate) dim: usize,
    pub(crate) kind: BlockKind,
    pub(crate) constant: DMatrix<f64>,
    /// Coefficient matrices keyed by variable index, sorted and unique.
    pub(crate) terms: Vec<(usize, DMatrix<f64>)>,
    pub(crate) label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Dense,
    Diagonal,
}

impl LmiBlock {
    /// Creates a dense block with the given constant term.
    pub fn dense(constant: DMatrix<f64>) -> Self {
        assert!(constant.is_square(), "LMI block must be square");
        Self {
            dim: constant.nrows(),
            kind: BlockKind::Dense,
            constant,
            terms: Vec::new(),
            label: String::new(),
        }
    }

    /// Creates a diagonal block: `dim` independent scalar inequalities.
    pub fn diagonal(constant: DVector<f64>) -> Self {
        Self {
            dim: constant.len(),
            kind: BlockKind::Diagonal,
            constant: DMatrix::from_diagonal(&constant),
            terms: Vec::new(),
            label: String::new(),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Adds `coef * y_var` to the block. Repeated variables accumulate.
    pub fn add_term(&mut self, var: usize, coef: DMatrix<f64>) {
        assert_eq!(coef.shape(), (self.dim, self.dim), "coefficient shape mismatch");
        match self.terms.binary_search_by_key(&var, |(v, _)| *v) {
            Ok(pos) => self.terms[pos].1 += coef,
            Err(pos) => self.terms.insert(pos, (var, coef)),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> BlockKind {
        self.kind
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn constant(&self) -> &DMatrix<f64> {
        &self.constant
    }

    pub fn terms(&self) -> &[(usize, DMatrix<f64>)] {
        &self.terms
    }

    /// Evaluates `F0 + sum_i y_i F_i`.
    pub fn evaluate(&self, y: &[f64]) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (var, coef) in &self.terms {
            if y[*var] != 0.0 {
                out += coef * y[*var];
            }
        }
        out
    }
}

/// A complete LMI program.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub(crate) num_vars: usize,
    pub(crate) objective: DVector<f64>,
    pub(crate) blocks: Vec<LmiBlock>,
}

impl SdpProblem {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            objective: DVector::zeros(num_vars),
            blocks: Vec::new(),
        }
    }

    pub fn set_objective(&mut self, c: DVector<f64>) {
        assert_eq!(c.len(), self.num_vars, "objective length mismatch");
        self.objective = c;
    }

    pub fn push_block(&mut self, block: LmiBlock) {
        self.blocks.push(block);
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn objective(&self) -> &DVector<f64> {
        &self.objective
    }

    pub fn blocks(&self) -> &[LmiBlock] {
        &self.blocks
    }

    /// True when the objective is identically zero.
    pub fn is_feasibility(&self) -> bool {
        self.objective.iter().all(|c| *c == 0.0)
    }

    /// Checks dimensions, symmetry and variable indices.
    pub fn validate(&self) -> Result<(), SdpError> {
        for (b, block) in self.blocks.iter().enumerate() {
            if block.constant.shape() != (block.dim, block.dim) {
                return Err(SdpError::Malformed(format!("block {b}: constant has wrong shape")));
            }
            check_symmetric(&block.constant, b)?;
            for (var, coef) in &block.terms {
                if *var >= self.num_vars {
                    return Err(SdpError::Malformed(format!(
                        "block {b}: variable {var} out of range (num_vars = {})",
                        self.num_vars
                    )));
                }
                check_symmetric(coef, b)?;
                if block.kind == BlockKind::Diagonal && !is_diagonal(coef) {
                    return Err(SdpError::Malformed(format!(
                        "block {b}: diagonal block has off-diagonal coefficient"
                    )));
                }
            }
            if block.kind == BlockKind::Diagonal && !is_diagonal(&block.constant) {
                return Err(SdpError::Malformed(format!(
                    "block {b}: diagonal block has off-diagonal constant"
                )));
            }
            let finite = block.constant.iter().all(|v| v.is_finite())
                && block.terms.iter().all(|(_, c)| c.iter().all(|v| v.is_finite()));
            if !finite {
                return Err(SdpError::Malformed(format!("block {b}: non-finite entry")));
            }
        }
        if !self.objective.iter().all(|v| v.is_finite()) {
            return Err(SdpError::Malformed("non-finite objective".into()));
        }
        Ok(())
    }

    /// Writes the program in SDPA sparse format (`.dat-s`).
    ///
    /// SDPA's primal reads `min c'x s.t. sum_i x_i F_i - F_0 >= 0`, so the
    /// constant term is written with flipped sign. Diagonal blocks are given
    /// negative sizes, as the format prescribes.
    pub fn to_sdpa(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "\"sofsat LMI program\"");
        let _ = writeln!(out, "{} = mDIM", self.num_vars);
        let _ = writeln!(out, "{} = nBLOCK", self.blocks.len());
        let sizes: Vec<String> = self
            .blocks
            .iter()
            .map(|b| match b.kind {
                BlockKind::Dense => b.dim.to_string(),
                BlockKind::Diagonal => format!("-{}", b.dim),
            })
            .collect();
        let _ = writeln!(out, "{} = bLOCKsTRUCT", sizes.join(" "));
        let costs: Vec<String> = self.objective.iter().map(|c| format!("{c:.17e}")).collect();
        let _ = writeln!(out, "{}", costs.join(" "));
        for (b, block) in self.blocks.iter().enumerate() {
            write_upper_triplets(&mut out, 0, b + 1, &(-&block.constant));
            for (var, coef) in &block.terms {
                write_upper_triplets(&mut out, var + 1, b + 1, coef);
            }
        }
        out
    }
}

fn write_upper_triplets(out: &mut String, matno: usize, blkno: usize, m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            let v = m[(i, j)];
            if v != 0.0 {
                let _ = writeln!(out, "{matno} {blkno} {} {} {v:.17e}", i + 1, j + 1);
            }
        }
    }
}

fn check_symmetric(m: &DMatrix<f64>, block: usize) -> Result<(), SdpError> {
    let scale = m.amax().max(1.0);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return Err(SdpError::Malformed(format!(
                    "block {block}: matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j && m[(i, j)] != 0.0 {
                return false;
            }
        }
    }
    true
}
