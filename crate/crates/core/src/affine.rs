//! Matrices affine in the state and the uncertainty, and box polytopes.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

/// `M(x, d) = M0 + sum_i x_i Mx_i + sum_j d_j Md_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMatrix {
    constant: DMatrix<f64>,
    x_coeffs: Vec<DMatrix<f64>>,
    delta_coeffs: Vec<DMatrix<f64>>,
    // Indices of non-zero coefficients, so evaluation skips empty terms.
    active_x: Vec<usize>,
    active_delta: Vec<usize>,
}

impl AffineMatrix {
    pub fn new(constant: DMatrix<f64>, x_coeffs: Vec<DMatrix<f64>>, delta_coeffs: Vec<DMatrix<f64>>) -> Result<Self> {
        let shape = constant.shape();
        for (k, m) in x_coeffs.iter().chain(delta_coeffs.iter()).enumerate() {
            if m.shape() != shape {
                return Err(Error::Dimension(format!(
                    "affine coefficient {k} has shape {:?}, expected {shape:?}",
                    m.shape()
                )));
            }
        }
        let active = |v: &[DMatrix<f64>]| {
            v.iter()
                .enumerate()
                .filter(|(_, m)| m.iter().any(|e| *e != 0.0))
                .map(|(i, _)| i)
                .collect()
        };
        Ok(Self {
            active_x: active(&x_coeffs),
            active_delta: active(&delta_coeffs),
            constant,
            x_coeffs,
            delta_coeffs,
        })
    }

    pub fn zeros(rows: usize, cols: usize, n: usize, l: usize) -> Self {
        Self::constant(DMatrix::zeros(rows, cols), n, l)
    }

    /// A matrix with no dependence on `(x, d)`.
    pub fn constant(m: DMatrix<f64>, n: usize, l: usize) -> Self {
        let (r, c) = m.shape();
        Self {
            constant: m,
            x_coeffs: vec![DMatrix::zeros(r, c); n],
            delta_coeffs: vec![DMatrix::zeros(r, c); l],
            active_x: Vec::new(),
            active_delta: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.constant.nrows()
    }

    pub fn cols(&self) -> usize {
        self.constant.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.constant.shape()
    }

    pub fn n_states(&self) -> usize {
        self.x_coeffs.len()
    }

    pub fn n_uncertain(&self) -> usize {
        self.delta_coeffs.len()
    }

    pub fn const_term(&self) -> &DMatrix<f64> {
        &self.constant
    }

    pub fn x_coeffs(&self) -> &[DMatrix<f64>] {
        &self.x_coeffs
    }

    pub fn delta_coeffs(&self) -> &[DMatrix<f64>] {
        &self.delta_coeffs
    }

    /// All coefficient matrices in the order `[M0, Mx_1.., Md_1..]`.
    pub fn coefficients(&self) -> impl Iterator<Item = &DMatrix<f64>> {
        std::iter::once(&self.constant)
            .chain(self.x_coeffs.iter())
            .chain(self.delta_coeffs.iter())
    }

    pub fn is_zero(&self) -> bool {
        self.active_x.is_empty() && self.active_delta.is_empty() && self.constant.iter().all(|v| *v == 0.0)
    }

    pub fn is_constant(&self) -> bool {
        self.active_x.is_empty() && self.active_delta.is_empty()
    }

    pub fn evaluate(&self, x: &[f64], delta: &[f64]) -> Result<DMatrix<f64>> {
        if x.len() != self.x_coeffs.len() || delta.len() != self.delta_coeffs.len() {
            return Err(Error::Dimension(format!(
                "affine matrix expects (n, l) = ({}, {}), got ({}, {})",
                self.x_coeffs.len(),
                self.delta_coeffs.len(),
                x.len(),
                delta.len()
            )));
        }
        Ok(self.eval(x, delta))
    }

    /// Evaluation without the length check; callers guarantee dimensions.
    pub(crate) fn eval(&self, x: &[f64], delta: &[f64]) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for &i in &self.active_x {
            if x[i] != 0.0 {
                let a = x[i];
                out.zip_apply(&self.x_coeffs[i], |o, c| *o += a * c);
            }
        }
        for &j in &self.active_delta {
            if delta[j] != 0.0 {
                let a = delta[j];
                out.zip_apply(&self.delta_coeffs[j], |o, c| *o += a * c);
            }
        }
        out
    }

    /// Applies `f` to every coefficient.
    pub fn map(&self, f: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> Result<Self> {
        Self::new(
            f(&self.constant),
            self.x_coeffs.iter().map(&f).collect(),
            self.delta_coeffs.iter().map(&f).collect(),
        )
    }
}

/// Axis-aligned box `{w : |w_i| <= b_i}` with every `b_i > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxPolytope {
    bounds: Vec<f64>,
}

impl BoxPolytope {
    pub fn new(bounds: Vec<f64>) -> Result<Self> {
        if let Some(b) = bounds.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "box half-widths must be positive and finite, got {b}"
            )));
        }
        Ok(Self { bounds })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    /// All `2^dim` corners. The first coordinate is the most significant
    /// sign, with `-` before `+`: `(-,-), (-,+), (+,-), (+,+)` in 2-D.
    pub fn vertices(&self) -> Vec<DVector<f64>> {
        let d = self.dim();
        (0..1usize << d)
            .map(|k| {
                DVector::from_iterator(
                    d,
                    self.bounds.iter().enumerate().map(|(i, b)| {
                        if (k >> (d - 1 - i)) & 1 == 1 {
                            *b
                        } else {
                            -*b
                        }
                    }),
                )
            })
            .collect()
    }

    /// Facet normals `a_k` with `a_k' w <= 1` on the box, ordered
    /// `+e_1/b_1, -e_1/b_1, +e_2/b_2, ...`.
    pub fn facets(&self) -> Vec<DVector<f64>> {
        let d = self.dim();
        let mut out = Vec::with_capacity(2 * d);
        for (i, b) in self.bounds.iter().enumerate() {
            for sign in [1.0, -1.0] {
                let mut a = DVector::zeros(d);
                a[i] = sign / b;
                out.push(a);
            }
        }
        out
    }

    pub fn contains(&self, w: &[f64], tol: f64) -> bool {
        w.len() == self.dim() && w.iter().zip(&self.bounds).all(|(v, b)| v.abs() <= b + tol)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.bounds.iter().map(|b| rng.random_range(-*b..=*b)).collect()
    }

    /// Regular grid with `per_axis` points per coordinate, corners included.
    pub fn grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let d = self.dim();
        let per_axis = per_axis.max(2);
        let total = per_axis.pow(d as u32);
        (0..total)
            .map(|mut k| {
                let mut p = vec![0.0; d];
                for i in (0..d).rev() {
                    let idx = k % per_axis;
                    k /= per_axis;
                    let t = idx as f64 / (per_axis - 1) as f64;
                    p[i] = -self.bounds[i] + 2.0 * self.bounds[i] * t;
                }
                p
            })
            .collect()
    }
}

/// A polytope given either as a box or as explicit vertex and facet lists.
#[derive(Debug, Clone, PartialEq)]
pub enum Polytope {
    Box(BoxPolytope),
    /// Convex hull of `vertices`, equal to `{w : a_k' w <= 1}`. Consistency
    /// of the two lists is checked at construction.
    Explicit {
        vertices: Vec<DVector<f64>>,
        facets: Vec<DVector<f64>>,
    },
}

impl Polytope {
    pub fn boxed(bounds: Vec<f64>) -> Result<Self> {
        Ok(Self::Box(BoxPolytope::new(bounds)?))
    }

    pub fn explicit(vertices: Vec<DVector<f64>>, facets: Vec<DVector<f64>>) -> Result<Self> {
        let Some(d) = vertices.first().map(|v| v.len()) else {
            return Err(Error::InvalidInput("explicit polytope needs at least one vertex".into()));
        };
        if vertices.iter().chain(facets.iter()).any(|v| v.len() != d) {
            return Err(Error::Dimension("explicit polytope vectors differ in length".into()));
        }
        for (k, a) in facets.iter().enumerate() {
            let worst = vertices.iter().map(|v| a.dot(v)).fold(f64::NEG_INFINITY, f64::max);
            if worst > 1.0 + 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "vertex violates facet {k}: a'v = {worst}"
                )));
            }
        }
        Ok(Self::Explicit { vertices, facets })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Box(b) => b.dim(),
            Self::Explicit { vertices, .. } => vertices[0].len(),
        }
    }

    pub fn vertices(&self) -> Vec<DVector<f64>> {
        match self {
            Self::Box(b) => b.vertices(),
            Self::Explicit { vertices, .. } => vertices.clone(),
        }
    }

    pub fn facets(&self) -> Vec<DVector<f64>> {
        match self {
            Self::Box(b) => b.facets(),
            Self::Explicit { facets, .. } => facets.clone(),
        }
    }

    pub fn as_box(&self) -> Option<&BoxPolytope> {
        match self {
            Self::Box(b) => Some(b),
            Self::Explicit { .. } => None,
        }
    }

    pub fn contains(&self, w: &[f64], tol: f64) -> bool {
        match self {
            Self::Box(b) => b.contains(w, tol),
            Self::Explicit { facets, .. } => {
                let w = DVector::from_column_slice(w);
                facets.iter().all(|a| a.dot(&w) <= 1.0 + tol)
            }
        }
    }

    /// Random point: uniform for boxes, a random convex combination of the
    /// vertices otherwise.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Self::Box(b) => b.sample(rng),
            Self::Explicit { vertices, .. } => {
                let weights: Vec<f64> = vertices.iter().map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
                let total: f64 = weights.iter().sum();
                let mut p = DVector::zeros(self.dim());
                for (w, v) in weights.iter().zip(vertices) {
                    p += v * (w / total);
                }
                p.iter().copied().collect()
            }
        }
    }

    /// Sample points used for well-posedness checks: the vertices plus a
    /// regular interior grid (boxes) or vertex-pair midpoints and centroid.
    pub fn check_points(&self, per_axis: usize) -> Vec<Vec<f64>> {
        match self {
            Self::Box(b) => {
                let mut pts: Vec<Vec<f64>> = b.vertices().iter().map(|v| v.iter().copied().collect()).collect();
                pts.extend(b.grid(per_axis));
                pts
            }
            Self::Explicit { vertices, .. } => {
                let mut pts: Vec<Vec<f64>> = vertices.iter().map(|v| v.iter().copied().collect()).collect();
                for i in 0..vertices.len() {
                    for j in (i + 1)..vertices.len() {
                        pts.push(((&vertices[i] + &vertices[j]) * 0.5).iter().copied().collect());
                    }
                }
                let centroid = vertices.iter().fold(DVector::zeros(self.dim()), |acc, v| acc + v)
                    / vertices.len() as f64;
                pts.push(centroid.iter().copied().collect());
                pts
            }
        }
    }
}

/// Cartesian product of the vertex lists, `x` varying slowest.
pub fn product_vertices(x_set: &Polytope, d_set: &Polytope) -> Vec<(Vec<f64>, Vec<f64>)> {
    let xs = x_set.vertices();
    let ds = d_set.vertices();
    let mut out = Vec::with_capacity(xs.len() * ds.len());
    for x in &xs {
        for d in &ds {
            out.push((x.iter().copied().collect(), d.iter().copied().collect()));
        }
    }
    out
}
