//! TOML model files and reports.
//!
//! Matrices are arrays of rows. Floats are written in shortest round-trip
//! form, so every value read back is bit-identical to the one written.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::affine::{AffineMatrix, Polytope};
use crate::error::{Error, Result};
use crate::model::{DarModel, DarModelParts, Dims};
use crate::oracle::PiOracle;
use crate::synthesis::{ellipsoid_metrics, Certificate, SynthesisResult, SynthesisStatus};
use crate::verifier::{CheckResult, VerificationReport};

type Rows = Vec<Vec<f64>>;

fn rows_of(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Builds an `rows x cols` matrix; `[]` is accepted for any empty shape.
fn matrix_from(rows: &Rows, shape: (usize, usize), at: &str) -> Result<DMatrix<f64>> {
    let (r, c) = shape;
    if rows.is_empty() && r * c == 0 {
        return Ok(DMatrix::zeros(r, c));
    }
    if rows.len() != r {
        return Err(Error::Parse(format!("{at}: expected {r} rows, got {}", rows.len())));
    }
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, row)| row.len() != c) {
        return Err(Error::Parse(format!("{at}: row {i} has {} entries, expected {c}", row.len())));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimsDoc {
    pub n: usize,
    pub n_pi: usize,
    #[serde(default)]
    pub n_pi_x: usize,
    pub m: usize,
    pub p: usize,
    #[serde(default)]
    pub l: usize,
}

impl From<Dims> for DimsDoc {
    fn from(d: Dims) -> Self {
        Self {
            n: d.n,
            n_pi: d.n_pi,
            n_pi_x: d.n_pi_x,
            m: d.m,
            p: d.p,
            l: d.l,
        }
    }
}

impl From<&DimsDoc> for Dims {
    fn from(d: &DimsDoc) -> Self {
        Self {
            n: d.n,
            n_pi: d.n_pi,
            n_pi_x: d.n_pi_x,
            m: d.m,
            p: d.p,
            l: d.l,
        }
    }
}

/// Either a plain matrix (constant) or `{ const, x, delta }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AffineDoc {
    Constant(Rows),
    Affine {
        #[serde(rename = "const")]
        constant: Rows,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        x: Vec<Rows>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        delta: Vec<Rows>,
    },
}

impl AffineDoc {
    fn from_affine(a: &AffineMatrix) -> Self {
        if a.is_constant() {
            return Self::Constant(rows_of(a.const_term()));
        }
        let keep = |v: &[DMatrix<f64>]| {
            if v.iter().all(|m| m.iter().all(|e| *e == 0.0)) {
                Vec::new()
            } else {
                v.iter().map(rows_of).collect()
            }
        };
        Self::Affine {
            constant: rows_of(a.const_term()),
            x: keep(a.x_coeffs()),
            delta: keep(a.delta_coeffs()),
        }
    }

    fn to_affine(&self, shape: (usize, usize), n: usize, l: usize, at: &str) -> Result<AffineMatrix> {
        match self {
            Self::Constant(rows) => Ok(AffineMatrix::constant(matrix_from(rows, shape, at)?, n, l)),
            Self::Affine { constant, x, delta } => {
                let list = |v: &[Rows], want: usize, what: &str| -> Result<Vec<DMatrix<f64>>> {
                    if v.is_empty() {
                        return Ok(vec![DMatrix::zeros(shape.0, shape.1); want]);
                    }
                    if v.len() != want {
                        return Err(Error::Parse(format!("{at}.{what}: expected {want} matrices, got {}", v.len())));
                    }
                    v.iter()
                        .enumerate()
                        .map(|(k, m)| matrix_from(m, shape, &format!("{at}.{what}[{k}]")))
                        .collect()
                };
                let c = matrix_from(constant, shape, &format!("{at}.const"))?;
                AffineMatrix::new(c, list(x, n, "x")?, list(delta, l, "delta")?)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolytopeDoc {
    pub vertices: Rows,
    pub facets: Rows,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub u_bar: Vec<f64>,
    #[serde(rename = "X_bounds", default, skip_serializing_if = "Option::is_none")]
    pub x_bounds: Option<Vec<f64>>,
    #[serde(rename = "D_bounds", default, skip_serializing_if = "Option::is_none")]
    pub d_bounds: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi_oracle: Option<Vec<String>>,
    #[serde(rename = "C1")]
    pub c1: Rows,
    #[serde(rename = "C2", default)]
    pub c2: Rows,
    pub dims: DimsDoc,
    #[serde(rename = "X", default, skip_serializing_if = "Option::is_none")]
    pub x_set: Option<PolytopeDoc>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub d_set: Option<PolytopeDoc>,
    #[serde(rename = "A1")]
    pub a1: AffineDoc,
    #[serde(rename = "A2", default, skip_serializing_if = "Option::is_none")]
    pub a2: Option<AffineDoc>,
    #[serde(rename = "A3")]
    pub a3: AffineDoc,
    #[serde(rename = "Ups1", default, skip_serializing_if = "Option::is_none")]
    pub ups1: Option<AffineDoc>,
    #[serde(rename = "Ups2", default, skip_serializing_if = "Option::is_none")]
    pub ups2: Option<AffineDoc>,
    #[serde(rename = "Ups3", default, skip_serializing_if = "Option::is_none")]
    pub ups3: Option<AffineDoc>,
    #[serde(rename = "Sigma1", default, skip_serializing_if = "Option::is_none")]
    pub sigma1: Option<AffineDoc>,
    #[serde(rename = "Sigma2", default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<AffineDoc>,
}

fn polytope(bounds: &Option<Vec<f64>>, explicit: &Option<PolytopeDoc>, dim: usize, name: &str) -> Result<Polytope> {
    let vecs = |rows: &Rows, what: &str| -> Result<Vec<DVector<f64>>> {
        rows.iter()
            .enumerate()
            .map(|(k, r)| {
                if r.len() == dim {
                    Ok(DVector::from_column_slice(r))
                } else {
                    Err(Error::Parse(format!("{name}.{what}[{k}]: expected {dim} entries, got {}", r.len())))
                }
            })
            .collect()
    };
    match (bounds, explicit) {
        (Some(_), Some(_)) => Err(Error::Parse(format!("give either {name}_bounds or [{name}], not both"))),
        (Some(b), None) => {
            if b.len() != dim {
                return Err(Error::Parse(format!("{name}_bounds: expected {dim} entries, got {}", b.len())));
            }
            Polytope::boxed(b.clone()).map_err(|e| Error::Parse(format!("{name}_bounds: {e}")))
        }
        (None, Some(doc)) => Polytope::explicit(vecs(&doc.vertices, "vertices")?, vecs(&doc.facets, "facets")?)
            .map_err(|e| Error::Parse(format!("[{name}]: {e}"))),
        (None, None) if dim == 0 => Polytope::boxed(Vec::new()),
        (None, None) => Err(Error::Parse(format!("missing {name}_bounds (or an explicit [{name}] table)"))),
    }
}

impl ModelDoc {
    pub fn from_model(model: &DarModel, name: Option<String>) -> Self {
        let poly = |p: &Polytope| match p.as_box() {
            Some(b) => (Some(b.bounds().to_vec()), None),
            None => (
                None,
                Some(PolytopeDoc {
                    vertices: p.vertices().iter().map(|v| v.iter().copied().collect()).collect(),
                    facets: p.facets().iter().map(|v| v.iter().copied().collect()).collect(),
                }),
            ),
        };
        let (x_bounds, x_set) = poly(model.x_set());
        let (d_bounds, d_set) = poly(model.d_set());
        let d = model.dims();
        Self {
            name,
            dims: d.into(),
            u_bar: model.u_bar().iter().copied().collect(),
            x_bounds,
            d_bounds: if d.l == 0 && d_set.is_none() { None } else { d_bounds },
            pi_oracle: model.pi_oracle().map(|o| o.sources()),
            c1: rows_of(model.c1()),
            c2: rows_of(model.c2()),
            x_set,
            d_set,
            a1: AffineDoc::from_affine(model.a1()),
            a2: Some(AffineDoc::from_affine(model.a2())),
            a3: AffineDoc::from_affine(model.a3()),
            ups1: Some(AffineDoc::from_affine(model.ups1())),
            ups2: Some(AffineDoc::from_affine(model.ups2())),
            ups3: Some(AffineDoc::from_affine(model.ups3())),
            sigma1: model.sigma().map(|(s1, _)| AffineDoc::from_affine(s1)),
            sigma2: model.sigma().map(|(_, s2)| AffineDoc::from_affine(s2)),
        }
    }

    pub fn to_model(&self) -> Result<DarModel> {
        let d: Dims = (&self.dims).into();
        let (n, l) = (d.n, d.l);
        let req = |doc: &AffineDoc, shape, at: &str| doc.to_affine(shape, n, l, at);
        let opt = |doc: &Option<AffineDoc>, shape: (usize, usize), at: &str| match doc {
            Some(doc) => doc.to_affine(shape, n, l, at),
            None => Ok(AffineMatrix::zeros(shape.0, shape.1, n, l)),
        };
        let ups2 = match &self.ups2 {
            Some(doc) => req(doc, (d.n_pi, d.n_pi), "Ups2")?,
            None if d.n_pi == 0 => AffineMatrix::zeros(0, 0, n, l),
            None => return Err(Error::Parse("missing Ups2".into())),
        };
        let sigma = match (&self.sigma1, &self.sigma2) {
            (Some(s1), Some(s2)) => Some((
                req(s1, (d.n_pi_x, n), "Sigma1")?,
                req(s2, (d.n_pi_x, d.n_pi_x), "Sigma2")?,
            )),
            (None, None) => None,
            _ => return Err(Error::Parse("Sigma1 and Sigma2 must be given together".into())),
        };
        if self.u_bar.len() != d.m {
            return Err(Error::Parse(format!("u_bar: expected {} entries, got {}", d.m, self.u_bar.len())));
        }
        let pi_oracle = match &self.pi_oracle {
            Some(entries) => Some(PiOracle::parse(entries).map_err(|e| Error::Parse(format!("pi_oracle: {e}")))?),
            None => None,
        };
        let c2 = if self.c2.is_empty() {
            DMatrix::zeros(d.p, d.n_pi)
        } else {
            matrix_from(&self.c2, (d.p, d.n_pi), "C2")?
        };
        DarModel::new(DarModelParts {
            dims: d,
            a1: req(&self.a1, (n, n), "A1")?,
            a2: opt(&self.a2, (n, d.n_pi), "A2")?,
            a3: req(&self.a3, (n, d.m), "A3")?,
            ups1: opt(&self.ups1, (d.n_pi, n), "Ups1")?,
            ups2,
            ups3: opt(&self.ups3, (d.n_pi, d.m), "Ups3")?,
            c1: matrix_from(&self.c1, (d.p, n), "C1")?,
            c2,
            sigma,
            u_bar: self.u_bar.clone(),
            x_set: polytope(&self.x_bounds, &self.x_set, n, "X")?,
            d_set: polytope(&self.d_bounds, &self.d_set, l, "D")?,
            pi_oracle,
        })
    }
}

pub fn parse_model(text: &str) -> Result<DarModel> {
    let doc: ModelDoc = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    doc.to_model()
}

pub fn write_model(model: &DarModel, name: Option<&str>) -> Result<String> {
    toml::to_string(&ModelDoc::from_model(model, name.map(str::to_string))).map_err(|e| Error::Parse(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateDoc {
    #[serde(rename = "P")]
    pub p: Rows,
    #[serde(rename = "N")]
    pub n: Rows,
    #[serde(rename = "Q")]
    pub q: Rows,
    #[serde(rename = "S")]
    pub s: Rows,
    #[serde(rename = "R")]
    pub r: Rows,
    /// Diagonal of `W`.
    #[serde(rename = "W")]
    pub w: Vec<f64>,
    #[serde(rename = "Imult")]
    pub imult: Rows,
    #[serde(rename = "Z", default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Rows>,
    #[serde(rename = "Gbar")]
    pub gbar: Vec<Rows>,
    #[serde(rename = "Gbar_pi", default, skip_serializing_if = "Vec::is_empty")]
    pub gbar_pi: Vec<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

impl CertificateDoc {
    pub fn from_certificate(c: &Certificate) -> Self {
        Self {
            p: rows_of(&c.p),
            n: rows_of(&c.n),
            q: rows_of(&c.q),
            s: rows_of(&c.s),
            r: rows_of(&c.r),
            w: c.w.diagonal().iter().copied().collect(),
            imult: rows_of(&c.imult),
            z: c.z.as_ref().map(rows_of),
            gbar: c.gbar.iter().map(rows_of).collect(),
            gbar_pi: c.gbar_pi.iter().map(rows_of).collect(),
            lambda: c.lambda,
        }
    }

    /// Shapes are taken from `dims`; the verifier re-checks consistency.
    pub fn to_certificate(&self, d: Dims) -> Result<Certificate> {
        let size = d.n + d.n_pi + 2 * d.m;
        let at = |what: &str| format!("certificate.{what}");
        if self.w.len() != d.m {
            return Err(Error::Parse(format!("certificate.W: expected {} entries, got {}", d.m, self.w.len())));
        }
        let list = |v: &[Rows], shape, what: &str| -> Result<Vec<DMatrix<f64>>> {
            v.iter()
                .enumerate()
                .map(|(k, m)| matrix_from(m, shape, &format!("certificate.{what}[{k}]")))
                .collect()
        };
        Ok(Certificate {
            p: matrix_from(&self.p, (d.n, d.n), &at("P"))?,
            n: matrix_from(&self.n, (d.n, d.n), &at("N"))?,
            q: matrix_from(&self.q, (d.p, d.p), &at("Q"))?,
            s: matrix_from(&self.s, (d.p, d.m), &at("S"))?,
            r: matrix_from(&self.r, (d.m, d.m), &at("R"))?,
            w: DMatrix::from_diagonal(&DVector::from_column_slice(&self.w)),
            imult: matrix_from(&self.imult, (size, d.n_pi), &at("Imult"))?,
            z: match &self.z {
                Some(z) => Some(matrix_from(z, (d.n_pi_x, d.n_pi_x), &at("Z"))?),
                None => None,
            },
            gbar: list(&self.gbar, (d.m, d.n), "Gbar")?,
            gbar_pi: list(&self.gbar_pi, (d.m, d.n_pi_x), "Gbar_pi")?,
            lambda: self.lambda,
        })
    }
}

/// Run settings recorded in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDoc {
    pub i_max: usize,
    pub gamma: f64,
    pub skip_maximize: bool,
    pub solver_gap_tol: f64,
    pub solver_feas_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsDoc {
    pub semi_axes: Vec<f64>,
    pub max_radius: f64,
    pub min_radius: f64,
    #[serde(rename = "log_det_P_inv")]
    pub log_det_p_inv: f64,
    pub volume: f64,
    pub trace_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveDoc {
    pub stage: String,
    pub iteration: usize,
    pub status: String,
    pub objective: f64,
    pub ipm_iterations: usize,
    pub worst_violation: f64,
}

/// `G = W^-1 Gbar` coefficients, for reading only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectorDoc {
    #[serde(rename = "G")]
    pub g: Vec<Rows>,
    #[serde(rename = "G_pi", default, skip_serializing_if = "Vec::is_empty")]
    pub g_pi: Vec<Rows>,
}

/// Synthesis report. Solve wall times are left out so that reruns are
/// byte-identical apart from the header comment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportDoc {
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub iterations: usize,
    pub maximize_iterations: usize,
    pub r_bound: f64,
    pub lambda_history: Vec<f64>,
    pub trace_history: Vec<f64>,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Rows>,
    pub dims: DimsDoc,
    pub config: ConfigDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sector: Option<SectorDoc>,
    #[serde(rename = "solve", default)]
    pub solves: Vec<SolveDoc>,
}

impl ReportDoc {
    pub fn new(model: &DarModel, result: &SynthesisResult, config: ConfigDoc) -> Result<Self> {
        let cert = result.certificate.as_ref();
        let metrics = match cert {
            Some(c) => ellipsoid_metrics(&c.p).ok().map(|m| MetricsDoc {
                semi_axes: m.semi_axes,
                max_radius: m.max_radius,
                min_radius: m.min_radius,
                log_det_p_inv: m.log_det_p_inv,
                volume: m.volume,
                trace_p: c.trace_p(),
            }),
            None => None,
        };
        let k = match cert {
            Some(c) => c.gain().ok().map(|k| rows_of(k.matrix())),
            None => None,
        };
        let sector = cert.and_then(|c| {
            let scale = |m: &DMatrix<f64>| -> Option<Rows> {
                let mut out = m.clone();
                for i in 0..out.nrows() {
                    let w = c.w[(i, i)];
                    if !(w > 0.0) {
                        return None;
                    }
                    out.row_mut(i).scale_mut(1.0 / w);
                }
                Some(rows_of(&out))
            };
            Some(SectorDoc {
                g: c.gbar.iter().map(scale).collect::<Option<_>>()?,
                g_pi: c.gbar_pi.iter().map(scale).collect::<Option<_>>()?,
            })
        });
        Ok(Self {
            status: result.status.as_str().to_string(),
            message: result.message.clone(),
            iterations: result.iterations,
            maximize_iterations: result.maximize_iterations,
            r_bound: result.r_bound,
            lambda_history: result.lambda_history.clone(),
            trace_history: result.trace_history.clone(),
            k,
            dims: model.dims().into(),
            config,
            metrics,
            certificate: cert.map(CertificateDoc::from_certificate),
            sector,
            solves: result
                .solves
                .iter()
                .map(|s| SolveDoc {
                    stage: s.stage.as_str().to_string(),
                    iteration: s.iteration,
                    status: s.status.as_str().to_string(),
                    objective: s.objective,
                    ipm_iterations: s.ipm_iterations,
                    worst_violation: s.worst_violation,
                })
                .collect(),
        })
    }

    pub fn status(&self) -> Result<SynthesisStatus> {
        SynthesisStatus::parse(&self.status).ok_or_else(|| Error::Parse(format!("unknown status `{}`", self.status)))
    }

    pub fn certificate(&self) -> Result<Certificate> {
        self.certificate
            .as_ref()
            .ok_or_else(|| Error::Parse("report has no [certificate]".into()))?
            .to_certificate((&self.dims).into())
    }

    /// The stored gain, which may differ from `-R^-1 S'` if edited by hand.
    pub fn gain(&self) -> Result<DMatrix<f64>> {
        let k = self.k.as_ref().ok_or_else(|| Error::Parse("report has no K".into()))?;
        matrix_from(k, (self.dims.m, self.dims.p), "K")
    }

    pub fn to_toml(&self, header: &str) -> Result<String> {
        let body = toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))?;
        Ok(format!("{header}{body}"))
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckDoc {
    pub name: String,
    pub samples: usize,
    pub worst_margin: f64,
    pub threshold: f64,
    pub strict: bool,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerificationDoc {
    pub seed: u64,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub settings: BTreeMap<String, f64>,
    #[serde(rename = "check")]
    pub checks: Vec<CheckDoc>,
}

impl VerificationDoc {
    pub fn new(report: &VerificationReport, settings: BTreeMap<String, f64>) -> Self {
        Self {
            seed: report.seed,
            passed: report.passed(),
            settings,
            checks: report.checks.iter().map(CheckDoc::from).collect(),
        }
    }

    pub fn to_toml(&self, header: &str) -> Result<String> {
        let body = toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))?;
        Ok(format!("{header}{body}"))
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

impl From<&CheckResult> for CheckDoc {
    fn from(c: &CheckResult) -> Self {
        Self {
            name: c.name.clone(),
            samples: c.samples,
            worst_margin: c.worst_margin,
            threshold: c.threshold,
            strict: c.strict,
            passed: c.passed,
            note: c.note.clone(),
        }
    }
}
