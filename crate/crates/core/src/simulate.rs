//! Fixed-step RK4 integration of the saturated closed loop.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::affine::Polytope;
use crate::error::{Error, Result};
use crate::model::{DarModel, GainMatrix};

pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_DIVERGENCE_CAP: f64 = 1e6;

/// Shape of the uncertainty signal `d(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaMode {
    /// `d = 0`.
    Zero,
    /// Constant at vertex `k` of `D`.
    Vertex(usize),
    /// Piecewise constant, redrawn uniformly from `D` every `dwell` seconds.
    Random { dwell: f64 },
    /// Each coordinate oscillates over its full range (boxes) or the
    /// signal sweeps convex combinations of the vertices (general sets).
    Sine { period: f64 },
    /// Visits the vertices of `D` in order, `dwell` seconds each.
    Cycle { dwell: f64 },
}

impl DeltaMode {
    pub const ALL_NAMES: [&'static str; 5] = ["zero", "vertex", "random", "sine", "cycle"];
}

impl fmt::Display for DeltaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "zero"),
            Self::Vertex(k) => write!(f, "vertex:{k}"),
            Self::Random { dwell } => write!(f, "random:{dwell}"),
            Self::Sine { period } => write!(f, "sine:{period}"),
            Self::Cycle { dwell } => write!(f, "cycle:{dwell}"),
        }
    }
}

impl FromStr for DeltaMode {
    type Err = Error;

    /// `zero`, `vertex[:k]`, `random[:dwell]`, `sine[:period]`,
    /// `cycle[:dwell]`; the long names `constant-vertex`, `piecewise-random`,
    /// `sinusoid` and `vertex-cycling` are accepted too.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let num = |default: f64| -> Result<f64> {
            match arg {
                None => Ok(default),
                Some(a) => a
                    .parse::<f64>()
                    .ok()
                    .filter(|v| *v > 0.0 && v.is_finite())
                    .ok_or_else(|| Error::InvalidInput(format!("bad delta-mode parameter in `{s}`"))),
            }
        };
        match name {
            "zero" => Ok(Self::Zero),
            "vertex" | "constant-vertex" => {
                let k = match arg {
                    None => 0,
                    Some(a) => a
                        .parse()
                        .map_err(|_| Error::InvalidInput(format!("bad vertex index in `{s}`")))?,
                };
                Ok(Self::Vertex(k))
            }
            "random" | "piecewise-random" => Ok(Self::Random { dwell: num(1.0)? }),
            "sine" | "sinusoid" => Ok(Self::Sine { period: num(5.0)? }),
            "cycle" | "vertex-cycling" => Ok(Self::Cycle { dwell: num(1.0)? }),
            _ => Err(Error::InvalidInput(format!(
                "unknown delta-mode `{s}` (expected one of {})",
                DeltaMode::ALL_NAMES.join(", ")
            ))),
        }
    }
}

/// A concrete signal `d(t)` inside `D`.
#[derive(Debug, Clone)]
pub struct DeltaSignal {
    mode: DeltaMode,
    vertices: Vec<Vec<f64>>,
    set: Polytope,
    seed: u64,
}

impl DeltaSignal {
    pub fn new(mode: DeltaMode, set: &Polytope, seed: u64) -> Result<Self> {
        let vertices: Vec<Vec<f64>> = set.vertices().iter().map(|v| v.iter().copied().collect()).collect();
        if let DeltaMode::Vertex(k) = mode {
            if k >= vertices.len() {
                return Err(Error::InvalidInput(format!(
                    "vertex index {k} out of range (D has {} vertices)",
                    vertices.len()
                )));
            }
        }
        Ok(Self {
            mode,
            vertices,
            set: set.clone(),
            seed,
        })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            mode: DeltaMode::Zero,
            vertices: vec![vec![0.0; dim]],
            set: Polytope::boxed(vec![1.0; dim]).expect("unit box"),
            seed: 0,
        }
    }

    pub fn mode(&self) -> DeltaMode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.set.dim()
    }

    pub fn at(&self, t: f64) -> Vec<f64> {
        let dim = self.dim();
        if dim == 0 {
            return Vec::new();
        }
        match self.mode {
            DeltaMode::Zero => vec![0.0; dim],
            DeltaMode::Vertex(k) => self.vertices[k].clone(),
            DeltaMode::Random { dwell } => {
                let segment = (t / dwell).floor().max(0.0) as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ segment.wrapping_mul(0x9E37_79B9_7F4A_7C15));
                self.set.sample(&mut rng)
            }
            DeltaMode::Sine { period } => match self.set.as_box() {
                Some(b) => b
                    .bounds()
                    .iter()
                    .enumerate()
                    .map(|(j, bj)| bj * (TAU * t / period * (1.0 + 0.37 * j as f64)).sin())
                    .collect(),
                None => {
                    let nv = self.vertices.len();
                    let weights: Vec<f64> = (0..nv)
                        .map(|k| 1.0 + (TAU * t / period + TAU * k as f64 / nv as f64).sin())
                        .collect();
                    let total: f64 = weights.iter().sum();
                    let mut out = vec![0.0; dim];
                    for (w, v) in weights.iter().zip(&self.vertices) {
                        for (o, vi) in out.iter_mut().zip(v) {
                            *o += w / total * vi;
                        }
                    }
                    out
                }
            },
            DeltaMode::Cycle { dwell } => {
                let k = (t / dwell).floor().max(0.0) as usize % self.vertices.len();
                self.vertices[k].clone()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub t_final: f64,
    pub step: f64,
    pub divergence_cap: f64,
    /// Keep every `record_every`-th step; `0` keeps only the endpoints.
    pub record_every: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            t_final: 50.0,
            step: DEFAULT_STEP,
            divergence_cap: DEFAULT_DIVERGENCE_CAP,
            record_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Completed,
    Diverged { t: f64, norm: f64 },
    /// The algebraic constraint could not be solved along the trajectory.
    IllPosed { t: f64, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub v: DVector<f64>,
    pub u: DVector<f64>,
    pub delta: Vec<f64>,
    /// `|v_i| > u_bar_i`
    pub saturated: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub final_time: f64,
    pub final_state: DVector<f64>,
    pub termination: Termination,
    /// Number of recorded samples with at least one channel saturated.
    pub saturated_samples: usize,
    pub max_norm: f64,
}

impl Trajectory {
    pub fn converged(&self, tol: f64) -> bool {
        self.termination == Termination::Completed && self.final_state.norm() <= tol
    }
}

pub fn simulate(
    model: &DarModel,
    k: &GainMatrix,
    x0: &[f64],
    delta: &DeltaSignal,
    opts: &SimOptions,
) -> Result<Trajectory> {
    let dims = model.dims();
    if x0.len() != dims.n {
        return Err(Error::Dimension(format!("x0 has length {}, expected {}", x0.len(), dims.n)));
    }
    if !x0.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("x0 must be finite".into()));
    }
    if k.matrix().shape() != (dims.m, dims.p) {
        return Err(Error::Dimension(format!(
            "gain is {:?}, expected {}x{}",
            k.matrix().shape(),
            dims.m,
            dims.p
        )));
    }
    if delta.dim() != dims.l {
        return Err(Error::Dimension(format!(
            "delta signal has dimension {}, expected {}",
            delta.dim(),
            dims.l
        )));
    }
    if !(opts.step > 0.0 && opts.step.is_finite()) || !(opts.t_final >= 0.0 && opts.t_final.is_finite()) {
        return Err(Error::InvalidInput("step must be positive and t_final nonnegative".into()));
    }
    let km = k.matrix();
    let u_bar = model.u_bar().clone();
    let steps = (opts.t_final / opts.step).round() as usize;
    let h = opts.step;
    let mut x = DVector::from_column_slice(x0);
    let mut traj = Trajectory {
        samples: Vec::new(),
        final_time: 0.0,
        final_state: x.clone(),
        termination: Termination::Completed,
        saturated_samples: 0,
        max_norm: x.norm(),
    };
    let f = |x: &DVector<f64>, d: &[f64]| -> Result<DVector<f64>> {
        Ok(model.closed_loop_unchecked(km, x.as_slice(), d)?.xdot)
    };
    let record = |traj: &mut Trajectory, t: f64, x: &DVector<f64>, d: Vec<f64>| -> Result<()> {
        let pt = model.closed_loop_unchecked(km, x.as_slice(), &d)?;
        let saturated: Vec<bool> = pt.v.iter().zip(u_bar.iter()).map(|(v, u)| v.abs() > *u).collect();
        if saturated.iter().any(|s| *s) {
            traj.saturated_samples += 1;
        }
        traj.samples.push(Sample {
            t,
            x: x.clone(),
            y: pt.y,
            v: pt.v,
            u: pt.u,
            delta: d,
            saturated,
        });
        Ok(())
    };
    if let Err(e) = record(&mut traj, 0.0, &x, delta.at(0.0)) {
        traj.termination = Termination::IllPosed { t: 0.0, reason: e.to_string() };
        return Ok(traj);
    }
    for i in 0..steps {
        let t = i as f64 * h;
        let d0 = delta.at(t);
        let dm = delta.at(t + 0.5 * h);
        let d1 = delta.at(t + h);
        let step = (|| -> Result<DVector<f64>> {
            let k1 = f(&x, &d0)?;
            let k2 = f(&(&x + &k1 * (0.5 * h)), &dm)?;
            let k3 = f(&(&x + &k2 * (0.5 * h)), &dm)?;
            let k4 = f(&(&x + &k3 * h), &d1)?;
            Ok(&x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
        })();
        let t_next = (i + 1) as f64 * h;
        match step {
            Ok(next) => x = next,
            Err(e) => {
                traj.termination = Termination::IllPosed { t, reason: e.to_string() };
                traj.final_time = t;
                traj.final_state = x;
                return Ok(traj);
            }
        }
        let norm = x.norm();
        traj.max_norm = traj.max_norm.max(norm);
        if !(norm <= opts.divergence_cap) {
            traj.termination = Termination::Diverged { t: t_next, norm };
            traj.final_time = t_next;
            traj.final_state = x;
            return Ok(traj);
        }
        let last = i + 1 == steps;
        if last || (opts.record_every > 0 && (i + 1) % opts.record_every == 0) {
            if let Err(e) = record(&mut traj, t_next, &x, delta.at(t_next)) {
                traj.termination = Termination::IllPosed { t: t_next, reason: e.to_string() };
                traj.final_time = t_next;
                traj.final_state = x;
                return Ok(traj);
            }
        }
    }
    traj.final_time = steps as f64 * h;
    traj.final_state = x;
    Ok(traj)
}

/// Points on the boundary of `{x : x' P x = level}` along directions `dirs`.
pub fn ellipsoid_boundary_points(p: &DMatrix<f64>, dirs: &[DVector<f64>], level: f64) -> Vec<DVector<f64>> {
    dirs.iter()
        .filter_map(|d| {
            let q = d.dot(&(p * d));
            (q > 0.0).then(|| d * (level / q).sqrt())
        })
        .collect()
}

/// Draws `count` random directions (standard normal) with `rng`.
pub fn random_directions<R: Rng + ?Sized>(rng: &mut R, n: usize, count: usize) -> Vec<DVector<f64>> {
    use rand_distr::{Distribution, StandardNormal};
    (0..count)
        .map(|_| DVector::from_fn(n, |_, _| StandardNormal.sample(rng)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::example1;

    fn gain(k: f64) -> GainMatrix {
        GainMatrix::new(DMatrix::from_element(1, 1, k)).unwrap()
    }

    #[test]
    fn origin_stays_at_origin() {
        let model = example1();
        let opts = SimOptions { t_final: 1.0, ..SimOptions::default() };
        let traj = simulate(&model, &gain(0.3785), &[0.0, 0.0], &DeltaSignal::zero(0), &opts).unwrap();
        assert!(traj.samples.iter().all(|s| s.x.amax() == 0.0));
        assert_eq!(traj.termination, Termination::Completed);
    }

    #[test]
    fn reported_gain_stabilizes_example1() {
        let model = example1();
        let opts = SimOptions { record_every: 0, ..SimOptions::default() };
        let traj = simulate(&model, &gain(0.3785), &[0.6, 0.6], &DeltaSignal::zero(0), &opts).unwrap();
        assert!(traj.converged(1e-3), "{:?}", traj.final_state);
        assert!(traj.saturated_samples <= traj.samples.len());
    }

    #[test]
    fn wrong_sign_gain_diverges() {
        let model = example1();
        let opts = SimOptions { record_every: 0, ..SimOptions::default() };
        let traj = simulate(&model, &gain(-5.0), &[0.6, 0.6], &DeltaSignal::zero(0), &opts).unwrap();
        assert!(matches!(traj.termination, Termination::Diverged { .. }), "{:?}", traj.termination);
    }

    #[test]
    fn delta_modes_parse() {
        assert_eq!("zero".parse::<DeltaMode>().unwrap(), DeltaMode::Zero);
        assert_eq!("vertex:3".parse::<DeltaMode>().unwrap(), DeltaMode::Vertex(3));
        assert_eq!("vertex-cycling".parse::<DeltaMode>().unwrap(), DeltaMode::Cycle { dwell: 1.0 });
        assert_eq!("random:0.5".parse::<DeltaMode>().unwrap(), DeltaMode::Random { dwell: 0.5 });
        assert!("random:-1".parse::<DeltaMode>().is_err());
        assert!("bogus".parse::<DeltaMode>().is_err());
    }

    #[test]
    fn signals_stay_inside_the_set() {
        let set = Polytope::boxed(vec![0.8, 0.3]).unwrap();
        for mode in [
            DeltaMode::Vertex(2),
            DeltaMode::Random { dwell: 0.7 },
            DeltaMode::Sine { period: 3.0 },
            DeltaMode::Cycle { dwell: 0.5 },
        ] {
            let sig = DeltaSignal::new(mode, &set, 11).unwrap();
            for i in 0..200 {
                let t = i as f64 * 0.13;
                assert!(set.contains(&sig.at(t), 1e-12), "{mode}");
                assert_eq!(sig.at(t), sig.at(t));
            }
        }
        assert!(DeltaSignal::new(DeltaMode::Vertex(4), &set, 0).is_err());
    }

    #[test]
    fn empty_uncertainty_accepts_every_mode() {
        let set = Polytope::boxed(vec![]).unwrap();
        let sig = DeltaSignal::new(DeltaMode::Cycle { dwell: 1.0 }, &set, 0).unwrap();
        assert!(sig.at(3.3).is_empty());
    }

    #[test]
    fn boundary_points_lie_on_the_level_set() {
        let p = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for x in ellipsoid_boundary_points(&p, &random_directions(&mut rng, 2, 50), 1.0) {
            assert!((x.dot(&(&p * &x)) - 1.0).abs() < 1e-12);
        }
    }
}
