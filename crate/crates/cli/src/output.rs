use std::f64::consts::TAU;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use nalgebra::{DMatrix, DVector};

use sofsat_core::simulate::{ellipsoid_boundary_points, Trajectory};

use crate::Failure;

/// Comment lines placed above every generated document. The timestamp is
/// the only part that changes between identical runs.
pub fn header(command: &str) -> String {
    format!(
        "# sofsat {command} {}\n# generated {}\n",
        env!("CARGO_PKG_VERSION"),
        Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true)
    )
}

pub fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Input(format!("{}: {e}", path.display()))
}

/// Writes to `path`, or stdout when absent.
pub fn emit(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| io_failure(p, e)),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Input(format!("stdout: {e}"))),
    }
}

fn to_failure(e: csv::Error) -> Failure {
    Failure::Input(format!("writing CSV: {e}"))
}

/// `t, x.., y.., v.., sat_v.., V` with one header row.
pub fn write_series<W: Write>(out: W, traj: &Trajectory, p: &DMatrix<f64>) -> Result<(), Failure> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = traj.samples.first() else {
        return Ok(());
    };
    fn names(prefix: &'static str, len: usize) -> impl Iterator<Item = String> {
        (1..=len).map(move |i| format!("{prefix}{i}"))
    }
    let mut head = vec!["t".to_string()];
    head.extend(names("x", first.x.len()));
    head.extend(names("y", first.y.len()));
    head.extend(names("v", first.v.len()));
    head.extend(names("sat_v", first.u.len()));
    head.push("V".into());
    w.write_record(&head).map_err(to_failure)?;
    for s in &traj.samples {
        let lyap = s.x.dot(&(p * &s.x));
        let row = std::iter::once(s.t)
            .chain(s.x.iter().copied())
            .chain(s.y.iter().copied())
            .chain(s.v.iter().copied())
            .chain(s.u.iter().copied())
            .chain(std::iter::once(lyap));
        w.write_record(row.map(|v| v.to_string())).map_err(to_failure)?;
    }
    w.flush().map_err(|e| Failure::Input(format!("writing CSV: {e}")))
}

/// Closed polyline of `{x : x' P x = 1}` for `n = 2`.
pub fn write_ellipse<W: Write>(out: W, p: &DMatrix<f64>, points: usize) -> Result<(), Failure> {
    let dirs: Vec<DVector<f64>> = (0..=points)
        .map(|k| {
            let a = TAU * k as f64 / points as f64;
            DVector::from_vec(vec![a.cos(), a.sin()])
        })
        .collect();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x1", "x2"]).map_err(to_failure)?;
    for x in ellipsoid_boundary_points(p, &dirs, 1.0) {
        w.write_record([x[0].to_string(), x[1].to_string()]).map_err(to_failure)?;
    }
    w.flush().map_err(|e| Failure::Input(format!("writing CSV: {e}")))
}

/// `traj.csv` -> `traj.ellipse.csv`.
pub fn ellipse_path(series: &Path) -> PathBuf {
    let stem = series.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    series.with_file_name(format!("{stem}.ellipse.csv"))
}
