use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sofsat_core::files::{parse_model, ConfigDoc, DimsDoc, ReportDoc, VerificationDoc};
use sofsat_core::model::{WellPosednessReport, DEFAULT_CONDITION_CAP};
use sofsat_core::simulate::{simulate as run_simulation, DeltaMode, DeltaSignal, SimOptions, Termination};
use sofsat_core::synthesis::{synthesize, Certificate, SynthesisOptions, SynthesisStatus};
use sofsat_core::verifier::{verify_with_gain, VerifyOptions};
use sofsat_core::{DarModel, Error, GainMatrix};

use crate::output::{ellipse_path, emit, header, io_failure, write_ellipse, write_series};
use crate::{CheckArgs, Failure, SimulateArgs, SynthArgs, VerifyArgs};

/// Largest accepted oracle residual in `check`.
const RESIDUAL_TOL: f64 = 1e-8;

fn core_failure(context: &str, e: Error) -> Failure {
    let msg = format!("{context}: {e}");
    match e {
        Error::WellPosedness { .. } => Failure::Rejected(msg),
        Error::Sdp(_) => Failure::Solver(msg),
        Error::Dimension(_) | Error::InvalidInput(_) | Error::Parse(_) | Error::Io(_) => Failure::Input(msg),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| io_failure(path, e))
}

fn load_model(path: &Path) -> Result<DarModel, Failure> {
    parse_model(&read(path)?).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

/// A report together with its certificate and stored gain, checked against
/// the model dimensions.
fn load_report(path: &Path, model: &DarModel) -> Result<(Certificate, GainMatrix), Failure> {
    let at = |e: Error| Failure::Input(format!("{}: {e}", path.display()));
    let doc = ReportDoc::parse(&read(path)?).map_err(at)?;
    let expected = DimsDoc::from(model.dims());
    if doc.dims != expected {
        return Err(Failure::Input(format!(
            "{}: report dims {:?} do not match the model dims {:?}",
            path.display(),
            doc.dims,
            expected
        )));
    }
    let cert = doc.certificate().map_err(at)?;
    let k = doc.gain().and_then(GainMatrix::new).map_err(at)?;
    Ok((cert, k))
}

fn first_failure(wp: &WellPosednessReport) -> String {
    let more = wp.failures.len().saturating_sub(1);
    let first = wp.failures.first().map(String::as_str).unwrap_or("");
    if more > 0 {
        format!("{first} (and {more} more)")
    } else {
        first.to_string()
    }
}

pub fn check(a: &CheckArgs) -> Result<(), Failure> {
    let model = load_model(&a.model)?;
    let d = model.dims();
    println!(
        "model: n = {}, n_pi = {}, n_pi_x = {}, m = {}, p = {}, l = {}",
        d.n, d.n_pi, d.n_pi_x, d.m, d.p, d.l
    );
    let wp = model.check_well_posedness(a.grid, DEFAULT_CONDITION_CAP);
    if !wp.passed() {
        println!("well-posedness: FAIL ({} of {} points)", wp.failures.len(), wp.points_checked);
        for f in &wp.failures {
            println!("  {f}");
        }
        return Err(Failure::Rejected(format!("not well posed: {}", first_failure(&wp))));
    }
    println!(
        "well-posedness: PASS ({} points, worst condition {:.3e})",
        wp.points_checked, wp.worst_condition
    );
    if model.pi_oracle().is_none() {
        println!("residual: skipped (no pi_oracle)");
        return Ok(());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let samples: Vec<_> = (0..a.samples)
        .map(|_| {
            let x = model.x_set().sample(&mut rng);
            let delta = if d.l == 0 { Vec::new() } else { model.d_set().sample(&mut rng) };
            let u = model.u_bar().iter().map(|ub| rng.random_range(-ub..=*ub)).collect();
            (x, delta, u)
        })
        .collect();
    let res = model.residual_check(&samples).map_err(|e| core_failure("residual check", e))?;
    let worst = res.max_residual();
    let verdict = if worst <= RESIDUAL_TOL { "PASS" } else { "FAIL" };
    println!(
        "residual: {verdict} ({} samples, constraint {:.3e}, pi mismatch {:.3e}, tol {RESIDUAL_TOL:e})",
        res.samples, res.max_constraint_residual, res.max_pi_mismatch
    );
    if worst <= RESIDUAL_TOL {
        Ok(())
    } else {
        Err(Failure::Rejected(format!("DAR disagrees with pi_oracle (max residual {worst:.3e})")))
    }
}

pub fn synth(a: &SynthArgs) -> Result<(), Failure> {
    if !(a.gamma >= 0.0 && a.gamma.is_finite()) {
        return Err(Failure::Input(format!("--gamma must be a nonnegative number, got {}", a.gamma)));
    }
    let model = load_model(&a.model)?;
    let wp = model.check_well_posedness(sofsat_core::model::DEFAULT_GRID_PER_AXIS, DEFAULT_CONDITION_CAP);
    if !wp.passed() {
        return Err(Failure::Rejected(format!("not well posed: {}", first_failure(&wp))));
    }
    let opts = SynthesisOptions::default();
    let result = synthesize(&model, a.imax, a.gamma, !a.skip_maximize, &opts).map_err(|e| core_failure("synthesis", e))?;
    let config = ConfigDoc {
        i_max: a.imax,
        gamma: a.gamma,
        skip_maximize: a.skip_maximize,
        solver_gap_tol: opts.solver.gap_tol,
        solver_feas_tol: opts.solver.feas_tol,
    };
    let doc = ReportDoc::new(&model, &result, config).map_err(|e| core_failure("report", e))?;
    let text = doc.to_toml(&header("synth")).map_err(|e| core_failure("report", e))?;
    emit(a.out.as_deref(), &text)?;

    eprintln!(
        "status: {} ({} feasibility + {} maximization iterations)",
        result.status, result.iterations, result.maximize_iterations
    );
    if let Some(k) = &doc.k {
        eprintln!("K = {k:?}");
    }
    if let Some(m) = &doc.metrics {
        eprintln!("semi-axes = {:?}", m.semi_axes);
    }
    let why = || {
        result
            .message
            .clone()
            .unwrap_or_else(|| format!("{} after i_max = {} iterations", result.status, a.imax))
    };
    match result.status {
        SynthesisStatus::Success => Ok(()),
        SynthesisStatus::IterationLimit => Err(Failure::IterationLimit(why())),
        SynthesisStatus::SolverFailure => Err(Failure::Solver(why())),
    }
}

pub fn verify(a: &VerifyArgs) -> Result<(), Failure> {
    let model = load_model(&a.model)?;
    let (cert, k) = load_report(&a.report, &model)?;
    let delta_modes = match &a.delta_mode {
        Some(s) => vec![s.parse::<DeltaMode>().map_err(|e| Failure::Input(format!("--delta-mode: {e}")))?],
        None => Vec::new(),
    };
    let defaults = VerifyOptions::default();
    let opts = VerifyOptions {
        seed: a.seed,
        boundary_samples: a.samples,
        interior_samples: a.samples,
        trajectories: a.trajectories,
        sim: SimOptions {
            t_final: a.tfinal,
            step: a.step,
            ..defaults.sim
        },
        delta_modes,
        ..defaults
    };
    if !(a.step > 0.0 && a.tfinal >= 0.0) {
        return Err(Failure::Input("--step must be positive and --tfinal nonnegative".into()));
    }
    let report = verify_with_gain(&model, &cert, &k, &opts).map_err(|e| core_failure("verification", e))?;
    for c in &report.checks {
        let verdict = if c.passed { "PASS" } else { "FAIL" };
        let cmp = if c.strict { ">" } else { ">=" };
        println!(
            "{verdict} {:<20} margin {:>11.4e} {cmp} {:.1e} ({} samples)",
            c.name, c.worst_margin, c.threshold, c.samples
        );
        if let Some(note) = &c.note {
            println!("     {note}");
        }
    }
    if let Some(out) = &a.out {
        let settings = BTreeMap::from([
            ("samples".to_string(), a.samples as f64),
            ("trajectories".to_string(), a.trajectories as f64),
            ("step".to_string(), a.step),
            ("t_final".to_string(), a.tfinal),
        ]);
        let doc = VerificationDoc::new(&report, settings);
        let text = doc.to_toml(&header("verify")).map_err(|e| core_failure("verification document", e))?;
        emit(Some(out), &text)?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Rejected(format!("failed checks: {}", report.failures().join(", "))))
    }
}

pub fn simulate(a: &SimulateArgs) -> Result<(), Failure> {
    let model = load_model(&a.model)?;
    let (cert, k) = load_report(&a.report, &model)?;
    let d = model.dims();
    if a.x0.len() != d.n {
        return Err(Failure::Input(format!("--x0 has {} entries, the model has n = {}", a.x0.len(), d.n)));
    }
    if !(a.step > 0.0 && a.tfinal >= 0.0) {
        return Err(Failure::Input("--step must be positive and --tfinal nonnegative".into()));
    }
    let mode = a
        .delta_mode
        .parse::<DeltaMode>()
        .map_err(|e| Failure::Input(format!("--delta-mode: {e}")))?;
    // Without uncertainty every mode is the empty signal.
    let signal = if d.l == 0 {
        DeltaSignal::zero(0)
    } else {
        DeltaSignal::new(mode, model.d_set(), a.seed).map_err(|e| core_failure("--delta-mode", e))?
    };
    let sim = SimOptions {
        t_final: a.tfinal,
        step: a.step,
        record_every: a.every.max(1),
        ..SimOptions::default()
    };
    let traj = run_simulation(&model, &k, &a.x0, &signal, &sim).map_err(|e| core_failure("simulation", e))?;
    match &a.out {
        Some(path) => {
            let file = fs::File::create(path).map_err(|e| io_failure(path, e))?;
            write_series(io::BufWriter::new(file), &traj, &cert.p)?;
        }
        None => write_series(io::stdout().lock(), &traj, &cert.p)?,
    }
    let ellipse = a.ellipse.clone().or_else(|| a.out.as_deref().map(ellipse_path));
    if let (2, Some(path)) = (d.n, ellipse) {
        let file = fs::File::create(&path).map_err(|e| io_failure(&path, e))?;
        write_ellipse(io::BufWriter::new(file), &cert.p, 256)?;
    }
    match &traj.termination {
        Termination::Completed => eprintln!(
            "t = {}: |x| = {:.3e}, {} of {} samples saturated",
            traj.final_time,
            traj.final_state.norm(),
            traj.saturated_samples,
            traj.samples.len()
        ),
        other => eprintln!("stopped early: {other:?}"),
    }
    Ok(())
}
