//! One experiment from config to artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use mfgid_core::{
    diagnostics, fictitious_play, run_bri, run_bri_static_restart, run_eci, run_heci, run_linpara_inversion,
    FicPlayParams, ForwardResult, Grid, InverseResult, Measurement, MfgProblem, SpaceTimeField, SpatialField,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::config::{ExperimentConfig, InitialPotential, Mode};
use crate::output;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Converged,
    NotConverged,
}

/// What a run reports back to the caller; also one row of a batch summary.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub name: String,
    pub mode: Mode,
    pub outcome: Outcome,
    pub status: String,
    pub outer_iters: usize,
    pub hjb_fp_solves: usize,
    pub meas_rel_err: Option<f64>,
    pub q_rel_err: Option<f64>,
    pub seconds: f64,
    pub output_dir: PathBuf,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        match self.outcome {
            Outcome::Converged => 0,
            Outcome::NotConverged => 2,
        }
    }
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    out: PathBuf,
    grid: Grid,
    problem: MfgProblem,
    q_true: Option<SpatialField>,
    timings: Map<String, Value>,
    files: Vec<String>,
    extra: Map<String, Value>,
}

fn timed<T>(timings: &mut Map<String, Value>, phase: &str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let v = f();
    timings.insert(phase.into(), json!(start.elapsed().as_secs_f64()));
    v
}

impl Run<'_> {
    fn path(&mut self, file: &str) -> PathBuf {
        self.files.push(file.to_string());
        self.out.join(file)
    }

    fn forward(&mut self, phase: &str, q: &SpatialField, params: &FicPlayParams) -> anyhow::Result<ForwardResult> {
        let start = SpaceTimeField::static_flow(self.problem.rho0());
        timed(&mut self.timings, phase, || fictitious_play(&self.problem, q, &start, params))
            .with_context(|| format!("forward solve ({phase})"))
    }

    fn truth(&self) -> anyhow::Result<&SpatialField> {
        self.q_true.as_ref().context("the true potential is not configured")
    }

    fn generate(&mut self) -> anyhow::Result<ForwardResult> {
        let q = self.truth()?.clone();
        let fwd = self.forward("generation", &q, &self.cfg.generation.clone())?;
        let grid = self.grid;
        output::write_spatial(&self.path("phi0.csv"), &grid, &[("phi0", Some(&fwd.phi.level(0)))])?;
        output::write_forward_history(&self.path("generation_residual.csv"), &fwd.history)?;
        self.extra.insert(
            "generation".into(),
            json!({
                "iterations": fwd.iterations,
                "residual": fwd.final_residual(),
                "converged": fwd.converged,
                "hjb_fp_solves": fwd.hjb_fp_solves,
            }),
        );
        Ok(fwd)
    }

    fn initial_potential(&mut self) -> SpatialField {
        match self.cfg.initial_potential {
            InitialPotential::Builtin { potential } => potential.sample(&self.grid),
            InitialPotential::Random { low, high } => {
                let (lo_default, hi_default) = match &self.q_true {
                    Some(q) => (q.min(), q.max()),
                    None => (-1.0, 1.0),
                };
                let (lo, hi) = (low.unwrap_or(lo_default), high.unwrap_or(hi_default));
                let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
                let values = (0..self.grid.n_x())
                    .map(|_| if lo < hi { rng.random_range(lo..hi) } else { lo })
                    .collect();
                self.extra.insert("initial_potential_bounds".into(), json!([lo, hi]));
                SpatialField::new(self.grid, values).expect("finite bounds")
            }
        }
    }
}

/// Run one experiment, writing every artifact into `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<RunReport> {
    let start = Instant::now();
    cfg.validate()?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let grid = cfg.grid()?;
    let problem = cfg.build_problem()?;
    let q_true = cfg.true_potential(&grid);
    let mut run = Run {
        cfg,
        out: out.to_path_buf(),
        grid,
        problem,
        q_true,
        timings: Map::new(),
        files: Vec::new(),
        extra: Map::new(),
    };

    let mut report = RunReport {
        name: cfg.name.clone(),
        mode: cfg.mode,
        outcome: Outcome::Converged,
        status: String::new(),
        outer_iters: 0,
        hjb_fp_solves: 0,
        meas_rel_err: None,
        q_rel_err: None,
        seconds: 0.0,
        output_dir: out.to_path_buf(),
    };

    match cfg.mode {
        Mode::Forward => {
            let q = run.truth()?.clone();
            let fwd = run.forward("forward", &q, &cfg.generation)?;
            output::write_space_time(&run.path("rho.csv"), &fwd.rho)?;
            output::write_space_time(&run.path("phi.csv"), &fwd.phi)?;
            output::write_forward_history(&run.path("forward_residual.csv"), &fwd.history)?;
            forward_report(&mut report, &fwd);
        }
        Mode::GenerateMeasurement => {
            let fwd = run.generate()?;
            output::write_space_time(&run.path("rho_truth.csv"), &fwd.rho)?;
            output::write_space_time(&run.path("phi_truth.csv"), &fwd.phi)?;
            forward_report(&mut report, &fwd);
        }
        Mode::Diagnostics => {
            let truth = run.generate()?;
            let q_hat = run.initial_potential();
            let guess = run.forward("estimate_forward", &q_hat, &cfg.generation)?;
            let q = run.truth()?.clone();
            let d = timed(&mut run.timings, "diagnostics", || {
                diagnostics(&run.problem, &q, &q_hat, &truth.phi, &truth.rho_input, &guess.phi, &guess.rho_input)
            })?;
            output::write_diagnostics(&run.path("diagnostics.csv"), &grid, &d)?;
            output::write_spatial(&run.path("q.csv"), &grid, &[("q_hat", Some(&q_hat)), ("q_true", Some(&q))])?;
            report.hjb_fp_solves = truth.hjb_fp_solves + guess.hjb_fp_solves;
            let both = truth.converged && guess.converged;
            report.outcome = if both { Outcome::Converged } else { Outcome::NotConverged };
            report.status = if both { "converged" } else { "forward_not_converged" }.into();
        }
        mode => {
            let (phi0, truth_fwd) = match &cfg.measurement {
                Some(path) => (output::read_measurement(path, &grid)?, None),
                None => {
                    let fwd = run.generate()?;
                    (fwd.phi.level(0), Some(fwd))
                }
            };
            let mut measurement = Measurement::new(phi0)?;
            if let Some(q) = &run.q_true {
                measurement = measurement.with_truth(q.clone())?;
            }
            let q0 = run.initial_potential();
            let problem = &run.problem;
            let solver = &cfg.solver;
            let result = timed(&mut run.timings, "inversion", || match mode {
                Mode::Eci => run_eci(problem, &measurement, &q0, solver),
                Mode::Bri => run_bri(problem, &measurement, &q0, solver),
                Mode::BriStaticRestart => run_bri_static_restart(problem, &measurement, &q0, solver),
                Mode::Heci => run_heci(problem, &measurement, &q0, solver),
                Mode::Linpara => run_linpara_inversion(problem, &measurement, &q0, solver),
                _ => unreachable!("non-inverse modes handled above"),
            })?;
            write_inverse(&mut run, &measurement, &q0, &result)?;
            if let Some(q) = run.q_true.clone() {
                first_update_diagnostics(&mut run, &q, &q0, truth_fwd)?;
            }
            report.outcome = if result.converged() { Outcome::Converged } else { Outcome::NotConverged };
            report.status = serde_json::to_value(result.status)?.as_str().unwrap_or_default().to_string();
            report.outer_iters = result.outer_iterations;
            report.hjb_fp_solves = result.hjb_fp_solves;
            report.meas_rel_err = Some(result.final_meas_rel_err());
            report.q_rel_err = result.final_q_rel_err();
        }
    }

    report.seconds = start.elapsed().as_secs_f64();
    write_meta(&mut run, &report)?;
    Ok(report)
}

fn forward_report(report: &mut RunReport, fwd: &ForwardResult) {
    report.outer_iters = fwd.iterations;
    report.hjb_fp_solves = fwd.hjb_fp_solves;
    report.outcome = if fwd.converged { Outcome::Converged } else { Outcome::NotConverged };
    report.status = if fwd.converged { "converged" } else { "max_iter" }.into();
}

fn write_inverse(run: &mut Run, m: &Measurement, q0: &SpatialField, r: &InverseResult) -> anyhow::Result<()> {
    let grid = run.grid;
    output::write_inverse_history(&run.path("history.csv"), &r.history)?;
    let q_true = run.q_true.clone();
    output::write_spatial(
        &run.path("q.csv"),
        &grid,
        &[("q0", Some(q0)), ("q", Some(&r.q)), ("q_true", q_true.as_ref())],
    )?;
    output::write_spatial(
        &run.path("fit.csv"),
        &grid,
        &[("phi0_measured", Some(&m.phi0)), ("phi0_estimate", Some(&r.phi.level(0)))],
    )?;
    if !r.levels.is_empty() && run.cfg.mode == Mode::Heci {
        output::write_levels(&run.path("levels.csv"), &r.levels)?;
    }
    run.extra.insert("fine_equivalent_cost".into(), json!(r.fine_equivalent_cost));
    Ok(())
}

/// Correction and error indicators of the first update from `q0`.
fn first_update_diagnostics(
    run: &mut Run,
    q_true: &SpatialField,
    q0: &SpatialField,
    truth: Option<ForwardResult>,
) -> anyhow::Result<()> {
    let params = run.cfg.generation;
    let truth = match truth {
        Some(t) => t,
        None => run.forward("truth_forward", q_true, &params)?,
    };
    let guess = run.forward("estimate_forward", q0, &params)?;
    let d = timed(&mut run.timings, "diagnostics", || {
        diagnostics(&run.problem, q_true, q0, &truth.phi, &truth.rho_input, &guess.phi, &guess.rho_input)
    })?;
    let grid = run.grid;
    output::write_diagnostics(&run.path("diagnostics.csv"), &grid, &d)
}

fn write_meta(run: &mut Run, report: &RunReport) -> anyhow::Result<()> {
    let mut files = Map::new();
    for f in &run.files {
        files.insert(f.clone(), json!(output::sha256_file(&run.out.join(f))?));
    }
    let grid = run.grid;
    let meta = json!({
        "name": report.name,
        "mode": report.mode.as_str(),
        "tool": { "name": "mfgid", "version": env!("CARGO_PKG_VERSION") },
        "config": serde_json::to_value(run.cfg)?,
        "resolved": {
            "dx": grid.dx(),
            "dt": grid.dt(),
            "nu_num": run.problem.nu_num(),
            "domain_length": grid.length(),
            "output_dir": run.out.display().to_string(),
            "details": Value::Object(run.extra.clone()),
        },
        "status": report.status,
        "converged": report.outcome == Outcome::Converged,
        "counters": {
            "outer_iterations": report.outer_iters,
            "hjb_fp_solves": report.hjb_fp_solves,
        },
        "final": {
            "meas_rel_err": report.meas_rel_err,
            "q_rel_err": report.q_rel_err,
        },
        "timings_seconds": Value::Object(run.timings.clone()),
        "total_seconds": report.seconds,
        "files_sha256": Value::Object(files),
    });
    output::write_json(&run.out.join("meta.json"), &meta)
}
