//! The outer loop shared by ECI, BRI and their variants.

use crate::error::{MfgError, Result};
use crate::forward::{fictitious_play, fictitious_play_steps, FicPlayParams, ForwardResult, WeightSchedule};
use crate::grid::{SpaceTimeField, SpatialField};
use crate::model::MfgProblem;
use crate::pde::{solve_fp, solve_hjb, NewtonParams};

use super::{
    measurement_term, Clock, InverseConfig, InverseResult, InverseStatus, IterationRecord, LevelSummary,
    Measurement,
};

/// How the forward problem is approximated at each outer iteration.
#[derive(Debug, Clone, Copy)]
pub(crate) enum ForwardStep {
    /// Fictitious play to its tolerance.
    Converged(FicPlayParams),
    /// A fixed number of fictitious-play steps.
    Steps {
        n: usize,
        schedule: WeightSchedule,
        newton: NewtonParams,
    },
    /// A single HJB solve (and the FP solve it drives); exact when the
    /// interaction cost is absent.
    Decoupled(NewtonParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum WarmStart {
    /// Start each forward solve from the previous output flow.
    Previous,
    /// Always start from the static flow of the initial density.
    Static,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum StopRule {
    /// Measurement relative error at or below the tolerance.
    Measurement(f64),
    /// Update size `||q_new - q|| / scale` at or below the tolerance, or the
    /// measurement test.
    UpdateSize { tol: f64, scale: f64, meas_tol: f64 },
}

pub(crate) struct LoopSpec {
    pub forward: ForwardStep,
    pub warm: WarmStart,
    pub stop: StopRule,
    pub outer_max: usize,
    pub divergence_threshold: f64,
    pub abort_on_forward_failure: bool,
    /// Weight of one solve relative to a solve on the finest grid.
    pub cost_weight: f64,
    pub level: usize,
    pub k_offset: usize,
    pub solves_offset: usize,
    pub cost_offset: f64,
    pub clock_offset: f64,
}

impl LoopSpec {
    pub(crate) fn plain(forward: ForwardStep, warm: WarmStart, cfg: &InverseConfig) -> Self {
        Self {
            forward,
            warm,
            stop: StopRule::Measurement(cfg.outer_tol),
            outer_max: cfg.outer_max,
            divergence_threshold: cfg.divergence_threshold,
            abort_on_forward_failure: cfg.abort_on_forward_failure,
            cost_weight: 1.0,
            level: 1,
            k_offset: 0,
            solves_offset: 0,
            cost_offset: 0.0,
            clock_offset: 0.0,
        }
    }
}

fn forward_solve(
    problem: &MfgProblem,
    q: &SpatialField,
    rho_init: &SpaceTimeField,
    step: &ForwardStep,
) -> Result<ForwardResult> {
    match step {
        ForwardStep::Converged(params) => fictitious_play(problem, q, rho_init, params),
        ForwardStep::Steps { n, schedule, newton } => {
            fictitious_play_steps(problem, q, rho_init, schedule, newton, *n)
        }
        ForwardStep::Decoupled(newton) => {
            let phi = solve_hjb(problem, q, rho_init, newton)?;
            let rho = solve_fp(problem, &phi, problem.rho0())?;
            Ok(ForwardResult {
                rho,
                phi,
                rho_input: rho_init.clone(),
                history: Vec::new(),
                iterations: 1,
                hjb_fp_solves: 1,
                converged: true,
            })
        }
    }
}

/// Run outer iterations `q <- update(q, forward(q))` from `q0`.
///
/// The update closure receives the current potential and the forward
/// solution it produced.
pub(crate) fn outer_loop(
    problem: &MfgProblem,
    measurement: &Measurement,
    q0: &SpatialField,
    rho_init: SpaceTimeField,
    spec: &LoopSpec,
    update: &mut dyn FnMut(&SpatialField, &ForwardResult) -> Result<SpatialField>,
) -> Result<InverseResult> {
    let grid = *problem.grid();
    q0.grid().ensure_same(&grid, "initial potential")?;
    measurement.grid().ensure_same(&grid, "measurement")?;
    rho_init.grid().ensure_same(&grid, "initial density flow")?;

    let clock = Clock::new(spec.clock_offset);
    let static_flow = SpaceTimeField::static_flow(problem.rho0());
    let mut q = q0.clone();
    let mut warm = rho_init;
    let mut history = Vec::new();
    let mut solves = spec.solves_offset;
    let mut cost = spec.cost_offset;
    let mut k = 0;
    loop {
        let fwd = forward_solve(problem, &q, &warm, &spec.forward)?;
        solves += fwd.hjb_fp_solves;
        cost += fwd.hjb_fp_solves as f64 * spec.cost_weight;
        if !fwd.converged && spec.abort_on_forward_failure {
            return Err(MfgError::ForwardSolverFailed {
                outer: k,
                residual: fwd.final_residual(),
            });
        }
        let phi0_k = fwd.phi.level(0);
        let meas = measurement.rel_err(&phi0_k);
        history.push(IterationRecord {
            k: spec.k_offset + k,
            meas_rel_err: meas,
            q_rel_err: measurement.q_rel_err(&q),
            forward_residual: fwd.history.last().map_or(0.0, |r| r.residual),
            forward_converged: fwd.converged,
            hjb_fp_solves_cum: solves,
            fine_equivalent_cost: cost,
            elapsed_seconds: clock.elapsed(),
            level: spec.level,
        });

        let meas_tol = match spec.stop {
            StopRule::Measurement(t) => t,
            StopRule::UpdateSize { meas_tol, .. } => meas_tol,
        };
        let status = if !meas.is_finite() || meas > spec.divergence_threshold {
            Some(InverseStatus::Diverged)
        } else if meas <= meas_tol {
            Some(InverseStatus::Converged)
        } else if k >= spec.outer_max {
            Some(InverseStatus::MaxIter)
        } else {
            None
        };
        if let Some(status) = status {
            return Ok(finish(q, fwd, history, status, k, solves, cost));
        }

        let q_next = update(&q, &fwd)?;
        k += 1;
        warm = match spec.warm {
            WarmStart::Previous => fwd.rho.clone(),
            WarmStart::Static => static_flow.clone(),
        };
        if let StopRule::UpdateSize { tol, scale, .. } = spec.stop {
            if q_next.sub(&q).norm() <= tol * scale {
                return Ok(finish(q_next, fwd, history, InverseStatus::Converged, k, solves, cost));
            }
        }
        q = q_next;
    }
}

fn finish(
    q: SpatialField,
    fwd: ForwardResult,
    history: Vec<IterationRecord>,
    status: InverseStatus,
    updates: usize,
    solves: usize,
    cost: f64,
) -> InverseResult {
    let last = history.last().copied();
    let grid = *q.grid();
    InverseResult {
        q,
        rho: fwd.rho,
        phi: fwd.phi,
        status,
        outer_iterations: updates,
        hjb_fp_solves: solves,
        fine_equivalent_cost: cost,
        levels: vec![LevelSummary {
            level: last.map_or(1, |r| r.level),
            n_x: grid.n_x(),
            n_t: grid.n_t(),
            outer_iterations: updates,
            hjb_fp_solves: solves,
            fine_equivalent_cost: cost,
            meas_rel_err: last.map_or(f64::NAN, |r| r.meas_rel_err),
            q_rel_err: last.and_then(|r| r.q_rel_err),
            elapsed_seconds: last.map_or(0.0, |r| r.elapsed_seconds),
        }],
        history,
    }
}

/// The standard correction `q + M(target) - M(phi0_k)` with the target term
/// computed once.
pub(crate) fn correction_update(
    problem: &MfgProblem,
    target: SpatialField,
) -> impl FnMut(&SpatialField, &ForwardResult) -> Result<SpatialField> + '_ {
    move |q, fwd| Ok(q.add(&target.sub(&measurement_term(&fwd.phi.level(0), problem))))
}

fn check(problem: &MfgProblem, measurement: &Measurement, q0: &SpatialField, cfg: &InverseConfig) -> Result<()> {
    cfg.validate()?;
    measurement.grid().ensure_same(problem.grid(), "measurement")?;
    q0.grid().ensure_same(problem.grid(), "initial potential")
}

/// Equilibrium correction iteration: every outer step solves the forward
/// problem to `cfg.forward.tol`, warm-started from the previous flow.
pub fn run_eci(
    problem: &MfgProblem,
    measurement: &Measurement,
    q0: &SpatialField,
    cfg: &InverseConfig,
) -> Result<InverseResult> {
    check(problem, measurement, q0, cfg)?;
    let spec = LoopSpec::plain(ForwardStep::Converged(cfg.forward), WarmStart::Previous, cfg);
    let target = measurement_term(&measurement.phi0, problem);
    let rho_init = SpaceTimeField::static_flow(problem.rho0());
    outer_loop(problem, measurement, q0, rho_init, &spec, &mut correction_update(problem, target))
}

fn bri_step(cfg: &InverseConfig) -> ForwardStep {
    ForwardStep::Steps {
        n: cfg.bri_inner_n,
        schedule: WeightSchedule::Fixed { delta: cfg.bri_delta },
        newton: cfg.forward.newton,
    }
}

/// Best response iteration: `cfg.bri_inner_n` fictitious-play steps with
/// weight `cfg.bri_delta` per outer step, warm-started from the previous flow.
pub fn run_bri(
    problem: &MfgProblem,
    measurement: &Measurement,
    q0: &SpatialField,
    cfg: &InverseConfig,
) -> Result<InverseResult> {
    check(problem, measurement, q0, cfg)?;
    let spec = LoopSpec::plain(bri_step(cfg), WarmStart::Previous, cfg);
    let target = measurement_term(&measurement.phi0, problem);
    let rho_init = SpaceTimeField::static_flow(problem.rho0());
    outer_loop(problem, measurement, q0, rho_init, &spec, &mut correction_update(problem, target))
}

/// [`run_bri`] with every inner loop restarted from the static flow of the
/// initial density. Kept to exhibit why the warm start matters.
pub fn run_bri_static_restart(
    problem: &MfgProblem,
    measurement: &Measurement,
    q0: &SpatialField,
    cfg: &InverseConfig,
) -> Result<InverseResult> {
    check(problem, measurement, q0, cfg)?;
    let spec = LoopSpec::plain(bri_step(cfg), WarmStart::Static, cfg);
    let target = measurement_term(&measurement.phi0, problem);
    let rho_init = SpaceTimeField::static_flow(problem.rho0());
    outer_loop(problem, measurement, q0, rho_init, &spec, &mut correction_update(problem, target))
}
