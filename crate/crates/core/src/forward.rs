//! Fictitious play for the forward MFG problem.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::grid::{SpaceTimeField, SpatialField};
use crate::model::MfgProblem;
use crate::pde::{solve_fp, solve_hjb, NewtonParams};

/// Averaging weights `delta_n` of fictitious play.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightSchedule {
    Fixed { delta: f64 },
    /// `delta_n = 2 / (n + 2)`.
    Harmonic,
}

impl WeightSchedule {
    pub fn fixed(delta: f64) -> Result<Self> {
        let s = WeightSchedule::Fixed { delta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            WeightSchedule::Fixed { delta } if !(delta > 0.0 && delta <= 1.0) => Err(
                MfgError::InvalidParameter(format!("averaging weight must lie in (0, 1], got {delta}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn weight(&self, n: usize) -> f64 {
        match *self {
            WeightSchedule::Fixed { delta } => delta,
            WeightSchedule::Harmonic => 2.0 / (n as f64 + 2.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FicPlayParams {
    pub schedule: WeightSchedule,
    pub tol: f64,
    pub max_iter: usize,
    pub newton: NewtonParams,
}

impl Default for FicPlayParams {
    fn default() -> Self {
        Self {
            schedule: WeightSchedule::Fixed { delta: 0.5 },
            tol: 1e-8,
            max_iter: 500,
            newton: NewtonParams::default(),
        }
    }
}

impl FicPlayParams {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.newton.validate()?;
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(MfgError::InvalidParameter(format!(
                "fictitious play needs tol > 0 and max_iter >= 1 (got tol={}, max_iter={})",
                self.tol, self.max_iter
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForwardRecord {
    pub iter: usize,
    pub residual: f64,
    pub hjb_fp_solves: usize,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct ForwardResult {
    /// Averaged density flow after the last iteration.
    pub rho: SpaceTimeField,
    /// Value function of the last best response.
    pub phi: SpaceTimeField,
    /// Density flow the last HJB solve was driven by.
    pub rho_input: SpaceTimeField,
    pub history: Vec<ForwardRecord>,
    pub iterations: usize,
    pub hjb_fp_solves: usize,
    pub converged: bool,
}

impl ForwardResult {
    pub fn final_residual(&self) -> f64 {
        self.history.last().map_or(f64::INFINITY, |r| r.residual)
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.residual).collect()
    }

    /// Turn a run that hit `max_iter` into [`MfgError::MaxIterReached`].
    pub fn into_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(MfgError::MaxIterReached {
                iterations: self.iterations,
                residual: self.final_residual(),
            })
        }
    }
}

/// One HJB solve against `rho_tilde` followed by one FP solve.
pub fn best_response(
    problem: &MfgProblem,
    q: &SpatialField,
    rho_tilde: &SpaceTimeField,
    newton: &NewtonParams,
) -> Result<(SpaceTimeField, SpaceTimeField)> {
    let phi = solve_hjb(problem, q, rho_tilde, newton)?;
    let rho = solve_fp(problem, &phi, problem.rho0())?;
    Ok((phi, rho))
}

/// `sup_n ||rho_br(n) - rho_tilde(n)||` with the spatial L2 norm.
pub fn forward_residual(rho_tilde: &SpaceTimeField, rho_br: &SpaceTimeField) -> Result<f64> {
    rho_br.grid().ensure_same(rho_tilde.grid(), "forward residual")?;
    let grid = rho_tilde.grid();
    let dx = grid.dx();
    Ok((0..=grid.n_t())
        .map(|n| {
            let s: f64 = rho_tilde
                .slice(n)
                .iter()
                .zip(rho_br.slice(n))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (dx * s).sqrt()
        })
        .fold(0.0, f64::max))
}

/// Run fictitious play until the forward residual drops to `params.tol` or
/// `params.max_iter` iterations have been spent. Hitting the iteration cap
/// is reported through `converged = false`, not as an error.
pub fn fictitious_play(
    problem: &MfgProblem,
    q: &SpatialField,
    rho_tilde0: &SpaceTimeField,
    params: &FicPlayParams,
) -> Result<ForwardResult> {
    params.validate()?;
    iterate(problem, q, rho_tilde0, &params.schedule, &params.newton, Some(params.tol), params.max_iter)
}

/// Exactly `iterations` fictitious-play steps with no stopping test.
pub fn fictitious_play_steps(
    problem: &MfgProblem,
    q: &SpatialField,
    rho_tilde0: &SpaceTimeField,
    schedule: &WeightSchedule,
    newton: &NewtonParams,
    iterations: usize,
) -> Result<ForwardResult> {
    schedule.validate()?;
    if iterations == 0 {
        return Err(MfgError::InvalidParameter("need at least one inner iteration".into()));
    }
    iterate(problem, q, rho_tilde0, schedule, newton, None, iterations)
}

fn iterate(
    problem: &MfgProblem,
    q: &SpatialField,
    rho_tilde0: &SpaceTimeField,
    schedule: &WeightSchedule,
    newton: &NewtonParams,
    tol: Option<f64>,
    max_iter: usize,
) -> Result<ForwardResult> {
    rho_tilde0.grid().ensure_same(problem.grid(), "initial density flow")?;
    let start = Instant::now();
    let mut rho_tilde = rho_tilde0.clone();
    let mut history = Vec::new();
    let mut phi = None;
    let mut rho_input = rho_tilde0.clone();
    let mut converged = tol.is_none();
    // Without interaction the best response ignores the flow it answers, so
    // taking it whole reaches the equilibrium at the second step.
    let decoupled = problem.interaction().is_absent();
    for n in 0..max_iter {
        let (phi_n, rho_br) = best_response(problem, q, &rho_tilde, newton)?;
        let residual = forward_residual(&rho_tilde, &rho_br)?;
        let weight = if decoupled { 1.0 } else { schedule.weight(n) };
        let averaged = rho_tilde.blend(&rho_br, weight);
        rho_input = std::mem::replace(&mut rho_tilde, averaged);
        phi = Some(phi_n);
        history.push(ForwardRecord {
            iter: n + 1,
            residual,
            hjb_fp_solves: n + 1,
            elapsed_seconds: start.elapsed().as_secs_f64(),
        });
        if !residual.is_finite() {
            return Err(MfgError::NonfiniteValue {
                what: "forward residual",
                level: 0,
                node: 0,
            });
        }
        if tol.is_some_and(|t| residual <= t) {
            converged = true;
            break;
        }
    }
    let iterations = history.len();
    Ok(ForwardResult {
        rho: rho_tilde,
        phi: phi.expect("at least one iteration"),
        rho_input,
        history,
        iterations,
        hjb_fp_solves: iterations,
        converged,
    })
}
