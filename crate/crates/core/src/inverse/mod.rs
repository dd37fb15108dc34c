//! Recovery of the ambient potential from the value function at time zero.
//!
//! All iterations share one update: `q <- q + M(phi0) - M(phi0_k)`, where
//! `M(phi) = mean(phi)/T - nu Lap phi + H^LF(D phi)` uses the same discrete
//! Hamiltonian as the HJB solver, so a matched measurement is an exact fixed
//! point.

mod diagnostics;
mod driver;
mod heci;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::forward::FicPlayParams;
use crate::grid::stencil::{next, prev};
use crate::grid::{Grid, SpaceTimeField, SpatialField};
use crate::model::{lf_hamiltonian, MfgProblem};

pub use diagnostics::{diagnostics, Diagnostics};
pub use driver::{run_bri, run_bri_static_restart, run_eci};
pub(crate) use driver::{outer_loop, ForwardStep, LoopSpec, WarmStart};
pub use heci::run_heci;

/// The observed value function at `t = 0`, optionally with the potential
/// that generated it (twin experiments).
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub phi0: SpatialField,
    pub q_true: Option<SpatialField>,
}

impl Measurement {
    pub fn new(phi0: SpatialField) -> Result<Self> {
        if !phi0.is_finite() {
            return Err(MfgError::InvalidParameter("measurement contains non-finite values".into()));
        }
        Ok(Self { phi0, q_true: None })
    }

    pub fn with_truth(mut self, q_true: SpatialField) -> Result<Self> {
        q_true.grid().ensure_same(self.phi0.grid(), "true potential")?;
        self.q_true = Some(q_true);
        Ok(self)
    }

    pub fn grid(&self) -> &Grid {
        self.phi0.grid()
    }

    /// Relative error `||phi0_k - phi0|| / ||phi0||`.
    pub fn rel_err(&self, phi0_k: &SpatialField) -> f64 {
        rel_err(phi0_k, &self.phi0)
    }

    pub fn q_rel_err(&self, q: &SpatialField) -> Option<f64> {
        self.q_true.as_ref().map(|t| rel_err(q, t))
    }
}

/// `||a - b|| / ||b||`, or `||a - b||` when `b` vanishes.
pub fn rel_err(a: &SpatialField, b: &SpatialField) -> f64 {
    let d = a.sub(b).norm();
    let n = b.norm();
    if n > 0.0 {
        d / n
    } else {
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InverseConfig {
    pub outer_tol: f64,
    pub outer_max: usize,
    pub forward: FicPlayParams,
    pub bri_inner_n: usize,
    pub bri_delta: f64,
    pub heci_levels: usize,
    /// Relative update size `||dq|| / ||M(phi0)||` that ends a coarse HECI
    /// level; level `l` uses this divided by `4^(l-1)`.
    pub heci_coarse_tol: f64,
    /// Measurement relative error above which a run is declared diverged.
    pub divergence_threshold: f64,
    /// Abort when an inner fictitious play misses its tolerance instead of
    /// recording it and continuing.
    pub abort_on_forward_failure: bool,
}

impl Default for InverseConfig {
    fn default() -> Self {
        Self {
            outer_tol: 1e-9,
            outer_max: 200,
            forward: FicPlayParams::default(),
            bri_inner_n: 1,
            bri_delta: 0.5,
            heci_levels: 1,
            heci_coarse_tol: 1e-3,
            divergence_threshold: 1e3,
            abort_on_forward_failure: false,
        }
    }
}

impl InverseConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.outer_tol > 0.0) {
            problems.push(format!("outer_tol must be positive, got {}", self.outer_tol));
        }
        if self.bri_inner_n == 0 {
            problems.push("bri_inner_n must be at least 1".to_string());
        }
        if !(self.bri_delta > 0.0 && self.bri_delta <= 1.0) {
            problems.push(format!("bri_delta must lie in (0, 1], got {}", self.bri_delta));
        }
        if self.heci_levels == 0 {
            problems.push("heci_levels must be at least 1".to_string());
        }
        if !(self.heci_coarse_tol > 0.0) {
            problems.push(format!("heci_coarse_tol must be positive, got {}", self.heci_coarse_tol));
        }
        if !(self.divergence_threshold > 0.0) {
            problems.push("divergence_threshold must be positive".to_string());
        }
        if let Err(e) = self.forward.validate() {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(MfgError::InvalidParameter(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InverseStatus {
    Converged,
    MaxIter,
    Diverged,
}

/// One outer iteration, recorded after the forward solve with `q^(k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub k: usize,
    pub meas_rel_err: f64,
    pub q_rel_err: Option<f64>,
    pub forward_residual: f64,
    pub forward_converged: bool,
    pub hjb_fp_solves_cum: usize,
    /// Cumulative solves weighted by node count relative to the finest grid.
    pub fine_equivalent_cost: f64,
    pub elapsed_seconds: f64,
    /// Hierarchy level (1-based); always 1 outside HECI.
    pub level: usize,
}

/// Per-level summary of a hierarchical run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelSummary {
    pub level: usize,
    pub n_x: usize,
    pub n_t: usize,
    pub outer_iterations: usize,
    pub hjb_fp_solves: usize,
    pub fine_equivalent_cost: f64,
    pub meas_rel_err: f64,
    pub q_rel_err: Option<f64>,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct InverseResult {
    pub q: SpatialField,
    pub rho: SpaceTimeField,
    pub phi: SpaceTimeField,
    pub history: Vec<IterationRecord>,
    pub status: InverseStatus,
    /// Number of potential updates performed.
    pub outer_iterations: usize,
    pub hjb_fp_solves: usize,
    pub fine_equivalent_cost: f64,
    pub levels: Vec<LevelSummary>,
}

impl InverseResult {
    pub fn converged(&self) -> bool {
        self.status == InverseStatus::Converged
    }

    pub fn final_meas_rel_err(&self) -> f64 {
        self.history.last().map_or(f64::INFINITY, |r| r.meas_rel_err)
    }

    pub fn final_q_rel_err(&self) -> Option<f64> {
        self.history.last().and_then(|r| r.q_rel_err)
    }

    /// Convert a non-converged result into the matching error.
    pub fn into_converged(self) -> Result<Self> {
        let last = self.history.last().copied();
        match self.status {
            InverseStatus::Converged => Ok(self),
            InverseStatus::Diverged => Err(MfgError::Diverged {
                outer: self.outer_iterations,
                rel_err: last.map_or(f64::NAN, |r| r.meas_rel_err),
            }),
            InverseStatus::MaxIter => Err(MfgError::MaxIterReached {
                iterations: self.outer_iterations,
                residual: last.map_or(f64::NAN, |r| r.meas_rel_err),
            }),
        }
    }
}

/// `M(phi0) = mean(phi0)/T - nu Lap phi0 + H^LF(D phi0)`.
pub fn measurement_term(phi0: &SpatialField, problem: &MfgProblem) -> SpatialField {
    let grid = phi0.grid();
    let dx = grid.dx();
    let nu = problem.nu();
    let nu_num = problem.lax_friedrichs().coefficient(grid);
    let h = problem.hamiltonian();
    let alignment = phi0.mean() / grid.t_final();
    let v = phi0.values();
    let n = v.len();
    let out = (0..n)
        .map(|i| {
            let (l, r) = (v[prev(i, n)], v[next(i, n)]);
            let p_plus = (r - v[i]) / dx;
            let p_minus = (v[i] - l) / dx;
            let lap = (r - 2.0 * v[i] + l) / (dx * dx);
            alignment - nu * lap + lf_hamiltonian(h, nu_num, p_plus, p_minus)
        })
        .collect();
    SpatialField::new(*grid, out).expect("finite measurement term")
}

/// `q_k + M(phi0) - M(phi0_k)`.
pub fn eci_update(
    q_k: &SpatialField,
    phi0_k: &SpatialField,
    measurement: &Measurement,
    problem: &MfgProblem,
) -> Result<SpatialField> {
    q_k.grid().ensure_same(measurement.grid(), "potential")?;
    phi0_k.grid().ensure_same(measurement.grid(), "value function")?;
    let target = measurement_term(&measurement.phi0, problem);
    Ok(q_k.add(&target.sub(&measurement_term(phi0_k, problem))))
}

/// The same update written with the time derivative of the forward solution:
/// `M(phi0) - mean(phi0_k)/T - f(rho_1) - (phi_1 - phi_0)/dt`, where
/// `rho_input` is the density flow the HJB solve was driven by. Agrees with
/// [`eci_update`] up to the HJB solver tolerance times `dt`.
pub fn eci_update_time_derivative_form(
    phi_k: &SpaceTimeField,
    rho_input: &SpaceTimeField,
    measurement: &Measurement,
    problem: &MfgProblem,
) -> Result<SpatialField> {
    phi_k.grid().ensure_same(measurement.grid(), "value function")?;
    rho_input.grid().ensure_same(measurement.grid(), "density flow")?;
    let grid = phi_k.grid();
    let phi0 = phi_k.level(0);
    let dphi = phi_k.level(1).sub(&phi0).scale(1.0 / grid.dt());
    let f1 = problem.interaction().eval(&rho_input.level(1));
    let target = measurement_term(&measurement.phi0, problem);
    Ok(target.offset(-phi0.mean() / grid.t_final()).sub(&f1).sub(&dphi))
}

/// Common timing helper for the outer loops.
pub(crate) struct Clock {
    start: Instant,
    offset: f64,
}

impl Clock {
    pub(crate) fn new(offset: f64) -> Self {
        Self {
            start: Instant::now(),
            offset,
        }
    }

    pub(crate) fn elapsed(&self) -> f64 {
        self.offset + self.start.elapsed().as_secs_f64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measurement_term_of_constant() {
        let g = Grid::unit(10, 4, 2.0).unwrap();
        let p = MfgProblem::new(0.3, SpatialField::constant(g, 1.0)).unwrap();
        let m = measurement_term(&SpatialField::constant(g, 3.0), &p);
        assert!(m.values().iter().all(|&v| (v - 1.5).abs() < 1e-15));
    }

    #[test]
    fn matched_measurement_is_fixed_point() {
        let g = Grid::unit(16, 4, 1.0).unwrap();
        let p = MfgProblem::new(0.3, SpatialField::constant(g, 1.0)).unwrap();
        let phi0 = SpatialField::from_fn(g, |x| (6.0 * x).sin());
        let q = SpatialField::from_fn(g, |x| x * x);
        let m = Measurement::new(phi0.clone()).unwrap();
        assert_eq!(eci_update(&q, &phi0, &m, &p).unwrap(), q);
    }

    #[test]
    fn config_validation_lists_all_problems() {
        let cfg = InverseConfig {
            outer_tol: -1.0,
            bri_delta: 2.0,
            heci_levels: 0,
            ..Default::default()
        };
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("outer_tol") && msg.contains("bri_delta") && msg.contains("heci_levels"));
    }
}
