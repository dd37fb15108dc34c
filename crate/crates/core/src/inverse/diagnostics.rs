//! Per-node indicators of a single correction step.

use crate::error::Result;
use crate::grid::{SpaceTimeField, SpatialField};
use crate::model::MfgProblem;

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub q_minus_qhat: SpatialField,
    /// `q_hat^+ - q_hat`: what one update adds to the estimate.
    pub correction: SpatialField,
    /// `correction - (q - q_hat)`, equal to `q_hat^+ - q`.
    pub error: SpatialField,
    /// `(q - q_hat) * correction`; positive where the update moves toward
    /// the truth.
    pub pec: SpatialField,
}

/// Correction, error in correction and their product for the estimate
/// `q_hat` against the truth `q_true`.
///
/// `phi_*` are the value functions of the two forward solves and `rho_*`
/// the density flows their final HJB solves were driven by. The correction
/// is
///
/// `(q - q_hat) + (mean(phi_0) - mean(phi_hat_0))/T + D_t(phi - phi_hat)|_0
///   + f(rho_1) - f(rho_hat_1)`
///
/// with `D_t` the forward difference of the first time step. The last term
/// comes from the HJB source being evaluated one level ahead; with it the
/// identity `q_hat^+ - q = error` holds for the update produced by
/// [`super::eci_update`].
#[allow(clippy::too_many_arguments)]
pub fn diagnostics(
    problem: &MfgProblem,
    q_true: &SpatialField,
    q_hat: &SpatialField,
    phi_true: &SpaceTimeField,
    rho_true: &SpaceTimeField,
    phi_hat: &SpaceTimeField,
    rho_hat: &SpaceTimeField,
) -> Result<Diagnostics> {
    let grid = problem.grid();
    for (f, what) in [(q_true, "true potential"), (q_hat, "estimated potential")] {
        f.grid().ensure_same(grid, what)?;
    }
    for (f, what) in [
        (phi_true, "true value function"),
        (rho_true, "true density flow"),
        (phi_hat, "estimated value function"),
        (rho_hat, "estimated density flow"),
    ] {
        f.grid().ensure_same(grid, what)?;
    }
    let dt = grid.dt();
    let t_final = grid.t_final();
    let dq = q_true.sub(q_hat);
    let (phi0, phi0_hat) = (phi_true.level(0), phi_hat.level(0));
    let dtime = phi_true
        .level(1)
        .sub(&phi0)
        .sub(&phi_hat.level(1).sub(&phi0_hat))
        .scale(1.0 / dt);
    let cost = problem.interaction();
    let lag = cost.eval(&rho_true.level(1)).sub(&cost.eval(&rho_hat.level(1)));
    let error = dtime
        .add(&lag)
        .offset((phi0.mean() - phi0_hat.mean()) / t_final);
    let correction = dq.add(&error);
    let pec = dq.mul(&correction);
    Ok(Diagnostics {
        q_minus_qhat: dq,
        correction,
        error,
        pec,
    })
}
