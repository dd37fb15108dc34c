//! Hierarchical equilibrium correction: ECI on a coarse-to-fine ladder of
//! grids, each level starting from the interpolated potential and density
//! flow of the one below.

use crate::error::{MfgError, Result};
use crate::grid::{Grid, SpaceTimeField};
use crate::model::{transfer, MfgProblem};

use super::driver::{correction_update, outer_loop, ForwardStep, LoopSpec, StopRule, WarmStart};
use super::{measurement_term, InverseConfig, InverseResult, InverseStatus, Measurement};

/// Run ECI on `cfg.heci_levels` grids, the finest being the problem's grid
/// and each coarser one halving `n_x` and `n_t`.
///
/// The measurement-induced term is computed once on the finest grid and
/// restricted by injection. Coarse levels stop once the relative update size
/// `||dq|| / ||M||` falls below `cfg.heci_coarse_tol / 4^(l-1)`; the finest
/// level uses the usual measurement test. With one level this is
/// [`super::run_eci`].
pub fn run_heci(
    problem: &MfgProblem,
    measurement: &Measurement,
    q0: &crate::grid::SpatialField,
    cfg: &InverseConfig,
) -> Result<InverseResult> {
    cfg.validate()?;
    let fine = *problem.grid();
    measurement.grid().ensure_same(&fine, "measurement")?;
    q0.grid().ensure_same(&fine, "initial potential")?;
    let levels = cfg.heci_levels;
    let factor = 1usize << (levels - 1);
    if fine.n_x() % factor != 0 || fine.n_t() % factor != 0 {
        return Err(MfgError::InvalidGrid(format!(
            "{levels} levels need n_x and n_t divisible by {factor} (got n_x={}, n_t={})",
            fine.n_x(),
            fine.n_t()
        )));
    }

    let mut grids: Vec<Grid> = vec![fine];
    for _ in 1..levels {
        let coarser = grids.last().expect("non-empty").coarsened()?;
        grids.push(coarser);
    }
    grids.reverse();

    let target_fine = measurement_term(&measurement.phi0, problem);
    let mut q = transfer(q0, &grids[0])?;
    let mut warm: Option<SpaceTimeField> = None;
    let mut history = Vec::new();
    let mut summaries = Vec::new();
    let mut solves = 0;
    let mut cost = 0.0;
    let mut elapsed = 0.0;
    let mut updates = 0;

    for (idx, grid) in grids.iter().enumerate() {
        let level = idx + 1;
        let finest = level == levels;
        let level_problem = if finest { problem.clone() } else { problem.on_grid(grid)? };
        let level_measurement = if finest {
            measurement.clone()
        } else {
            Measurement {
                phi0: transfer(&measurement.phi0, grid)?,
                q_true: measurement.q_true.as_ref().map(|t| transfer(t, grid)).transpose()?,
            }
        };
        let target = transfer(&target_fine, grid)?;
        let q_start = transfer(&q, grid)?;
        let rho_init = match warm.take() {
            Some(flow) => {
                let mut f = flow;
                while f.grid().n_x() < grid.n_x() {
                    f = f.refine();
                }
                f
            }
            None => SpaceTimeField::static_flow(level_problem.rho0()),
        };
        let stop = if finest {
            StopRule::Measurement(cfg.outer_tol)
        } else {
            StopRule::UpdateSize {
                tol: cfg.heci_coarse_tol / 4f64.powi(level as i32 - 1),
                scale: target.norm(),
                meas_tol: cfg.outer_tol,
            }
        };
        let spec = LoopSpec {
            stop,
            cost_weight: 0.25f64.powi((levels - level) as i32),
            level,
            k_offset: updates,
            solves_offset: solves,
            cost_offset: cost,
            clock_offset: elapsed,
            ..LoopSpec::plain(ForwardStep::Converged(cfg.forward), WarmStart::Previous, cfg)
        };
        let result = outer_loop(
            &level_problem,
            &level_measurement,
            &q_start,
            rho_init,
            &spec,
            &mut correction_update(&level_problem, target),
        )?;

        updates += result.outer_iterations;
        solves = result.hjb_fp_solves;
        cost = result.fine_equivalent_cost;
        elapsed = result.history.last().map_or(elapsed, |r| r.elapsed_seconds);
        history.extend(result.history.iter().copied());
        let mut summary = result.levels[0];
        summary.level = level;
        summary.hjb_fp_solves = result.hjb_fp_solves - spec.solves_offset;
        summary.fine_equivalent_cost = result.fine_equivalent_cost - spec.cost_offset;
        summaries.push(summary);

        if finest || result.status == InverseStatus::Diverged {
            return Ok(InverseResult {
                history,
                outer_iterations: updates,
                hjb_fp_solves: solves,
                fine_equivalent_cost: cost,
                levels: summaries,
                ..result
            });
        }
        q = result.q;
        warm = Some(result.rho);
    }
    unreachable!("the finest level always returns")
}
