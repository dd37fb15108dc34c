//! Backward HJB solver (Newton per time level) and forward implicit FP solver.
//!
//! The FP step matrix is assembled as the exact transpose of the linearized
//! HJB transport operator, so the two solvers are discretely adjoint and the
//! FP scheme conserves mass to round-off.

use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::grid::stencil::{next, prev};
use crate::grid::{SpaceTimeField, SpatialField};
use crate::model::{lf_gradients, lf_hamiltonian, MfgProblem};
use crate::tridiag::CyclicTridiagonal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonParams {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonParams {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 50,
        }
    }
}

impl NewtonParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(MfgError::InvalidParameter(format!(
                "Newton needs tol > 0 and max_iter >= 1 (got tol={}, max_iter={})",
                self.tol, self.max_iter
            )));
        }
        Ok(())
    }
}

/// Residual of one backward HJB level at every node.
///
/// `source` holds `q + f(rho_{n+1})`.
fn hjb_level_residual(
    problem: &MfgProblem,
    phi: &[f64],
    phi_next: &[f64],
    source: &[f64],
    out: &mut [f64],
) {
    let grid = problem.grid();
    let (dx, dt, nu) = (grid.dx(), grid.dt(), problem.nu());
    let nu_num = problem.nu_num();
    let h = problem.hamiltonian();
    let n = phi.len();
    let inv_dx2 = 1.0 / (dx * dx);
    for i in 0..n {
        let (l, r) = (phi[prev(i, n)], phi[next(i, n)]);
        let p_plus = (r - phi[i]) / dx;
        let p_minus = (phi[i] - l) / dx;
        let lap = (r - 2.0 * phi[i] + l) * inv_dx2;
        out[i] = (phi[i] - phi_next[i]) / dt - nu * lap + lf_hamiltonian(h, nu_num, p_plus, p_minus)
            - source[i];
    }
}

/// Magnitude below which the level residual cannot be pushed in floating
/// point: the sum of the absolute sizes of the terms, times a small multiple
/// of machine epsilon.
fn roundoff_floor(problem: &MfgProblem, phi: &[f64], phi_next: &[f64], source: &[f64]) -> f64 {
    let grid = problem.grid();
    let (dx, dt, nu) = (grid.dx(), grid.dt(), problem.nu());
    let nu_num = problem.nu_num();
    let h = problem.hamiltonian();
    let n = phi.len();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let p_plus = (phi[next(i, n)] - phi[i]) / dx;
        let p_minus = (phi[i] - phi[prev(i, n)]) / dx;
        let scale = (phi[i].abs() + phi_next[i].abs()) / dt
            + 4.0 * nu * phi[i].abs().max(phi[next(i, n)].abs()).max(phi[prev(i, n)].abs()) / (dx * dx)
            + lf_hamiltonian(h, nu_num, p_plus, p_minus).abs()
            + source[i].abs();
        worst = worst.max(scale);
    }
    64.0 * f64::EPSILON * worst
}

fn hjb_jacobian(problem: &MfgProblem, phi: &[f64], jac: &mut CyclicTridiagonal) {
    let grid = problem.grid();
    let (dx, dt, nu) = (grid.dx(), grid.dt(), problem.nu());
    let nu_num = problem.nu_num();
    let h = problem.hamiltonian();
    let n = phi.len();
    let diff = nu / (dx * dx);
    for i in 0..n {
        let p_plus = (phi[next(i, n)] - phi[i]) / dx;
        let p_minus = (phi[i] - phi[prev(i, n)]) / dx;
        let (a_plus, a_minus) = lf_gradients(h, nu_num, p_plus, p_minus);
        jac.lower[i] = -diff - a_minus / dx;
        jac.diag[i] = 1.0 / dt + 2.0 * diff + (a_minus - a_plus) / dx;
        jac.upper[i] = -diff + a_plus / dx;
    }
}

fn check_finite(values: &[f64], what: &'static str, level: usize) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(node) => Err(MfgError::NonfiniteValue { what, level, node }),
        None => Ok(()),
    }
}

/// Solve the discrete HJB equation backward from `phi(T) = f_T`, with the
/// interaction cost at level `n` evaluated on `rho_flow` at level `n + 1`.
pub fn solve_hjb(
    problem: &MfgProblem,
    q: &SpatialField,
    rho_flow: &SpaceTimeField,
    newton: &NewtonParams,
) -> Result<SpaceTimeField> {
    let grid = *problem.grid();
    q.grid().ensure_same(&grid, "potential")?;
    rho_flow.grid().ensure_same(&grid, "density flow")?;
    newton.validate()?;

    let n_x = grid.n_x();
    let n_t = grid.n_t();
    let mut phi = SpaceTimeField::zeros(grid);
    phi.slice_mut(n_t).copy_from_slice(&problem.terminal().values(&grid));

    let cost = problem.interaction().evaluator(&grid);
    let mut source = vec![0.0; n_x];
    let mut residual = vec![0.0; n_x];
    let mut jac = CyclicTridiagonal::zeros(n_x);

    for n in (0..n_t).rev() {
        cost.eval_into(rho_flow.slice(n + 1), &mut source);
        for (s, qi) in source.iter_mut().zip(q.values()) {
            *s += qi;
        }
        let phi_next = phi.slice(n + 1).to_vec();
        let mut current = phi_next.clone();
        let mut converged = false;
        let mut res_norm = f64::INFINITY;
        for _ in 0..=newton.max_iter {
            hjb_level_residual(problem, &current, &phi_next, &source, &mut residual);
            check_finite(&residual, "HJB residual", n)?;
            res_norm = residual.iter().fold(0.0, |m: f64, r| m.max(r.abs()));
            if res_norm <= newton.tol || res_norm <= roundoff_floor(problem, &current, &phi_next, &source) {
                converged = true;
                break;
            }
            hjb_jacobian(problem, &current, &mut jac);
            let step = jac.solve(&residual)?;
            for (c, s) in current.iter_mut().zip(&step) {
                *c -= s;
            }
        }
        if !converged {
            return Err(MfgError::NewtonDiverged {
                level: n,
                residual: res_norm,
                iterations: newton.max_iter,
            });
        }
        check_finite(&current, "HJB solution", n)?;
        phi.slice_mut(n).copy_from_slice(&current);
    }
    Ok(phi)
}

/// Matrix of the implicit FP step driven by the value function at one time
/// level: `I/dt - nu Lap + A^T`, where `A` is the linearized HJB transport
/// operator at `phi_level`.
pub fn fp_step_matrix(problem: &MfgProblem, phi_level: &[f64]) -> CyclicTridiagonal {
    let grid = problem.grid();
    let (dx, dt, nu) = (grid.dx(), grid.dt(), problem.nu());
    let nu_num = problem.nu_num();
    let h = problem.hamiltonian();
    let n = phi_level.len();
    let diff = nu / (dx * dx);
    let grads: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let p_plus = (phi_level[next(i, n)] - phi_level[i]) / dx;
            let p_minus = (phi_level[i] - phi_level[prev(i, n)]) / dx;
            lf_gradients(h, nu_num, p_plus, p_minus)
        })
        .collect();
    let mut m = CyclicTridiagonal::zeros(n);
    for i in 0..n {
        let (a_plus, a_minus) = grads[i];
        m.lower[i] = -diff + grads[prev(i, n)].0 / dx;
        m.diag[i] = 1.0 / dt + 2.0 * diff + (a_minus - a_plus) / dx;
        m.upper[i] = -diff - grads[next(i, n)].1 / dx;
    }
    m
}

/// March the density forward from `rho0`; the step from level `n` to `n + 1`
/// is driven by `phi` at level `n`.
pub fn solve_fp(problem: &MfgProblem, phi: &SpaceTimeField, rho0: &SpatialField) -> Result<SpaceTimeField> {
    let grid = *problem.grid();
    phi.grid().ensure_same(&grid, "value function")?;
    rho0.grid().ensure_same(&grid, "initial density")?;
    let inv_dt = 1.0 / grid.dt();
    let mut rho = SpaceTimeField::zeros(grid);
    rho.slice_mut(0).copy_from_slice(rho0.values());
    for n in 0..grid.n_t() {
        let m = fp_step_matrix(problem, phi.slice(n));
        let rhs: Vec<f64> = rho.slice(n).iter().map(|r| r * inv_dt).collect();
        let next_level = m.solve(&rhs)?;
        check_finite(&next_level, "FP solution", n + 1)?;
        rho.slice_mut(n + 1).copy_from_slice(&next_level);
    }
    Ok(rho)
}

/// Max-norm HJB residual of `phi` over all levels; a convenience for checks.
pub fn hjb_residual(
    problem: &MfgProblem,
    q: &SpatialField,
    rho_flow: &SpaceTimeField,
    phi: &SpaceTimeField,
) -> f64 {
    let grid = *problem.grid();
    let cost = problem.interaction().evaluator(&grid);
    let mut source = vec![0.0; grid.n_x()];
    let mut out = vec![0.0; grid.n_x()];
    let mut worst: f64 = 0.0;
    for n in 0..grid.n_t() {
        cost.eval_into(rho_flow.slice(n + 1), &mut source);
        for (s, qi) in source.iter_mut().zip(q.values()) {
            *s += qi;
        }
        hjb_level_residual(problem, phi.slice(n), phi.slice(n + 1), &source, &mut out);
        worst = out.iter().fold(worst, |m, r| m.max(r.abs()));
    }
    worst
}
