//! Hopf-Cole variables `w = exp(-phi/2nu)`, `u = rho exp(phi/2nu)` and the
//! classical fixed-point scheme for the linear parabolic inverse problem
//! they lead to when the interaction cost is absent.

use crate::error::{MfgError, Result};
use crate::grid::stencil::{next, prev};
use crate::grid::{SpaceTimeField, SpatialField};
use crate::inverse::{outer_loop, ForwardStep, InverseConfig, InverseResult, LoopSpec, Measurement, WarmStart};
use crate::model::MfgProblem;
use crate::tridiag::CyclicTridiagonal;

#[derive(Debug, Clone, PartialEq)]
pub struct HopfColePair {
    pub w: SpaceTimeField,
    pub u: SpaceTimeField,
}

fn check_nu(nu: f64) -> Result<()> {
    if nu > 0.0 && nu.is_finite() {
        Ok(())
    } else {
        Err(MfgError::InvalidParameter(format!("viscosity must be positive, got {nu}")))
    }
}

pub fn to_hopf_cole(rho: &SpaceTimeField, phi: &SpaceTimeField, nu: f64) -> Result<HopfColePair> {
    check_nu(nu)?;
    phi.grid().ensure_same(rho.grid(), "value function")?;
    let s = 0.5 / nu;
    Ok(HopfColePair {
        w: phi.map(|p| (-s * p).exp()),
        u: rho.zip_map(phi, |r, p| r * (s * p).exp()),
    })
}

/// Back to `(rho, phi)`; fails on a non-positive `w`.
pub fn from_hopf_cole(pair: &HopfColePair, nu: f64) -> Result<(SpaceTimeField, SpaceTimeField)> {
    check_nu(nu)?;
    pair.u.grid().ensure_same(pair.w.grid(), "Hopf-Cole pair")?;
    let n_x = pair.w.grid().n_x();
    if let Some(pos) = pair.w.values().iter().position(|&v| !(v > 0.0)) {
        return Err(MfgError::NonpositiveW {
            level: pos / n_x,
            node: pos % n_x,
            value: pair.w.values()[pos],
        });
    }
    let rho = pair.w.zip_map(&pair.u, |w, u| w * u);
    let phi = pair.w.map(|w| -2.0 * nu * w.ln());
    Ok((rho, phi))
}

/// Max-norm residual of the discrete parabolic system satisfied by the
/// Hopf-Cole variables: backward Euler for `w`, forward Euler-implicit for
/// `u`, both with the source `q + f(w u)` taken at the later time level.
///
/// For a forward-solved equilibrium this is a consistency error of order
/// `dt + dx^2` (the HJB and FP schemes are discretized in `phi`, `rho`).
pub fn parabolic_residual(pair: &HopfColePair, q: &SpatialField, problem: &MfgProblem) -> Result<f64> {
    let grid = *problem.grid();
    pair.w.grid().ensure_same(&grid, "Hopf-Cole w")?;
    pair.u.grid().ensure_same(&grid, "Hopf-Cole u")?;
    q.grid().ensure_same(&grid, "potential")?;
    let (dx, dt, nu) = (grid.dx(), grid.dt(), problem.nu());
    let n = grid.n_x();
    let inv_dx2 = 1.0 / (dx * dx);
    let cost = problem.interaction().evaluator(&grid);
    let mut f = vec![0.0; n];
    let mut worst: f64 = 0.0;
    for level in 0..grid.n_t() {
        let (w0, w1) = (pair.w.slice(level), pair.w.slice(level + 1));
        let (u0, u1) = (pair.u.slice(level), pair.u.slice(level + 1));
        let rho1: Vec<f64> = w1.iter().zip(u1).map(|(a, b)| a * b).collect();
        cost.eval_into(&rho1, &mut f);
        for i in 0..n {
            let source = (q.values()[i] + f[i]) / (2.0 * nu);
            let lap_w = (w0[next(i, n)] - 2.0 * w0[i] + w0[prev(i, n)]) * inv_dx2;
            let lap_u = (u1[next(i, n)] - 2.0 * u1[i] + u1[prev(i, n)]) * inv_dx2;
            let r_w = -(w1[i] - w0[i]) / dt - nu * lap_w + source * w0[i];
            let r_u = (u1[i] - u0[i]) / dt - nu * lap_u + source * u1[i];
            worst = worst.max(r_w.abs()).max(r_u.abs());
        }
    }
    Ok(worst)
}

/// Solve `-(w_{n+1} - w_n)/dt - nu Lap w_n + q w_n / 2nu = 0` backward from
/// `w_T`.
pub fn solve_w_backward(q: &SpatialField, w_terminal: &SpatialField, nu: f64) -> Result<SpaceTimeField> {
    check_nu(nu)?;
    let grid = *q.grid();
    w_terminal.grid().ensure_same(&grid, "terminal w")?;
    let (dx, dt) = (grid.dx(), grid.dt());
    let diff = nu / (dx * dx);
    let n = grid.n_x();
    let mut m = CyclicTridiagonal::zeros(n);
    for i in 0..n {
        m.lower[i] = -diff;
        m.upper[i] = -diff;
        m.diag[i] = 1.0 / dt + 2.0 * diff + q.values()[i] / (2.0 * nu);
    }
    let mut w = SpaceTimeField::zeros(grid);
    w.slice_mut(grid.n_t()).copy_from_slice(w_terminal.values());
    for level in (0..grid.n_t()).rev() {
        let rhs: Vec<f64> = w.slice(level + 1).iter().map(|v| v / dt).collect();
        let sol = m.solve(&rhs)?;
        w.slice_mut(level).copy_from_slice(&sol);
    }
    Ok(w)
}

/// `q_{k+1} = (2nu / w0) ((w_k(dt) - w_k(0))/dt + nu Lap w0)`.
pub fn linpara_update_w(
    w_k: &SpaceTimeField,
    w0_meas: &SpatialField,
    nu: f64,
) -> Result<SpatialField> {
    check_nu(nu)?;
    let grid = *w0_meas.grid();
    w_k.grid().ensure_same(&grid, "iterate w")?;
    if let Some(node) = w0_meas.values().iter().position(|v| v.abs() < 1e-12) {
        return Err(MfgError::VanishingW0 {
            node,
            value: w0_meas.values()[node],
        });
    }
    let dt = grid.dt();
    let lap = w0_meas.laplacian();
    let out = (0..grid.n_x())
        .map(|i| {
            let dtw = (w_k.get(1, i) - w_k.get(0, i)) / dt;
            2.0 * nu / w0_meas.values()[i] * (dtw + nu * lap.values()[i])
        })
        .collect();
    SpatialField::new(grid, out).map_err(|_| MfgError::NonfiniteValue {
        what: "parabolic update",
        level: 0,
        node: 0,
    })
}

/// `(2 nu^2 / w) Lap w` written in `phi = -2 nu ln w`: the discrete
/// counterpart of `-nu Lap phi + |grad phi|^2 / 2` under the Hopf-Cole map.
pub fn hopf_cole_operator(phi: &SpatialField, nu: f64) -> SpatialField {
    let grid = phi.grid();
    let dx = grid.dx();
    let v = phi.values();
    let n = v.len();
    let s = 0.5 / nu;
    let c = 2.0 * nu * nu / (dx * dx);
    let out = (0..n)
        .map(|i| c * ((-(v[next(i, n)] - v[i]) * s).exp() + (-(v[prev(i, n)] - v[i]) * s).exp() - 2.0))
        .collect();
    SpatialField::new(*grid, out).expect("finite operator")
}

/// The parabolic update written in the value function:
/// `q_{k+1} = r q_k + G(phi0) - r G(phi0_k)`, `r = exp(-(phi0_k - phi0)/2nu)`
/// and `G` from [`hopf_cole_operator`]. Equal to [`linpara_update_w`] when
/// `w_k` solves the discrete `w` equation with potential `q_k`.
pub fn linpara_update_phi(
    q_k: &SpatialField,
    phi0_k: &SpatialField,
    phi0_meas: &SpatialField,
    nu: f64,
) -> Result<SpatialField> {
    check_nu(nu)?;
    let grid = phi0_meas.grid();
    q_k.grid().ensure_same(grid, "potential")?;
    phi0_k.grid().ensure_same(grid, "iterate value function")?;
    let r = phi0_k.zip_map(phi0_meas, |a, b| (-(a - b) / (2.0 * nu)).exp());
    let g_meas = hopf_cole_operator(phi0_meas, nu);
    let g_k = hopf_cole_operator(phi0_k, nu);
    Ok(r.mul(&q_k.sub(&g_k)).add(&g_meas))
}

/// Potential recovery for a problem without interaction cost by iterating
/// [`linpara_update_phi`], each step solving the HJB equation with the
/// current potential. Stopping and reporting follow [`crate::run_eci`].
pub fn run_linpara_inversion(
    problem: &MfgProblem,
    measurement: &Measurement,
    q0: &SpatialField,
    cfg: &InverseConfig,
) -> Result<InverseResult> {
    cfg.validate()?;
    if !problem.interaction().is_absent() {
        return Err(MfgError::InvalidProblem(
            "the parabolic iteration needs a problem without interaction cost".into(),
        ));
    }
    if !problem.hamiltonian().is_quadratic() {
        return Err(MfgError::InvalidProblem(
            "the parabolic iteration needs the quadratic Hamiltonian".into(),
        ));
    }
    measurement.grid().ensure_same(problem.grid(), "measurement")?;
    let nu = problem.nu();
    let spec = LoopSpec::plain(ForwardStep::Decoupled(cfg.forward.newton), WarmStart::Static, cfg);
    let rho_init = SpaceTimeField::static_flow(problem.rho0());
    let phi0_meas = measurement.phi0.clone();
    outer_loop(problem, measurement, q0, rho_init, &spec, &mut |q, fwd| {
        linpara_update_phi(q, &fwd.phi.level(0), &phi0_meas, nu)
    })
}
