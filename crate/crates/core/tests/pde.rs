//! HJB and FP solvers against independently written residuals and matrices.

use mfgid_core::{
    fp_step_matrix, solve_fp, solve_hjb, DensitySpec, Grid, InteractionCost, Kernel, LaxFriedrichsParams, LocalCost,
    MfgProblem, NewtonParams, Pointwise, SpaceTimeField, SpatialField, TerminalCost,
};
use proptest::prelude::*;
use std::f64::consts::{PI, TAU};

const NU: f64 = 0.2;
const NU_NUM: f64 = 0.05;
const SIGMA: f64 = 0.15;

fn gaussian_kernel(d: f64, length: f64) -> f64 {
    (-4..=4)
        .map(|k| {
            let y = d + k as f64 * length;
            (-y * y / (2.0 * SIGMA * SIGMA)).exp() / ((2.0 * PI).sqrt() * SIGMA)
        })
        .sum()
}

fn nonlocal_problem(n_x: usize, n_t: usize) -> MfgProblem {
    let g = Grid::new(n_x, n_t, 0.0, 1.0, 0.5).unwrap();
    let rho0 = DensitySpec::Gaussian { mean: 0.4, sigma: 0.1 }.sample(&g).unwrap();
    MfgProblem::new(NU, rho0)
        .unwrap()
        .with_lax_friedrichs(LaxFriedrichsParams::fixed(NU_NUM).unwrap())
        .with_interaction(InteractionCost::Nonlocal {
            kernel: Kernel::Gaussian { sigma: SIGMA },
            pointwise: Pointwise::Square,
        })
        .with_terminal(TerminalCost::Field(SpatialField::from_fn(g, |x| 0.3 * (TAU * x).cos())))
        .unwrap()
}

/// `sum_j K(x_i - x_j) rho_j^2 dx` by direct summation.
fn interaction(rho: &[f64], g: &Grid) -> Vec<f64> {
    let n = rho.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| gaussian_kernel(g.x(i) - g.x(j), g.length()) * rho[j] * rho[j] * g.dx())
                .sum()
        })
        .collect()
}

/// Residual of one backward level for the quadratic Hamiltonian with the
/// Lax-Friedrichs correction.
fn level_residual(phi: &[f64], phi_next: &[f64], source: &[f64], g: &Grid) -> Vec<f64> {
    let n = phi.len();
    let (dx, dt) = (g.dx(), g.dt());
    (0..n)
        .map(|i| {
            let r = phi[(i + 1) % n];
            let l = phi[(i + n - 1) % n];
            let pp = (r - phi[i]) / dx;
            let pm = (phi[i] - l) / dx;
            let ham = 0.5 * (0.5 * (pp + pm)).powi(2) - 0.5 * NU_NUM * (pp - pm);
            -(phi_next[i] - phi[i]) / dt - NU * (r - 2.0 * phi[i] + l) / (dx * dx) + ham - source[i]
        })
        .collect()
}

fn some_flow(g: Grid) -> SpaceTimeField {
    SpaceTimeField::from_fn(g, |x, t| 1.0 + 0.5 * (TAU * (x - 0.3 * t)).sin())
}

#[test]
fn hjb_solution_satisfies_independent_residual() {
    let p = nonlocal_problem(40, 20);
    let g = *p.grid();
    let q = SpatialField::from_fn(g, |x| (TAU * x).sin() + 0.2 * (3.0 * TAU * x).cos());
    let flow = some_flow(g);
    let phi = solve_hjb(&p, &q, &flow, &NewtonParams::default()).unwrap();

    let terminal: Vec<f64> = g.xs().map(|x| 0.3 * (TAU * x).cos()).collect();
    for (a, b) in phi.slice(g.n_t()).iter().zip(&terminal) {
        assert!((a - b).abs() <= 1e-15);
    }
    let mut worst: f64 = 0.0;
    for n in 0..g.n_t() {
        let f = interaction(flow.slice(n + 1), &g);
        let source: Vec<f64> = f.iter().zip(q.values()).map(|(a, b)| a + b).collect();
        let r = level_residual(phi.slice(n), phi.slice(n + 1), &source, &g);
        worst = r.iter().fold(worst, |m, v| m.max(v.abs()));
    }
    assert!(worst <= 1e-9, "independent residual {worst:e}");
}

#[test]
fn fp_matrix_is_transpose_of_linearized_hjb() {
    let p = nonlocal_problem(8, 4);
    let g = *p.grid();
    let phi: Vec<f64> = g.xs().map(|x| (TAU * x).sin() + 0.4 * (2.0 * TAU * x).cos()).collect();
    let phi_next = vec![0.0; 8];
    let source = vec![0.0; 8];
    let h = 1e-6;
    // Column j of the Jacobian by central differences.
    let mut jac = vec![vec![0.0; 8]; 8];
    for j in 0..8 {
        let mut up = phi.clone();
        let mut down = phi.clone();
        up[j] += h;
        down[j] -= h;
        let ru = level_residual(&up, &phi_next, &source, &g);
        let rd = level_residual(&down, &phi_next, &source, &g);
        for i in 0..8 {
            jac[i][j] = (ru[i] - rd[i]) / (2.0 * h);
        }
    }
    let dense = fp_step_matrix(&p, &phi).to_dense();
    let scale = 1.0 / (g.dx() * g.dx());
    for i in 0..8 {
        for j in 0..8 {
            assert!(
                (dense[i][j] - jac[j][i]).abs() <= 1e-6 * scale,
                "entry ({i},{j}): {} vs {}",
                dense[i][j],
                jac[j][i]
            );
        }
    }
}

#[test]
fn potential_shift_moves_value_function_linearly_in_time() {
    let p = nonlocal_problem(32, 16);
    let g = *p.grid();
    let q = SpatialField::from_fn(g, |x| (TAU * x).cos());
    let flow = some_flow(g);
    let c = 0.75;
    let base = solve_hjb(&p, &q, &flow, &NewtonParams::default()).unwrap();
    let shifted = solve_hjb(&p, &q.offset(c), &flow, &NewtonParams::default()).unwrap();
    for n in 0..=g.n_t() {
        let expect = c * (g.t_final() - g.t(n));
        for (a, b) in base.slice(n).iter().zip(shifted.slice(n)) {
            assert!((b - a - expect).abs() <= 1e-10);
        }
    }
    let rho_a = solve_fp(&p, &base, p.rho0()).unwrap();
    let rho_b = solve_fp(&p, &shifted, p.rho0()).unwrap();
    let diff = rho_a.zip_map(&rho_b, |a, b| (a - b).abs());
    assert!(diff.values().iter().all(|&d| d <= 1e-9));
}

#[test]
fn newton_failure_is_reported() {
    let p = nonlocal_problem(16, 4);
    let g = *p.grid();
    let q = SpatialField::from_fn(g, |x| 50.0 * (TAU * x).sin());
    let tight = NewtonParams { tol: 1e-14, max_iter: 1 };
    assert!(solve_hjb(&p, &q, &some_flow(g), &tight).is_err());
    assert!(solve_hjb(&p, &q, &some_flow(g), &NewtonParams { tol: 0.0, max_iter: 5 }).is_err());
}

#[test]
fn mismatched_grids_are_rejected() {
    let p = nonlocal_problem(16, 4);
    let other = Grid::unit(8, 4, 0.5).unwrap();
    let q = SpatialField::zeros(other);
    assert!(solve_hjb(&p, &q, &some_flow(*p.grid()), &NewtonParams::default()).is_err());
}

#[test]
fn local_costs_match_their_formulas() {
    let g = Grid::unit(6, 1, 1.0).unwrap();
    let rho = SpatialField::from_fn(g, |x| 1.0 + x);
    for (cost, f) in [
        (LocalCost::Identity, (|r: f64| r) as fn(f64) -> f64),
        (LocalCost::Negated, |r| -r),
        (LocalCost::Square, |r| r * r),
    ] {
        let out = InteractionCost::Local(cost).eval(&rho);
        for (o, r) in out.values().iter().zip(rho.values()) {
            assert_eq!(*o, f(*r));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn fp_conserves_mass(a in -2.0f64..2.0, b in -2.0f64..2.0, k in 1u32..4, speed in -1.0f64..1.0) {
        let p = nonlocal_problem(48, 24);
        let g = *p.grid();
        let phi = SpaceTimeField::from_fn(g, |x, t| {
            a * (TAU * k as f64 * (x - speed * t)).sin() + b * (TAU * x).cos() * (1.0 - t)
        });
        let rho = solve_fp(&p, &phi, p.rho0()).unwrap();
        let m0 = p.rho0().integrate();
        for m in rho.masses() {
            prop_assert!((m - m0).abs() <= 1e-12 * m0, "mass {m} vs {m0}");
        }
    }
}
