//! Fictitious play on small problems.

use mfgid_core::{
    best_response, fictitious_play, fictitious_play_steps, forward_residual, hjb_residual, DensitySpec,
    FicPlayParams, Grid, InteractionCost, LocalCost, MfgError, MfgProblem, NewtonParams, PotentialSpec,
    SpaceTimeField, SpatialField, WeightSchedule,
};

fn monotone_problem() -> (MfgProblem, SpatialField) {
    let g = Grid::new(64, 32, -1.0, 1.0, 1.0).unwrap();
    let rho0 = DensitySpec::Gaussian { mean: 0.0, sigma: 0.2 }.sample(&g).unwrap();
    let p = MfgProblem::new(0.2, rho0)
        .unwrap()
        .with_interaction(InteractionCost::Local(LocalCost::Identity));
    let q = PotentialSpec::CubicMix.sample(&g);
    (p, q)
}

#[test]
fn converged_output_is_an_equilibrium() {
    let (p, q) = monotone_problem();
    let params = FicPlayParams {
        tol: 1e-10,
        ..Default::default()
    };
    let start = SpaceTimeField::static_flow(p.rho0());
    let out = fictitious_play(&p, &q, &start, &params).unwrap();
    assert!(out.converged);
    assert!(out.final_residual() <= 1e-10);
    assert_eq!(out.hjb_fp_solves, out.iterations);
    assert_eq!(out.history.len(), out.iterations);

    // The returned value function answers the flow it was computed against.
    assert!(hjb_residual(&p, &q, &out.rho_input, &out.phi) <= 1e-9);
    // One more best response against the output moves it by at most the tolerance scale.
    let (_, br) = best_response(&p, &q, &out.rho, &NewtonParams::default()).unwrap();
    assert!(forward_residual(&out.rho, &br).unwrap() <= 1e-9);
}

#[test]
fn residual_decreases_overall() {
    let (p, q) = monotone_problem();
    let start = SpaceTimeField::static_flow(p.rho0());
    let out = fictitious_play(&p, &q, &start, &FicPlayParams::default()).unwrap();
    let r = out.residuals();
    assert!(r.last().unwrap() < &(1e-6 * r[0]));
}

#[test]
fn runs_are_bit_identical() {
    let (p, q) = monotone_problem();
    let start = SpaceTimeField::static_flow(p.rho0());
    let a = fictitious_play(&p, &q, &start, &FicPlayParams::default()).unwrap();
    let b = fictitious_play(&p, &q, &start, &FicPlayParams::default()).unwrap();
    assert_eq!(a.rho, b.rho);
    assert_eq!(a.phi, b.phi);
    assert_eq!(a.residuals(), b.residuals());
}

#[test]
fn iteration_cap_is_reported_not_raised() {
    let (p, q) = monotone_problem();
    let start = SpaceTimeField::static_flow(p.rho0());
    let params = FicPlayParams {
        tol: 1e-14,
        max_iter: 3,
        ..Default::default()
    };
    let out = fictitious_play(&p, &q, &start, &params).unwrap();
    assert!(!out.converged);
    assert_eq!(out.iterations, 3);
    assert!(matches!(out.into_converged(), Err(MfgError::MaxIterReached { iterations: 3, .. })));
}

#[test]
fn fixed_step_count_ignores_tolerance() {
    let (p, q) = monotone_problem();
    let start = SpaceTimeField::static_flow(p.rho0());
    let out = fictitious_play_steps(&p, &q, &start, &WeightSchedule::fixed(0.5).unwrap(), &NewtonParams::default(), 4)
        .unwrap();
    assert_eq!(out.iterations, 4);
    assert!(out.converged);
    assert!(fictitious_play_steps(&p, &q, &start, &WeightSchedule::Harmonic, &NewtonParams::default(), 0).is_err());
}

#[test]
fn fixed_steps_match_the_tolerance_driven_loop() {
    let (p, q) = monotone_problem();
    let start = SpaceTimeField::static_flow(p.rho0());
    let params = FicPlayParams {
        tol: 1e-14,
        max_iter: 5,
        ..Default::default()
    };
    let a = fictitious_play(&p, &q, &start, &params).unwrap();
    let b = fictitious_play_steps(&p, &q, &start, &params.schedule, &params.newton, 5).unwrap();
    assert_eq!(a.rho, b.rho);
    assert_eq!(a.phi, b.phi);
}

#[test]
fn decoupled_problem_settles_after_one_response() {
    let g = Grid::unit(32, 16, 1.0).unwrap();
    let p = MfgProblem::new(0.3, DensitySpec::Uniform.sample(&g).unwrap()).unwrap();
    let q = PotentialSpec::SmoothPeriodic.sample(&g);
    let start = SpaceTimeField::static_flow(p.rho0());
    let out = fictitious_play(&p, &q, &start, &FicPlayParams::default()).unwrap();
    assert!(out.converged);
    assert_eq!(out.iterations, 2);
    assert_eq!(out.final_residual(), 0.0);
}

#[test]
fn harmonic_schedule_also_converges() {
    let (p, q) = monotone_problem();
    let start = SpaceTimeField::static_flow(p.rho0());
    let params = FicPlayParams {
        schedule: WeightSchedule::Harmonic,
        tol: 1e-4,
        max_iter: 400,
        ..Default::default()
    };
    let out = fictitious_play(&p, &q, &start, &params).unwrap();
    assert!(out.converged, "residual {}", out.final_residual());
}

#[test]
fn invalid_parameters_are_rejected() {
    let (p, q) = monotone_problem();
    let start = SpaceTimeField::static_flow(p.rho0());
    let bad = FicPlayParams {
        schedule: WeightSchedule::Fixed { delta: 1.5 },
        ..Default::default()
    };
    assert!(fictitious_play(&p, &q, &start, &bad).is_err());
    let other = SpaceTimeField::zeros(Grid::unit(8, 4, 1.0).unwrap());
    assert!(fictitious_play(&p, &q, &other, &FicPlayParams::default()).is_err());
}
