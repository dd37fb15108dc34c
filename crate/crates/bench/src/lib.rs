//! Problem fixtures shared by the benchmarks.

use mfgid_core::{
    fictitious_play, DensitySpec, FicPlayParams, Grid, InteractionCost, LocalCost, Measurement, MfgProblem,
    PotentialSpec, SpaceTimeField, SpatialField,
};

/// Monotone local coupling on `[-1, 1]` with a Gaussian initial density.
pub fn monotone(n_x: usize, n_t: usize) -> MfgProblem {
    let g = Grid::new(n_x, n_t, -1.0, 1.0, 1.0).expect("valid grid");
    let rho0 = DensitySpec::Gaussian { mean: 0.0, sigma: 0.2 }.sample(&g).expect("valid density");
    MfgProblem::new(0.1, rho0)
        .expect("valid problem")
        .with_interaction(InteractionCost::Local(LocalCost::Identity))
}

pub fn potential(problem: &MfgProblem) -> SpatialField {
    PotentialSpec::CubicMix.sample(problem.grid())
}

/// A converged equilibrium flow for `problem` and its potential.
pub fn equilibrium(problem: &MfgProblem) -> (SpaceTimeField, SpaceTimeField) {
    let params = FicPlayParams {
        tol: 1e-10,
        max_iter: 2000,
        ..Default::default()
    };
    let start = SpaceTimeField::static_flow(problem.rho0());
    let out = fictitious_play(problem, &potential(problem), &start, &params).expect("forward solve");
    (out.rho, out.phi)
}

pub fn twin_measurement(problem: &MfgProblem) -> Measurement {
    let (_, phi) = equilibrium(problem);
    Measurement::new(phi.level(0))
        .and_then(|m| m.with_truth(potential(problem)))
        .expect("finite measurement")
}
