//! Finite-difference mean-field game solvers and potential identification.
//!
//! The forward problem (HJB/FP system on a periodic 1D grid) is solved by
//! fictitious play; the inverse problem of recovering the ambient potential
//! from the value function at time zero is solved by equilibrium correction
//! iterations and their variants.

pub mod error;
pub mod forward;
pub mod grid;
pub mod hopfcole;
pub mod inverse;
pub mod model;
pub mod pde;
mod tridiag;

pub use error::{MfgError, Result};
pub use grid::{Grid, OneSided, SpaceTimeField, SpatialField};
pub use model::{
    DensitySpec, Hamiltonian, InteractionCost, Kernel, LaxFriedrichsParams, LocalCost, MfgProblem,
    Pointwise, PotentialSpec, TerminalCost,
};
pub use forward::{
    best_response, fictitious_play, fictitious_play_steps, forward_residual, FicPlayParams, ForwardRecord,
    ForwardResult, WeightSchedule,
};
pub use hopfcole::{
    from_hopf_cole, hopf_cole_operator, linpara_update_phi, linpara_update_w, parabolic_residual,
    run_linpara_inversion, solve_w_backward, to_hopf_cole, HopfColePair,
};
pub use pde::{fp_step_matrix, hjb_residual, solve_fp, solve_hjb, NewtonParams};
pub use tridiag::CyclicTridiagonal;
pub use inverse::{
    diagnostics, eci_update, eci_update_time_derivative_form, measurement_term, rel_err, run_bri,
    run_bri_static_restart, run_eci, run_heci, Diagnostics, InverseConfig, InverseResult, InverseStatus,
    IterationRecord, LevelSummary, Measurement,
};
