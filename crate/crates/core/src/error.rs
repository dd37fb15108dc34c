use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MfgError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field does not live on the expected grid: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {what} at time level {level}, node {node}")]
    NonfiniteValue {
        what: &'static str,
        level: usize,
        node: usize,
    },

    #[error("Newton iteration did not converge at time level {level}: residual {residual:.3e} after {iterations} iterations")]
    NewtonDiverged {
        level: usize,
        residual: f64,
        iterations: usize,
    },

    #[error("linear solve failed: {0}")]
    LinearSolveFailed(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown builtin `{0}`")]
    UnknownBuiltin(String),

    #[error("Hopf-Cole variable w must be positive, found {value:.3e} at time level {level}, node {node}")]
    NonpositiveW { level: usize, node: usize, value: f64 },

    #[error("measurement-side w0 too close to zero at node {node}: {value:.3e}")]
    VanishingW0 { node: usize, value: f64 },

    #[error("fictitious play stopped after {iterations} iterations with residual {residual:.3e}")]
    MaxIterReached { iterations: usize, residual: f64 },

    #[error("inner forward solve failed at outer iteration {outer}: residual {residual:.3e}")]
    ForwardSolverFailed { outer: usize, residual: f64 },

    #[error("inverse iteration diverged at outer iteration {outer}: measurement relative error {rel_err:.3e}")]
    Diverged { outer: usize, rel_err: f64 },
}

pub type Result<T> = std::result::Result<T, MfgError>;
