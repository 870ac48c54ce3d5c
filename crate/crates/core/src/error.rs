use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("operation needs at least {required} clusters, got {actual}")]
    TooFewClusters { required: usize, actual: usize },

    #[error("operation requires exactly {required} clusters, got {actual}")]
    ClusterCount { required: usize, actual: usize },

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("singular Newton Jacobian after {iterations} iterations (residual {residual:.3e})")]
    SingularJacobian { iterations: usize, residual: f64 },

    #[error("eigenvalue iteration did not converge after {iterations} sweeps")]
    EigenNonConvergence { iterations: usize },

    #[error("bump half-width {0} outside (0, pi)")]
    InvalidBump(f64),

    #[error("bump half-width {epsilon} is not below the minimum cluster separation {separation}")]
    EpsilonTooLarge { epsilon: f64, separation: f64 },

    #[error("cluster {0} is trivial (size 1); transverse exponent undefined")]
    TrivialCluster(usize),

    #[error("degenerate saddle phases: {0}")]
    DegenerateSaddles(String),

    #[error("non-finite state at step {step} (t = {time})")]
    NonFiniteState { step: usize, time: f64 },

    #[error("wrong stability signature: {0}")]
    WrongStabilitySignature(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
