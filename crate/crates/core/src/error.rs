use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid subsystem layout: {0}")]
    Subsystems(String),

    #[error("operator is not hermitian (deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("operator is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPositive(f64),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid POVM: {0}")]
    InvalidPovm(String),

    #[error("frame is not informationally complete (min frame eigenvalue {0:.3e})")]
    NotInformationallyComplete(f64),

    #[error("not a dual frame (residual {0:.3e})")]
    NotDual(f64),

    #[error("outcome {0} has zero probability under the ensemble")]
    ZeroProbability(usize),

    #[error("linear map is not invertible (smallest singular value {0:.3e})")]
    Singular(f64),

    #[error("state is not faithful (smallest singular value {0:.3e})")]
    NotFaithful(f64),

    #[error("wire labels do not match: {0}")]
    Labels(String),

    #[error("parameter out of range: {0}")]
    Range(String),

    #[error("support violation at index {0}: frequency is positive where probability vanishes")]
    Support(usize),

    #[error("iteration budget of {iters} exhausted (last step residual {residual:.3e})")]
    NotConverged { iters: usize, residual: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
