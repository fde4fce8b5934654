use thiserror::Error;

/// Errors produced by the estimation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain [{lo}, {hi}]: lower bound must be finite and strictly below the upper bound")]
    InvalidDomain { lo: f64, hi: f64 },

    #[error("point {u} lies outside the domain [{lo}, {hi}]")]
    OutOfDomain { u: f64, lo: f64, hi: f64 },

    #[error("time index {0} is invalid; indices start at 1")]
    InvalidTimeIndex(usize),

    #[error("invalid knot sequence: {0}")]
    InvalidKnots(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("fit did not converge; refusing to compute {0}")]
    NotConverged(&'static str),

    #[error("information matrix is singular or ill-conditioned (reciprocal condition {rcond:.3e}) in block {block}")]
    SingularInformation { block: String, rcond: f64 },

    #[error("grid budget exceeded: {points} lattice points requested, limit is {limit}")]
    GridBudget { points: u128, limit: u128 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error at line {line}: {message}")]
    Validation { line: usize, message: String },

    #[error("input file is empty: {0}")]
    EmptyInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
