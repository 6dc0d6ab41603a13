use thiserror::Error;

/// Errors produced anywhere in the solver stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {0})")]
    NotPositiveDefinite(usize),
    #[error("matrix is singular (column {0})")]
    Singular(usize),
    #[error("diagonal block solve is ill-conditioned (relative residual {0:.3e})")]
    IllConditioned(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("sparsity pattern is not structurally symmetric at ({0}, {1})")]
    AsymmetricPattern(usize, usize),
    #[error("diagonal block of cluster {0} could not be factorized")]
    SingularDiagonal(usize),
    #[error("coarse level failed to shrink (level {level}: {coarse} of {dofs} dofs kept)")]
    LevelOverflow { level: usize, dofs: usize, coarse: usize },
    #[error("iteration limit reached after {0} iterations")]
    MaxIterations(usize),
    #[error("conjugate gradient breakdown: operator is not positive definite")]
    BreakdownIndefinite,
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported matrix market field: {0}")]
    UnsupportedField(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("invalid factor file: {0}")]
    Format(String),
    #[error("deadlock detected in simulated runtime: {0}")]
    DeadlockDetected(String),
    #[error("at least two samples are required")]
    InsufficientSamples,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
