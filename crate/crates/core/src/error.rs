use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum FssError {
    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid mismatch: expected {expected} interior nodes, got {found}")]
    GridMismatch { expected: usize, found: usize },

    #[error("not an interior-positive field (node {node} has value {value})")]
    NotPositive { node: usize, value: f64 },

    #[error("solver did not converge after {iterations} iterations (gradient max-norm {grad_norm:e})")]
    NonConvergence {
        iterations: usize,
        grad_norm: f64,
        last_iterate: Vec<f64>,
    },

    #[error("fixed-point stagnation at level n={level}: step {step:e} after {sweeps} sweeps")]
    FixedPointStagnation { level: u64, sweeps: usize, step: f64 },

    #[error("\u{3bc} estimate undefined for this \u{3c9}: log functional of the \u{3b1}=1 solution is -inf")]
    MuUndefined,

    #[error("use estimate_mu_direct for alpha = 1")]
    AlphaIsOne,

    #[error("\u{3b8} too small: b = {b} must exceed 1")]
    ThetaTooSmall { b: f64 },

    #[error("not a Stampacchia family: {0}")]
    NotStampacchia(String),

    #[error("quadrature failed to reach tolerance {tol:e} on [{a}, {b}]")]
    Quadrature { a: f64, b: f64, tol: f64 },

    #[error("config error at {path}: {reason}")]
    Config { path: String, reason: String },

    #[error("parse error at line {line}, column {column}: {msg}")]
    Parse { line: usize, column: usize, msg: String },

    #[error("corrupt solution file: {0}")]
    CorruptSolution(String),

    #[error("unsupported solution format version {found} (supported: {supported:?})")]
    UnsupportedVersion { found: u32, supported: Vec<u32> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, FssError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> FssError {
    FssError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
