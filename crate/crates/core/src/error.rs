use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("coefficient {value} at ({x}, {y}) is not positive and finite")]
    Coefficient { value: f64, x: f64, y: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("solver did not converge within {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("negative spectral weight {value:e} exceeds tolerance (max weight {max:e})")]
    NegativeSpectrum { value: f64, max: f64 },

    #[error("mesh hierarchy exhausted at depth {depth} for sample {key}")]
    HierarchyExhausted { depth: usize, key: String },

    #[error("non-finite statistic: {0}")]
    NonFinite(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
