use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("tolerance {tol:e} not reached: bracket width {width:e} at cutoff {cutoff}")]
    Tolerance { tol: f64, width: f64, cutoff: u64 },
    #[error("singular point: {0}")]
    Singular(String),
    #[error("precision error: tail bound {bound:e} exceeds {target:e}")]
    Precision { bound: f64, target: f64 },
    #[error("truncation error: {0}")]
    Truncation(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("degenerate: {0}")]
    Degenerate(String),
    #[error("unsupported combination: {0}")]
    Unsupported(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
