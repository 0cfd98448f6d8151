use thiserror::Error;

pub type Result<T> = std::result::Result<T, RinoError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RinoError {
    #[error("matrix is not positive definite (failed after jitter {jitter:e})")]
    NotPositiveDefinite { jitter: f64 },
    #[error("iteration did not converge after {iterations} sweeps")]
    ConvergenceFailure { iterations: usize },
    #[error("non-finite gradient encountered at optimizer step {step}")]
    NaNGradient { step: u64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("degenerate basis: mean square {mean_square:e} is below threshold")]
    DegenerateBasis { mean_square: f64 },
    #[error("point {point:?} lies outside the domain box")]
    DomainViolation { point: Vec<f64> },
    #[error("fingerprint mismatch: expected {expected}, found {found}")]
    FingerprintMismatch { expected: String, found: String },
    #[error("query point {point:?} is not on the stored trunk grid")]
    OffGridQuery { point: Vec<f64> },
    #[error("signal is identically zero; relative error undefined")]
    ZeroSignal,
    #[error("sample {index} has no output embedding")]
    MissingGamma { index: usize },
    #[error("requested {requested} modes but numerical rank is {rank}")]
    RankDeficient { requested: usize, rank: usize },
    #[error("grid is not sorted in increasing order")]
    UnsortedGrid,
    #[error("Newton iteration diverged (last residual {residual:e} after {iterations} iterations)")]
    NewtonDiverged { residual: f64, iterations: usize },
    #[error("CFL condition violated: Courant number {courant:.3} exceeds 1")]
    CflViolation { courant: f64 },
    #[error("invalid range: {0}")]
    RangeError(String),
    #[error("row {0} has no observed entries")]
    EmptyRow(usize),
    #[error("column {0} has no observed entries")]
    EmptyColumn(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("serialization failed: {0}")]
    Serialization(String),
}

impl From<serde_json::Error> for RinoError {
    fn from(e: serde_json::Error) -> Self {
        RinoError::Serialization(e.to_string())
    }
}
