use thiserror::Error;

pub type Result<T> = std::result::Result<T, QhdError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QhdError {
    #[error("grid must have even sizes >= 8, got {n1}x{n2}")]
    InvalidGrid { n1: usize, n2: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("Poisson right-hand side has nonzero mean {mean:e}")]
    NonZeroMeanRhs { mean: f64 },
    #[error("field has nonzero mean {mean:e}")]
    NonZeroMean { mean: f64 },
    #[error("density floor violated: min rho = {min_rho:e} < delta = {delta:e}")]
    VacuumBreach { min_rho: f64, delta: f64 },
    #[error("velocity is not irrotational: max |curl v| = {curl:e}")]
    NotIrrotational { curl: f64 },
    #[error("velocity has nonzero circulation: max line average = {average:e}")]
    NonZeroCirculation { average: f64 },
    #[error("Picard iteration is not contracting (differences {diffs:?})")]
    NoContraction { diffs: Vec<f64> },
    #[error("trajectory ends at t = {available}, need t = {required}")]
    HorizonTooShort { required: f64, available: f64 },
    #[error("degenerate fit data: {0}")]
    DegenerateData(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("{0}")]
    Validation(String),
    #[error("bad field file: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for QhdError {
    fn from(e: std::io::Error) -> Self {
        QhdError::Io(e.to_string())
    }
}
