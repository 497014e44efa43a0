use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("depth {0} is outside [0, 1]")]
    DepthOutOfRange(f64),

    #[error("point is not strictly interior: {0}")]
    NotInterior(String),

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("grid too large: {0} evaluations")]
    GridTooLarge(u128),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
