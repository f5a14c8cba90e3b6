use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty slot: a request column has no positive entry")]
    EmptySlot,
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("divergent integral: path-loss exponent must exceed 2 (got {0})")]
    DivergentIntegral(f64),
    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),
    #[error("degenerate geometry: A + C must exceed B")]
    DegenerateGeometry,
    #[error("degenerate profile: {0}")]
    DegenerateProfile(String),
    #[error("partition inconsistent with caching probabilities")]
    InconsistentPartition,
    #[error("least-squares problem is infeasible")]
    Infeasible,
    #[error("solver stalled after {0} iterations")]
    Stalled(usize),
    #[error("degenerate history: {0}")]
    DegenerateHistory(String),
    #[error("degenerate learner state")]
    DegenerateState,
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("empty dataset after filtering")]
    EmptyDataset,
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidParameter { .. } => 2,
            Error::EmptySlot
            | Error::InvalidProfile(_)
            | Error::LengthMismatch { .. }
            | Error::Parse { .. }
            | Error::EmptyDataset
            | Error::Io(_) => 3,
            _ => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
