use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("incompatible grids: {0}")]
    IncompatibleGrids(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("data error: {0}")]
    Data(String),

    /// A dataset file references a sample that is missing elsewhere, or is empty.
    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("numerical failure: {message}{}", min_eigenvalue.map(|v| format!(" (min eigenvalue {v:e})")).unwrap_or_default())]
    Numerical {
        message: String,
        min_eigenvalue: Option<f64>,
    },

    #[error("unsupported evaluation: {0}")]
    UnsupportedEvaluation(String),

    #[error("unsupported model format version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
