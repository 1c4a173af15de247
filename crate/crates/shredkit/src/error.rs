//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("SVD failed to converge after {sweeps} sweeps (off-diagonal {off:e})")]
    Convergence { sweeps: usize, off: f64 },

    #[error("ill-conditioned system (condition estimate {cond:e})")]
    IllConditioned { cond: f64 },

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid state: {0}")]
    State(String),

    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("degenerate truth snapshot at index {index} (zero norm)")]
    DegenerateTruth { index: usize },

    #[error("all trials failed for cell {cell}: seeds {seeds:?}")]
    CellFailure { cell: String, seeds: Vec<u64> },

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Single-word machine-parsable category, used by the CLI exit path.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::Convergence { .. } => "convergence",
            Error::IllConditioned { .. } => "ill-conditioned",
            Error::Shape { .. } => "shape",
            Error::State(_) => "state",
            Error::TrainingDiverged { .. } => "training-diverged",
            Error::DegenerateTruth { .. } => "degenerate-truth",
            Error::CellFailure { .. } => "cell-failure",
            Error::Format { .. } => "format",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }
}
