//! Error type shared by the whole crate.

use thiserror::Error;

/// Errors raised by matrix construction, solvers, and file ingestion.
#[derive(Debug, Error)]
pub enum XrayError {
    /// A coordinate triple points outside the declared matrix shape.
    #[error("triple ({row}, {col}, {value}) out of range for {n_rows}x{n_cols} matrix")]
    TripleOutOfRange {
        row: usize,
        col: usize,
        value: f64,
        n_rows: usize,
        n_cols: usize,
    },

    /// An anchor column has zero squared norm, so its coordinate step is undefined.
    #[error("anchor column {index} has zero norm")]
    ZeroNormAnchor { index: usize },

    /// The same column was selected as an anchor twice.
    #[error("anchor column {index} selected twice")]
    DuplicateAnchor { index: usize },

    /// An anchor index does not address a column of the data matrix.
    #[error("anchor index {index} out of range for {n_cols} columns")]
    AnchorOutOfRange { index: usize, n_cols: usize },

    /// NaN or infinity found where a finite number is required.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// Detection was asked to score an empty candidate set.
    #[error("no exterior candidates")]
    NoCandidates,

    /// The requested factorization rank exceeds the number of columns.
    #[error("rank {rank} exceeds column count {n_cols}")]
    RankExceedsColumns { rank: usize, n_cols: usize },

    /// The data matrix has no nonzero entries.
    #[error("matrix has no nonzero entries")]
    EmptyMatrix,

    /// A configuration value violates its documented constraint.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A text file could not be parsed; reports the offending line.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// Document-term ingestion produced an empty matrix.
    #[error("empty corpus: {0}")]
    EmptyCorpus(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, XrayError>;
