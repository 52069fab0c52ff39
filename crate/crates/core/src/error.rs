use std::fmt;

use thiserror::Error;

/// Shape of a matrix, printed as `rows×cols`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape(pub usize, pub usize);

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}×{}", self.0, self.1)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left} vs {right}")]
    Shape {
        op: &'static str,
        left: Shape,
        right: Shape,
    },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("unusable columns (no observed values): {}", .0.join(", "))]
    UnusableColumns(Vec<String>),

    #[error("format error: {0}")]
    Format(String),

    #[error("empty vocabulary: dataset has no categorical tokens")]
    EmptyVocabulary,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("training diverged at epoch {epoch} ({phase}): non-finite loss")]
    Divergence { epoch: usize, phase: &'static str },

    #[error("config error: {0}")]
    Config(String),

    #[error("every cell of the experiment failed: {0}")]
    AllCellsFailed(String),

    #[error("leakage audit failed: {0}")]
    Leakage(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }

    pub(crate) fn shape(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        Error::Shape {
            op,
            left: Shape(left.0, left.1),
            right: Shape(right.0, right.1),
        }
    }

    /// Process exit code for the CLI, grouped by failure category.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Param(_) => 2,
            Error::Parse { .. }
            | Error::Schema(_)
            | Error::UnusableColumns(_)
            | Error::Format(_)
            | Error::Io(_)
            | Error::Csv(_) => 3,
            Error::Shape { .. }
            | Error::EmptyVocabulary
            | Error::Degenerate(_)
            | Error::Divergence { .. }
            | Error::AllCellsFailed(_)
            | Error::Leakage(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
