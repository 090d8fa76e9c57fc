use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: column `{column}`: {message}")]
    Schema {
        file: String,
        line: u64,
        column: String,
        message: String,
    },

    #[error("event references unknown item id {item_id} ({file}:{line})")]
    UnknownItem {
        item_id: u32,
        file: String,
        line: u64,
    },

    #[error("degenerate labels: training data contains a single class")]
    DegenerateLabels,

    #[error("AUROC undefined: scores need at least one positive and one negative label")]
    UndefinedMetric,

    #[error("feature length mismatch: model expects {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("cannot stratify into {folds} folds: {reason}")]
    Stratification { folds: usize, reason: String },

    #[error("empty {side} split for test year {year}")]
    EmptySplit { side: &'static str, year: i32 },

    #[error("malformed artifact: {0}")]
    Artifact(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
