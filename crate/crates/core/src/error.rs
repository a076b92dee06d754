use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate vector: {0}")]
    DegenerateVector(String),

    #[error("embedding lookup: row {row} out of range for table `{table}` with {rows} rows")]
    EmbeddingLookup { table: String, row: usize, rows: usize },

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("split infeasible: {0}")]
    SplitInfeasible(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("unknown category: {0}")]
    UnknownCategory(String),

    #[error("unknown item: {0}")]
    UnknownItem(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
