use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Computation,
    Io,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Validation => 2,
            ErrorKind::Computation => 3,
            ErrorKind::Io => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("invalid snapshot record: {0}")]
    Record(String),

    #[error("duplicate topic {topic:?} in snapshot {country}/{date}")]
    DuplicateTopic {
        country: String,
        date: String,
        topic: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("no snapshot records found under {0}")]
    EmptyCorpus(PathBuf),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("http error: {0}")]
    Http(String),

    #[error("snapshot has {available} mentions, fewer than k = {k}")]
    InsufficientDepth { available: usize, k: usize },

    #[error("country {0} is not in the filtered dataset")]
    NotEligible(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("rank-deficient design; dependent columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("model is not identifiable: {0}")]
    Unidentifiable(String),

    #[error("optimizer did not converge after {iterations} iterations (last deviances: {trace:?})")]
    NonConvergence { iterations: usize, trace: Vec<f64> },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("log of non-positive value {value} in column {column} (row {row})")]
    LogDomain {
        row: usize,
        column: String,
        value: f64,
    },

    #[error("join produced no rows; unmatched keys: {}", unmatched.join(", "))]
    EmptyJoin { unmatched: Vec<String> },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Parse { .. }
            | Error::Record(_)
            | Error::DuplicateTopic { .. }
            | Error::Validation(_)
            | Error::EmptyCorpus(_)
            | Error::NotEligible(_)
            | Error::Shape(_)
            | Error::LogDomain { .. }
            | Error::EmptyJoin { .. }
            | Error::Csv(_)
            | Error::Json(_)
            | Error::Config(_) => ErrorKind::Validation,
            Error::Io { .. } | Error::Http(_) => ErrorKind::Io,
            Error::InsufficientDepth { .. }
            | Error::Degenerate(_)
            | Error::RankDeficient { .. }
            | Error::Unidentifiable(_)
            | Error::NonConvergence { .. }
            | Error::InsufficientData(_) => ErrorKind::Computation,
            Error::Stage { source, .. } => source.kind(),
        }
    }
}
