use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what} in {path}: {message}")]
    Parse {
        what: &'static str,
        path: PathBuf,
        message: String,
    },

    #[error("response has no words")]
    EmptyResponse,

    #[error("response has no vowel nuclei")]
    NoNuclei,

    #[error("grade {grade} has only {count} responses (need at least 3)")]
    SparseGrade { grade: String, count: usize },

    #[error("response {0} has no grade")]
    Ungraded(String),

    #[error("column mismatch: {0}")]
    ColumnMismatch(String),

    #[error("missing feature columns for group {0}")]
    MissingGroup(String),

    #[error("unknown feature group {0:?}")]
    UnknownGroup(String),

    #[error("unknown feature {0:?}")]
    UnknownFeature(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("internal node {node} has zero cover")]
    DegenerateCover { node: usize },

    #[error("brute-force Shapley enumeration refused for {0} features (limit 12)")]
    TooManyFeatures(usize),

    #[error("audio error: {0}")]
    Audio(String),

    #[error("missing audio for response {0}")]
    MissingAudio(String),

    #[error("unsatisfiable synthetic corpus spec: {0}")]
    Unsatisfiable(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(what: &'static str, path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            what,
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// Stable machine-readable tag, used for CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::EmptyResponse => "empty_response",
            Error::NoNuclei => "no_nuclei",
            Error::SparseGrade { .. } => "sparse_grade",
            Error::Ungraded(_) => "ungraded",
            Error::ColumnMismatch(_) => "column_mismatch",
            Error::MissingGroup(_) => "missing_group",
            Error::UnknownGroup(_) => "unknown_group",
            Error::UnknownFeature(_) => "unknown_feature",
            Error::Invalid(_) => "invalid",
            Error::NonFinite(_) => "non_finite",
            Error::DegenerateCover { .. } => "degenerate_cover",
            Error::TooManyFeatures(_) => "too_many_features",
            Error::Audio(_) => "audio",
            Error::MissingAudio(_) => "missing_audio",
            Error::Unsatisfiable(_) => "unsatisfiable",
        }
    }
}
