use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: duplicate {what} `{id}`")]
    Duplicate {
        path: PathBuf,
        line: usize,
        what: &'static str,
        id: String,
    },

    #[error("invalid {what}: {message}")]
    Invalid { what: &'static str, message: String },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("topic mismatch: expected `{expected}`, found `{found}`")]
    TopicMismatch { expected: String, found: String },

    #[error("no {what} vector for `{id}`")]
    MissingVector { what: &'static str, id: String },

    #[error("stage `{stage}`{}: {source}", topic.as_ref().map(|t| format!(" (topic {t})")).unwrap_or_default())]
    Stage {
        stage: &'static str,
        topic: Option<String>,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(what: &'static str, message: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            message: message.into(),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str, topic: Option<&str>) -> Self {
        Error::Stage {
            stage,
            topic: topic.map(str::to_owned),
            source: Box::new(self),
        }
    }

    /// True for failures caused by bad input (configuration, missing or
    /// malformed files) rather than by the run itself.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Io { source, .. } => source.kind() == std::io::ErrorKind::NotFound,
            Error::Stage { source, .. } => source.is_validation(),
            Error::Parse { .. }
            | Error::Duplicate { .. }
            | Error::Invalid { .. }
            | Error::DimensionMismatch { .. }
            | Error::TopicMismatch { .. }
            | Error::MissingVector { .. } => true,
        }
    }
}
