use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("{path}:{line}:{column}: {reason}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        reason: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image {path}: {reason}")]
    Image { path: PathBuf, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dataset has no frames")]
    EmptyDataset,

    #[error("empty positive set: no in-subset non-ignore annotations")]
    EmptyPositiveSet,

    #[error("no true positives at the chosen operating point")]
    NoTruePositives,

    #[error("recall {requested} unreachable; detector reaches at most {max_recall}")]
    RecallUnreachable { requested: f64, max_recall: f64 },

    #[error("keyframe track is empty")]
    EmptyTrack,

    #[error("frame universe mismatch: {0}")]
    FrameMismatch(String),

    #[error("patch too small: {width}x{height}, need at least 3x3")]
    PatchTooSmall { width: usize, height: usize },
}

impl Error {
    /// Short stable identifier used in machine-readable CLI error lines.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Geometry(_) => "geometry",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
            Error::Image { .. } => "image",
            Error::Config(_) => "config",
            Error::EmptyDataset => "empty-dataset",
            Error::EmptyPositiveSet => "empty-positive-set",
            Error::NoTruePositives => "no-true-positives",
            Error::RecallUnreachable { .. } => "recall-unreachable",
            Error::EmptyTrack => "empty-track",
            Error::FrameMismatch(_) => "frame-mismatch",
            Error::PatchTooSmall { .. } => "patch-too-small",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(
        path: impl std::fmt::Display,
        line: usize,
        column: usize,
        reason: impl Into<String>,
    ) -> Self {
        Error::Parse {
            path: path.to_string(),
            line,
            column,
            reason: reason.into(),
        }
    }
}
