use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point is behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("candidate sampling exhausted: accepted {accepted} of {trials} draws")]
    SamplingExhausted { accepted: usize, trials: usize },

    #[error("insufficient markers: {0}")]
    InsufficientMarkers(String),

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("frame {frame}: {source}")]
    Frame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("clip `{clip}`: {source}")]
    Clip {
        clip: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
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

    pub(crate) fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_frame(self, frame: usize) -> Self {
        Error::Frame {
            frame,
            source: Box::new(self),
        }
    }

    pub fn in_clip(self, clip: impl Into<String>) -> Self {
        Error::Clip {
            clip: clip.into(),
            source: Box::new(self),
        }
    }

    /// True for failures of the numerics (degenerate geometry, exhausted
    /// sampling) as opposed to bad input or I/O.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::BehindCamera { .. }
            | Error::DegenerateGeometry(_)
            | Error::SamplingExhausted { .. } => true,
            Error::Frame { source, .. }
            | Error::Stage { source, .. }
            | Error::Clip { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
