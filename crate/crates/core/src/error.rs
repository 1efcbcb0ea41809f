use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {location}: {message}")]
    Parse { location: Location, message: String },

    #[error("non-finite coordinate at {location}")]
    NonFinite { location: Location },

    #[error("color count {colors} does not match point count {points}")]
    ColorLengthMismatch { points: usize, colors: usize },

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("need at least {needed} correspondences, got {got}")]
    TooFewPairs { needed: usize, got: usize },

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("invalid transform: {0}")]
    InvalidTransform(String),

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("element selects no points")]
    EmptySelection,

    #[error("epoch `{0}` is already registered")]
    DuplicateEpoch(String),

    #[error("unknown epoch `{0}`")]
    UnknownEpoch(String),

    #[error("registry: {0}")]
    Registry(String),

    #[error("JSON error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

/// Where in an input file a parse problem was found.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Location {
    Line { path: PathBuf, line: usize },
    Byte { path: PathBuf, offset: u64 },
}

impl std::fmt::Display for Location {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Location::Line { path, line } => write!(f, "{}:{}", path.display(), line),
            Location::Byte { path, offset } => write!(f, "{} byte {}", path.display(), offset),
        }
    }
}

/// Coarse error class, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Data,
    Io,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } => ErrorClass::Io,
            _ => ErrorClass::Data,
        }
    }
}
