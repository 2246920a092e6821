use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// Where in an input file a parse problem was found. Indices are 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Location {
    Line(usize),
    Element(usize),
    Block(usize),
    Position { line: usize, column: usize },
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Line(n) => write!(f, "line {n}"),
            Location::Element(n) => write!(f, "element {n}"),
            Location::Block(n) => write!(f, "block {n}"),
            Location::Position { line, column } => write!(f, "line {line}, column {column}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: Location, message: String },

    /// One or more records failed validation. Each entry is `(location, violations)`.
    #[error("{} invalid record(s); first at {}", .0.len(), .0.first().map(|(l, _)| l.to_string()).unwrap_or_default())]
    Data(Vec<(Location, Vec<String>)>),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("provider error: {0}")]
    Provider(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
