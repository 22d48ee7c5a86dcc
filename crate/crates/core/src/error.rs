use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(#[from] GeometryError),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("decode error at byte {offset}: {reason}")]
    Decode { offset: u64, reason: String },

    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn parse(line: usize, reason: impl Into<String>) -> Self {
        Error::Parse {
            line,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("polyline needs at least 2 points, got {0}")]
    TooFewPoints(usize),

    #[error("consecutive duplicate point at index {0}")]
    DuplicatePoint(usize),

    #[error("non-finite coordinate at index {0}")]
    NonFinite(usize),

    #[error("polyline has zero arc length")]
    ZeroLength,

    #[error("resampling needs at least 2 points, got {0}")]
    ResampleCount(usize),
}
