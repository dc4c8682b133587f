//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by the fire modeling pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value is invalid or missing.
    #[error("configuration error: {0}")]
    Config(String),

    /// A referenced input file does not exist or cannot be opened.
    #[error("missing file {path}: {source}")]
    MissingFile {
        path: PathBuf,
        source: std::io::Error,
    },

    /// I/O failure while reading or writing an artifact.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed file contents (bad magic, truncated payload, ...).
    #[error("format error: {0}")]
    Format(String),

    /// A numeric precondition was violated (non-positive temperature,
    /// negative density, out-of-range exposure, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Array or image dimensions do not match.
    #[error("shape error: {0}")]
    Shape(String),

    /// Coordinates outside the grid or image bounds.
    #[error("index error: {0}")]
    Index(String),

    /// An operation was called in the wrong optimizer mode.
    #[error("mode error: {0}")]
    Mode(String),

    /// A numeric computation failed to produce a finite result.
    #[error("numeric error: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;
