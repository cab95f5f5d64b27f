//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

/// Errors produced by the relcpd library.
#[derive(Debug, Error)]
pub enum Error {
    /// I/O failure, annotated with the path that was being accessed.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A CSV cell or row could not be parsed. `row` is the 1-based data row
    /// (header excluded).
    #[error("parse error at data row {row}: {message}")]
    Parse { row: usize, message: String },

    /// A CSV row had a different number of fields than the first row.
    #[error("ragged input: data row {row} has {got} fields, expected {expected}")]
    RaggedRow {
        row: usize,
        got: usize,
        expected: usize,
    },

    /// The input has no rows or no columns.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// A column consists entirely of missing values, so it cannot be
    /// interpolated.
    #[error("column {column} has no observed values; cannot interpolate")]
    FullyMissingColumn { column: usize },

    /// A caller-supplied argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The requested statistic is identically zero or undefined for the
    /// given split/trimming combination.
    #[error("degenerate statistic: {0}")]
    Degenerate(String),

    /// A persisted quantile table does not match the requested parameters.
    #[error("quantile table mismatch: {0}")]
    TableMismatch(String),

    /// A required quadrature atom is missing from a sequential statistic's
    /// λ-grid.
    #[error("λ-grid is missing the quadrature atom {atom}")]
    MissingAtom { atom: f64 },
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wrap an [`std::io::Error`] together with the offending path.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
