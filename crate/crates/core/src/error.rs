// SPDX-License-Identifier: MIT OR Apache-2.0

//! Crate-wide error type.

use std::path::PathBuf;

/// Everything that can go wrong while building or analysing a transport operator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("matrix is empty")]
    EmptyMatrix,

    #[error("negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("non-finite entry at ({row}, {col})")]
    NonFiniteEntry { row: usize, col: usize },

    #[error("nonzero entry outside the declared mask support at ({row}, {col})")]
    MaskViolation { row: usize, col: usize },

    #[error("ragged matrix: row {row} has {found} entries, expected {expected}")]
    RaggedRows { row: usize, expected: usize, found: usize },

    #[error("query row {0} has zero degree (fully masked query)")]
    ZeroRowDegree(usize),

    #[error("key column {0} has zero degree (never attended)")]
    ZeroColumnDegree(usize),

    #[error("operator is not square ({rows}x{cols}); cross-attention matrices are rectangular")]
    NotSquare { rows: usize, cols: usize },

    #[error("operator has zero Frobenius norm and eps = 0")]
    DegenerateNorm,

    #[error("iterative SVD did not converge after {iterations} iterations")]
    ConvergenceFailure { iterations: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cut is trivial (empty or full vertex set)")]
    TrivialCut,

    #[error("one side of the cut has zero volume")]
    ZeroVolumeSide,

    #[error("{vertices} dilation vertices exceed the exhaustive-search limit of {limit}")]
    TooLarge { vertices: usize, limit: usize },

    #[error("graph admits no non-trivial cut with positive volume on both sides")]
    TooSmall,

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("every temporal cut is degenerate")]
    AllSkipped,

    #[error("empty input list")]
    EmptyList,

    #[error("both classes must be present")]
    OneClassOnly,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("metric undefined on resamples after {attempts} attempts")]
    MetricUndefined { attempts: usize },

    #[error("bad magic bytes (expected \"ATM1\")")]
    BadMagic,

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("non-finite value at flat index {0}")]
    NonFiniteValue(usize),

    #[error("unknown dtype code {0}")]
    UnknownDtype(u8),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("manifest unreadable: {0}")]
    ManifestUnreadable(String),

    #[error("duplicate manifest entry ({0})")]
    DuplicateEntry(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
