//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes of tensor operands do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// An operation was called outside its contract (empty list, non-scalar
    /// loss, missing gradient, ...).
    #[error("contract violation: {0}")]
    Contract(String),
    /// Invalid numeric input (non-finite values, non-orthonormal rotation).
    #[error("invalid input: {0}")]
    Input(String),
    /// Degenerate geometry (camera not intersecting the ground plane, ...).
    #[error("geometry error: {0}")]
    Geometry(String),
    /// Inconsistent or unparsable configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// On-disk format violation (bad magic, version, CRC, truncation).
    #[error("format error: {0}")]
    Format(String),
    /// Metric undefined for the given inputs (e.g. empty valid mask).
    #[error("metric error: {0}")]
    Metric(String),
    /// A checked function evaluated to a non-finite value.
    #[error("evaluation error: {0}")]
    Eval(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
