use std::io;

use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range for {len} electrodes")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid electrode layout: {0}")]
    InvalidLayout(String),

    #[error("mesh generation failed: {0}")]
    Mesh(String),

    #[error("{what}[{index}] = {value} must be positive")]
    NonPositive {
        what: &'static str,
        index: usize,
        value: f64,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("electrode {electrode} has no covered boundary")]
    UnlabeledElectrode { electrode: usize },

    #[error("factorization failed at pivot {pivot} (value {value:e})")]
    Factorization { pivot: usize, value: f64 },

    #[error("linear solve stalled at relative residual {0:e}")]
    SolveAccuracy(f64),

    #[error("conformal map: {0}")]
    Conformal(String),

    #[error("inverse-crime guard: {0}")]
    Guard(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
