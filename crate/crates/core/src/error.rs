use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("sampling error: {0}")]
    Sampling(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("negative intensity {value} at index {index}")]
    NegativeIntensity { index: usize, value: f64 },
    #[error("insufficient samples: need at least {needed}, have {have}")]
    InsufficientSamples { needed: u64, have: u64 },
    #[error("division by zero: {0}")]
    DivisionByZero(String),
    #[error("degenerate pattern: max equals min over the window")]
    DegeneratePattern,
    #[error("invalid index range {m}..={n}")]
    InvalidRange { m: usize, n: usize },
    #[error("window of {len} samples is too small to split into bands")]
    WindowTooSmall { len: usize },
    #[error("no peak: {0}")]
    NoPeak(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("record file format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
