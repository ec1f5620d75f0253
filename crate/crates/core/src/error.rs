use alloc::string::String;

/// Failure modes shared by every estimator in the crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("length mismatch: expected {expected}, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("{link} link is undefined at {value}")]
    LinkDomain { link: &'static str, value: f64 },
    #[error("covariance matrix is not positive semi-definite: {0}")]
    NotPsd(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("intensity overflow: latent value {value} exceeds 700; rescale sigma_x or the mean curve")]
    IntensityOverflow { value: f64 },
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("window size {window} exceeds the {available} available time slots")]
    WindowTooLarge { window: usize, available: usize },
    #[error("window size must be at least 2 for the multi-point fit; use up_mem for single time points")]
    WindowTooSmall,
    #[error("unknown subject index {0}")]
    UnknownSubject(usize),
    #[error("rank-deficient design: null direction concentrated on column {column} ({detail})")]
    RankDeficient { column: usize, detail: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("bootstrap failed: {failed} of {requested} resamples were degenerate")]
    BootstrapFailures { failed: usize, requested: usize },
}

pub type Result<T> = core::result::Result<T, Error>;
