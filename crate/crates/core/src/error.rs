use std::path::PathBuf;

/// Errors produced by the solver and optimization layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("numeric fault in {stage}: non-finite value encountered")]
    NumericFault { stage: &'static str },

    #[error("zero-norm field cannot be normalized")]
    ZeroNorm,

    #[error("unsupported box aspect ratio {0:.3} (limit 4.5)")]
    UnsupportedAspectRatio(f64),

    #[error("kernel precompute needs about {needed_mib} MiB, limit is {limit_mib} MiB")]
    MemoryEstimate { needed_mib: u64, limit_mib: u64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("time {t} outside the control horizon [0, {horizon}]")]
    OutsideHorizon { t: f64, horizon: f64 },

    #[error("imaginary-time iteration did not converge after {steps} steps")]
    NotConverged { steps: usize, energies: Vec<f64> },

    #[error("imaginary-time iteration collapsed after {steps} steps")]
    Collapse { steps: usize, energies: Vec<f64> },

    #[error("parameter {t} outside the knot span [{start}, {end}]")]
    OutsideSpan { t: f64, start: f64, end: f64 },

    #[error("knot vectors are not nested")]
    NotNested,

    #[error("coefficient vector has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("empty history")]
    EmptyHistory,

    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
