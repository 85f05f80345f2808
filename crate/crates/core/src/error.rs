use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the toolkit can report. Variant names mirror the stable
/// error codes emitted by the CLI (see [`Error::code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("stream holds {available} samples after the offset, fewer than one trace of {needed}")]
    EmptyStream { available: usize, needed: usize },
    #[error("bundle format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("label {label} exceeds truncation {truncation}")]
    TruncationOverflow { label: usize, truncation: usize },
    #[error("every label is UNCLASSIFIED")]
    AllUnclassified,
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("no histogram peak survives the prominence filter")]
    NoPeaks,
    #[error("target repetition rate {target} Hz is not higher than calibration rate {calib} Hz")]
    RateNotHigher { target: f64, calib: f64 },
    #[error("need more than {history_depth} traces to build overlapped history, got {available}")]
    InsufficientTraces { available: usize, history_depth: usize },
    #[error("k = {k} exceeds the {n_train} training instances")]
    KTooLarge { k: usize, n_train: usize },
    #[error("need at least {needed} points, got {available}")]
    TooFewPoints { available: usize, needed: usize },
    #[error("need at least two probes with distinct mean photon numbers, got {0}")]
    TooFewProbes(usize),
    #[error("heralding on idler photon number {0} selects no events")]
    EmptyHerald(usize),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable upper-case code used in machine-readable error output.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "INVALID_ARGUMENT",
            Error::EmptyStream { .. } => "EMPTY_STREAM",
            Error::Format(_) => "FORMAT_ERROR",
            Error::Io(_) => "IO_ERROR",
            Error::TruncationOverflow { .. } => "TRUNCATION_OVERFLOW",
            Error::AllUnclassified => "ALL_UNCLASSIFIED",
            Error::LengthMismatch { .. } => "LENGTH_MISMATCH",
            Error::NoPeaks => "NO_PEAKS",
            Error::RateNotHigher { .. } => "RATE_NOT_HIGHER",
            Error::InsufficientTraces { .. } => "INSUFFICIENT_TRACES",
            Error::KTooLarge { .. } => "K_TOO_LARGE",
            Error::TooFewPoints { .. } => "TOO_FEW_POINTS",
            Error::TooFewProbes(_) => "TOO_FEW_PROBES",
            Error::EmptyHerald(_) => "EMPTY_HERALD",
            Error::Degenerate(_) => "DEGENERATE",
            Error::Json(_) => "FORMAT_ERROR",
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
