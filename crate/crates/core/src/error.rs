use std::path::PathBuf;

use crate::schemes::CalibrationCurve;

/// Error type shared by every module of the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("signal too short: {len} samples, need at least {needed}")]
    SignalTooShort { len: usize, needed: usize },

    #[error("STFT parameters do not satisfy constant overlap-add: window {window}, hop {hop}")]
    InvalidOverlap { window: usize, hop: usize },

    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),

    #[error("malformed WAV file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("unsupported WAV encoding in {path}: {reason}")]
    UnsupportedEncoding { path: PathBuf, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("SNR undefined: reference signal has zero power")]
    UndefinedSnr,

    #[error("rate undefined: {0} has a zero denominator")]
    UndefinedRate(&'static str),

    #[error("t-test undefined: degenerate variance")]
    DegenerateVariance,

    #[error("invalid watermark bits: {0}")]
    InvalidBits(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("scheme `{0}` does not expose gradients")]
    GradientUnavailable(String),

    #[error("no threshold in the grid achieves FNR < 0.01 and FPR < 0.01")]
    CalibrationInfeasible { curve: CalibrationCurve },

    #[error("external scheme adapter failed: {message}; stderr: {stderr}")]
    Adapter { message: String, stderr: String },

    #[error("external scheme protocol error: {0}")]
    Protocol(String),

    #[error("codec `{0}` is not configured")]
    CodecUnavailable(String),

    #[error("codec command failed: {message}; stderr: {stderr}")]
    Codec { message: String, stderr: String },

    #[error("malformed codec template `{template}`: {reason}")]
    Template { template: String, reason: String },

    #[error("{kind} parameter {value} outside the allowed range [{lo}, {hi}]")]
    Range {
        kind: String,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("pipeline stage {stage} failed: {source}")]
    Pipeline {
        stage: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("no evading initializer found on the noise ladder")]
    InitializationFailed,

    #[error("oracle error: {0}")]
    Oracle(String),

    #[error("query budget of {0} exhausted")]
    BudgetExhausted(usize),

    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },

    #[error("quality command failed: {0}")]
    QualityTool(String),

    #[error("report has no rows")]
    EmptyReport,

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
