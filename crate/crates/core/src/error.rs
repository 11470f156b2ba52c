use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),
    #[error("unsupported channel count {0}: only mono input is accepted")]
    UnsupportedChannels(u16),
    #[error("unsupported sample format: {0} (expected 16-bit integer PCM)")]
    UnsupportedDepth(String),
    #[error("signal too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("insufficient data: {frames} frames cannot support {k} clusters")]
    InsufficientData { frames: usize, k: usize },
    #[error("unit index {index} out of range for table of size {size}")]
    Lookup { index: usize, size: usize },
    #[error("degenerate embedding: {0}")]
    Degenerate(String),
    #[error("correlation undefined: zero variance after alignment")]
    UndefinedCorrelation,
    #[error("sample rate mismatch: expected {expected} Hz, got {got} Hz")]
    SampleRate { expected: u32, got: u32 },
    #[error("schema error: {0}")]
    Schema(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Param(msg.into()))
}
