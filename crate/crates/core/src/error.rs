use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("STFT configuration mismatch between operands")]
    ConfigMismatch,
    #[error("mono required (got {0} channels)")]
    MonoRequired(u16),
    #[error("unsupported sample rate {got} Hz (expected {expected} Hz, no resampling is performed)")]
    UnsupportedSampleRate { got: u32, expected: u32 },
    #[error("unsupported WAV sample format: {0}")]
    UnsupportedFormat(String),
    #[error("RIR too short: {len} taps, at least {min} required")]
    RirTooShort { len: usize, min: usize },
    #[error("insufficient dynamic range: EDC never reaches {0} dB")]
    InsufficientDynamicRange(f64),
    #[error("degenerate gradient balance: log-magnitude gradient is zero")]
    DegenerateBalance,
    #[error("insufficient decay evidence")]
    InsufficientDecay,
    #[error("insufficient calibration data: {0} pairs, at least 3 required")]
    InsufficientCalibration(usize),
    #[error("degenerate calibration design matrix")]
    DegenerateCalibration,
    #[error("solver diverged at iteration {iter}: loss {loss:.6e} exceeds 10x initial {initial:.6e}")]
    Divergence { iter: usize, loss: f64, initial: f64 },
    #[error("zero reference signal")]
    ZeroReference,
    #[error("malformed record: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Wav(#[from] hound::Error),
}
