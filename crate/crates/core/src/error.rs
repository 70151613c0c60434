use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("coincident endpoints")]
    CoincidentEndpoints,

    #[error("transmitter must be above the receiver (H = {tx_height} m, h = {rx_height} m)")]
    TransmitterBelowReceiver { tx_height: f64, rx_height: f64 },

    #[error("field of view must be positive, got {0} rad")]
    NonPositiveFov(f64),

    #[error("half-power angle {0} deg has no Lambertian order (need 0 < angle < 90)")]
    UndefinedLambertianOrder(f64),

    #[error("element pitch {pitch} m is larger than room dimension {dimension} m")]
    PitchTooLarge { pitch: f64, dimension: f64 },

    #[error("expected {expected} symbols, got {actual}")]
    WrongSymbolCount { expected: usize, actual: usize },

    #[error("expected {expected} samples, got {actual}")]
    WrongSampleCount { expected: usize, actual: usize },

    #[error("unestimated subcarrier {0}")]
    UnestimatedSubcarrier(usize),

    #[error("training symbol {0} is zero")]
    ZeroTrainingSymbol(usize),

    #[error("empty frame")]
    EmptyFrame,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("transmitted training has no power")]
    ZeroTrainingPower,

    #[error("estimated channel gain must be positive, got {0}")]
    NonPositiveGain(f64),

    #[error("need at least {needed} anchors, got {got}")]
    TooFewAnchors { needed: usize, got: usize },

    #[error("degenerate anchor geometry")]
    DegenerateAnchors,

    #[error("LED transfer {0}")]
    InvalidLedModel(String),

    #[error("cache: {0}")]
    Cache(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::InvalidConfig(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
