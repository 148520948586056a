use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid allocation: {0}")]
    InvalidAllocation(String),

    #[error("perception out of range: {channel}={value}")]
    PerceptionOutOfRange { channel: &'static str, value: f64 },

    #[error("parse failure ({reason}): {detail}")]
    ParseFailure { reason: ParseFailureReason, detail: String },

    #[error("transport failure ({reason}): {detail}")]
    TransportFailure { reason: TransportFailureReason, detail: String },

    #[error("duplicate capture for key {0}")]
    DuplicateCapture(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("checksum mismatch: {0}")]
    ChecksumMismatch(String),
}

/// Why a perception extraction did not yield a usable vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseFailureReason {
    /// The body did not deserialize against the expected schema.
    Schema,
    /// A deserialized component fell outside [-1, 1].
    OutOfRange,
    /// The underlying transport failed before any body arrived.
    Transport,
}

impl std::fmt::Display for ParseFailureReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParseFailureReason::Schema => write!(f, "schema"),
            ParseFailureReason::OutOfRange => write!(f, "out-of-range"),
            ParseFailureReason::Transport => write!(f, "transport"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportFailureReason {
    Timeout,
    Status,
    Connect,
}

impl std::fmt::Display for TransportFailureReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransportFailureReason::Timeout => write!(f, "timeout"),
            TransportFailureReason::Status => write!(f, "status"),
            TransportFailureReason::Connect => write!(f, "connect"),
        }
    }
}
