use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {what}: {reason}")]
    InvalidValue { what: &'static str, reason: String },

    #[error("delay difference {diff_s} s is not positive")]
    NonPositiveDelayDifference { diff_s: f64 },

    #[error("no input pairs")]
    EmptyInput,

    #[error("pairs mix packet sizes: expected {expected:?}, found {found:?}")]
    MixedPacketSizes {
        expected: (u32, u32),
        found: (u32, u32),
    },

    #[error("relative error must lie in (0, 1), got {0}")]
    InvalidEta(f64),

    #[error("delay precision must be positive, got {0}")]
    ZeroPrecision(f64),

    #[error("invalid plan query: {0}")]
    InvalidQuery(String),

    #[error("malformed line at byte {offset}: {reason}")]
    MalformedLine { offset: usize, reason: String },

    #[error("no probe pairs found")]
    NoPairsFound,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("cannot bind {addr}: {source}")]
    BindFailure {
        addr: String,
        #[source]
        source: std::io::Error,
    },

    #[error("target unreachable: {0}")]
    Unreachable(String),

    #[error("clock error: {0}")]
    ClockError(String),

    #[error("bad sample record at line {line}: {reason}")]
    Csv { line: u64, reason: String },

    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidValue {
            what,
            reason: reason.into(),
        }
    }
}
