use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("series is empty")]
    EmptySeries,
    #[error("interval must be positive, got {0} s")]
    NonPositiveInterval(i64),
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("candidate threshold list is empty")]
    EmptyCandidates,
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("degenerate window: standard deviation is zero")]
    DegenerateWindow,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("training span of {span_s} s is shorter than the required {required_s} s")]
    SpanTooShort { span_s: i64, required_s: i64 },
    #[error("seasonal bucket (day-of-week {day_of_week}, slot {slot}) has no observations")]
    EmptyBucket { day_of_week: u32, slot: u32 },
    #[error("insufficient history: need {required_s} s, got {got_s} s")]
    InsufficientHistory { required_s: i64, got_s: i64 },
    #[error("expected timestamp {expected}, got {got}")]
    OutOfOrder { expected: i64, got: i64 },
    #[error("stream {id}: {source}")]
    Stream {
        id: String,
        #[source]
        source: Box<Error>,
    },
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: unknown label {code}")]
    UnknownLabel { line: usize, code: String },
    #[error("cadence error at line {line}: expected timestamp {expected}, found {found}")]
    Cadence { line: usize, expected: i64, found: i64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn in_stream(self, id: impl Into<String>) -> Error {
        Error::Stream {
            id: id.into(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by input data rather than configuration.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::InvalidConfig(_) => false,
            Error::Stream { source, .. } => source.is_data_error(),
            _ => true,
        }
    }
}
