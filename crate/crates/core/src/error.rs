use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    DimensionMismatch { what: &'static str, expected: usize, actual: usize },

    /// A positive investment meets a zero clearing price.
    #[error("zero price in state {state} with public signal {public:+} while investment is positive")]
    ZeroPrice { state: usize, public: i8 },

    /// A coordinate that never moves any price has negative cost, so the
    /// objective is unbounded below along it.
    #[error("objective unbounded below: informed agent {agent} never receives signal {signal:+}")]
    Unbounded { agent: usize, signal: i8 },

    #[error("replica domain error at tau = {tau}: {reason}")]
    ReplicaDomain { tau: f64, reason: &'static str },

    #[error("{0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
