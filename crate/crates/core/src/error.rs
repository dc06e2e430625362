use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("alphabet error: {0}")]
    Alphabet(String),

    #[error("unknown symbol `{token}` at line {line}, column {column}")]
    Ingestion { token: String, line: usize, column: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("posterior degenerated: every component assigns zero probability to the observation")]
    DegeneratePosterior,

    #[error("cannot encode a string of zero probability (failed at symbol index {position})")]
    ZeroProbability { position: usize },

    #[error("decode depth {depth} exceeded the bound {bound}; the model does not terminate actions")]
    DepthExceeded { depth: usize, bound: usize },

    #[error("decoder already completed its action; no further bits accepted")]
    DecoderComplete,

    #[error("an action carrying zero information was decoded in stream mode")]
    ZeroInformationAction,

    #[error("bit source exhausted after {consumed} bits before the action terminated")]
    SourceExhausted { consumed: usize },

    #[error("action `{action}` is not legal in state {state}")]
    IllegalAction { state: usize, action: String },

    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("conditioning on a prefix with zero mass at state {state}, bits `{bits}`")]
    ZeroMassPrefix { state: usize, bits: String },

    #[error("instance exceeds the exact-evaluation budget: {0}")]
    Budget(String),

    #[error("format error: {0}")]
    Format(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Format(e.to_string())
    }
}
