use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed MR near `{span}`: {reason}")]
    MalformedMr { span: String, reason: String },

    #[error("unknown dataset format `{0}`")]
    UnknownFormat(String),

    #[error("cannot resolve span of slot `{slot}`: {reason}")]
    SpanResolution { slot: String, reason: String },

    #[error("invalid attention: {0}")]
    InvalidAttention(String),

    #[error("dimension mismatch: attention covers {attention} source tokens, span index expects {spans}")]
    DimensionMismatch { attention: usize, spans: usize },

    #[error("slot `{0}` has no ontology entry")]
    UnknownSlot(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("stepper failed at step {step}: {source}")]
    Stepper {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("beam search produced no finished hypothesis")]
    EmptyPool,

    #[error("transport error: {0}")]
    Transport(String),

    #[error("protocol schema violation: {0}")]
    Schema(String),

    #[error("remote server error: {0}")]
    Remote(String),

    #[error("trace incomplete: no entry for prefix {prefix:?} of input {input}")]
    TraceIncomplete { input: usize, prefix: Vec<u32> },

    #[error("invalid toy model spec: {0}")]
    ToySpec(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("data error: {0}")]
    Data(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub fn with_context(self, context: impl Into<String>) -> Self {
        Error::Context { context: context.into(), source: Box::new(self) }
    }

    /// Innermost error, skipping context and step wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } | Error::Stepper { source, .. } => source.root(),
            other => other,
        }
    }
}
