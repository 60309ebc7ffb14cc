use thiserror::Error;

/// Errors produced by the geometry, algebra and flow pipelines.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid caller-supplied dimensions, bounds or parameters.
    #[error("configuration: {0}")]
    Config(String),

    /// Bad sampled data (non-finite values and similar).
    #[error("data: {0}")]
    Data(String),

    /// An operation was invoked before its inputs were computed.
    #[error("state: {0}")]
    State(String),

    /// Argument outside the mathematical domain of an operation.
    #[error("domain: {0}")]
    Domain(String),

    /// An internal quantity failed a consistency check it must satisfy.
    #[error("internal consistency: {0}")]
    Consistency(String),

    /// Structurally valid input on which the requested quantity is undefined.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// The evolution left the representable regime.
    #[error("flow blow-up: {0}")]
    BlowUp(String),
}

pub type Result<T> = std::result::Result<T, Error>;
