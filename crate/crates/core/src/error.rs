use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution parameters: {0}")]
    Param(String),

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("requested zero samples")]
    EmptyRequest,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("series too short: need at least {needed} values, got {got}")]
    Length { needed: usize, got: usize },

    #[error("bad data: {0}")]
    Data(String),

    #[error("detrend state mismatch: {0}")]
    State(String),

    #[error("operation not supported: {0}")]
    Capability(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("client {client_id}: {source}")]
    Client {
        client_id: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: missing column `{column}`")]
    Schema { path: PathBuf, column: String },

    #[error("gap fraction {fraction:.4} exceeds the allowed {max:.4}")]
    Quality { fraction: f64, max: f64 },

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Wraps an error with the id of the client that produced it.
    pub fn for_client(self, client_id: u32) -> Error {
        match self {
            e @ Error::Client { .. } => e,
            e => Error::Client {
                client_id,
                source: Box::new(e),
            },
        }
    }
}
