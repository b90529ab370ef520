use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid state tuple: field `{field}` = {value} (must be 0, 1 or 2)")]
    InvalidState { field: &'static str, value: u8 },

    #[error("state index {0} out of range [0, 243)")]
    InvalidIndex(usize),

    #[error("observation bin out of range: factor `{factor}` = {value}, cardinality {bins}")]
    InvalidObservation {
        factor: &'static str,
        value: u8,
        bins: usize,
    },

    #[error("degenerate evidence: posterior mass is zero")]
    DegenerateEvidence,

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("model format error: {0}")]
    Format(String),

    #[error("failed to read scenario {path}: {source}")]
    Scenario {
        path: PathBuf,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
