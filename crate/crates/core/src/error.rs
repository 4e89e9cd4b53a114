use thiserror::Error;

use crate::store::EntityId;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum HcfError {
    /// A row in an ingested file could not be parsed.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    /// An entity id that is not present in the store.
    #[error("unknown entity {0:?}")]
    UnknownEntity(EntityId),

    /// An external key that is not present in the store's id map.
    #[error("unknown key {0:?}")]
    UnknownKey(String),

    /// A caller violated an API precondition (axis mismatch, same-kind
    /// pair, out-of-range feature index, wrong model direction, ...).
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// Training was asked to run on a store with no events.
    #[error("cannot train on an empty store")]
    EmptyStore,

    /// The training loss left the finite range.
    #[error("non-finite training loss in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    /// A metric that is undefined for the given input (e.g. AUC over a
    /// single class).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// An evaluation scenario that cannot be built from the given store.
    #[error("scenario {scenario} infeasible: {reason}")]
    InfeasibleScenario { scenario: String, reason: String },

    /// Invalid configuration values.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A persisted document that cannot be decoded.
    #[error("malformed document: {0}")]
    MalformedDocument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HcfError>;
