use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{count} entities have no type entry (first: {})", .entities.iter().take(5).cloned().collect::<Vec<_>>().join(", "))]
    MissingTypes { count: usize, entities: Vec<String> },

    #[error("entity `{0}` has conflicting type entries")]
    ConflictingType(String),

    #[error("unknown entity `{0}`")]
    UnknownEntity(String),

    #[error("unknown relation `{0}`")]
    UnknownRelation(String),

    #[error("unknown entity type `{0}`")]
    UnknownType(String),

    #[error("relation `{0}` uses a reserved name")]
    ReservedRelation(String),

    #[error("relation `{0}` collides with a generated inverse relation name")]
    InverseCollision(String),

    #[error("graph is already augmented with inverse relations")]
    AlreadyAugmented,

    #[error("need at least {needed} target triples, found {found}")]
    TooFewTriples { needed: usize, found: usize },

    #[error("graph statistics are undefined for an empty graph")]
    EmptyGraph,

    #[error("episode is terminal at step {0}")]
    TerminalState(usize),

    #[error("action index {index} out of range for {len} legal actions")]
    ActionOutOfRange { index: usize, len: usize },

    #[error("invalid metapath: {0}")]
    InvalidMetapath(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("duplicate entity `{0}` in prediction list")]
    DuplicatePrediction(String),

    #[error("non-finite value during training at batch {batch}: {detail}")]
    NonFinite { batch: usize, detail: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
