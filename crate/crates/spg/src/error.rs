use thiserror::Error;

/// Errors surfaced by the block-world pipeline.
#[derive(Debug, Error)]
pub enum SpgError {
    #[error("empty head stack")]
    EmptyHeadStack,

    #[error("no objects left")]
    NoObjectsLeft,

    #[error("unknown block id {0}")]
    UnknownBlock(u32),

    #[error("unknown concept '{0}'")]
    UnknownConcept(String),

    #[error("duplicate concept '{0}'")]
    DuplicateConcept(String),

    #[error("concept '{0}' references unregistered concept '{1}'")]
    UnresolvedDependency(String, String),

    #[error("degenerate size: expression evaluated to {0}")]
    DegenerateSize(i64),

    #[error("invalid placement at step {0}")]
    InvalidPlacement(usize),

    #[error("table full")]
    TableFull,

    #[error("insufficient objects: required {required}, available {available}")]
    InsufficientObjects { required: usize, available: usize },

    #[error("parse error at {line}:{column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("cannot parse instruction: {0}")]
    Instruction(String),

    #[error("search stuck: no placement-yielding action available at root")]
    SearchStuck,

    #[error("generalization failed: empty candidate pool")]
    GeneralizationFailed,

    #[error("planning failed: best heuristic reached {0}")]
    PlanningFailed(usize),

    #[error("keyframes exhausted")]
    KeyframesExhausted,

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SpgError>;
