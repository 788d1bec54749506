use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

pub type Result<T> = core::result::Result<T, GuardrailError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GuardrailError {
    #[error("unknown item `{0}`")]
    UnknownItem(String),

    #[error("duplicate item id `{0}`")]
    DuplicateItem(String),

    #[error("item `{item}` has {got} values, expected {expected}")]
    LengthMismatch { item: String, expected: usize, got: usize },

    #[error("item `{item}` has a non-finite value at timestep {timestep}")]
    NonFinite { item: String, timestep: usize },

    #[error("need at least {needed} items, dataset has {available}")]
    TooFewItems { needed: usize, available: usize },

    #[error("requested {requested} context items but only {available} candidates are eligible")]
    NotEnoughCandidates { requested: usize, available: usize },

    #[error("invalid strategy spec: {0}")]
    InvalidSpec(String),

    #[error("strategy mismatch: expected `{expected}`, spec is `{got}`")]
    WrongStrategy { expected: &'static str, got: &'static str },

    #[error("k-means: k = {k} exceeds row count {rows}")]
    TooManyClusters { k: usize, rows: usize },

    #[error("peer provider failed: {message}")]
    Provider { message: String, diagnostics: Vec<String> },

    #[error("no consensus peer of `{focal}` is present in the dataset")]
    NoConsensusPeers { focal: String },

    #[error("series too short: need at least {needed} values, got {got}")]
    SeriesTooShort { needed: usize, got: usize },

    #[error("rank judgment for `{0}` has no estimate")]
    MissingEstimate(String),

    #[error("invalid focal criteria: {0}")]
    InvalidCriteria(String),

    #[error("only {survivors} items satisfy the focal criteria, {requested} requested ({detail})")]
    CriteriaUnsatisfiable { requested: usize, survivors: usize, detail: String },
}
