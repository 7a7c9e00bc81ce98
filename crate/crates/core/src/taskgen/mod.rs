//! Synthetic next-token tasks over a small vocabulary, and the datasets built
//! from them: training mixtures, held-out benchmark sets, and attack sets
//! labelled by querying a victim model.
//!
//! Every sequence starts with a task marker (the top three vocabulary ids), so
//! no input is ever all-zero and a mixed-task model can tell the tasks apart.
//! Content tokens are `0..vocab-3`.

mod dataset;
mod spec;

pub use dataset::{generate, mixture, query_victim, split_eval, Dataset, Example, Representations};
pub use spec::{TaskKind, TaskSpec};

use thiserror::Error;

use crate::toymodel::ModelError;

/// Seed-stream labels keeping training, attack and evaluation draws apart.
pub const TRAIN_STREAM: u64 = 0x7472_6169_6e;
pub const ATTACK_STREAM: u64 = 0x6174_7461_636b;
pub const EVAL_STREAM: u64 = 0x6576_616c;
pub const QUERY_NOISE_STREAM: u64 = 0x6e6f_6973_65;

/// Held-out set size per benchmark.
pub const DEFAULT_EVAL_COUNT: usize = 1500;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaskError {
    #[error("invalid task: {0}")]
    Spec(String),
    #[error("invalid dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, TaskError>;
