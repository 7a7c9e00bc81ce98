//! A tiny single-head decoder-only transformer: the victim and the attacker's
//! replica. Parameters live in one ordered list of tensors so that secured
//! sets, optimizer state and checkpoints can all address them by index.

mod checkpoint;
mod forward;
mod params;
mod secured;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointHeader, TensorEntry, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use forward::{bind, decoder_gradcheck, forward, hidden_at, logits, Bound, ForwardOutput};
pub use params::{Block, DecoderConfig, DecoderParams, ParamId};
pub use secured::{partition, reinit_secured, Partition, SecuredBlock, SecuredSet};

use thiserror::Error;

use crate::autodiff::AdError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("token {token} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { token: usize, vocab: usize },
    #[error("sequence has length {got}, model expects {expected}")]
    SequenceLength { got: usize, expected: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid secured set: {0}")]
    SecuredSet(String),
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated: {0}")]
    Truncated(String),
    #[error("checkpoint payload has {actual} bytes but the header declares {expected}")]
    PayloadLength { expected: usize, actual: usize },
    #[error("checkpoint checksum mismatch")]
    ChecksumMismatch,
    #[error("checkpoint header: {0}")]
    Header(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Tape(#[from] AdError),
}

pub type Result<T> = std::result::Result<T, ModelError>;
