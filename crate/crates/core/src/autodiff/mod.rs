//! Reverse-mode differentiation over the dense matrix operations used by the
//! toy decoder, plus AdamW.
//!
//! A [`Tape`] records every value as it is computed; [`Tape::backward`] walks
//! the nodes in reverse insertion order, which is a valid reverse topological
//! order because a node can only reference nodes created before it.

mod adam;
pub mod gradcheck;
mod tape;

pub use adam::{AdamConfig, AdamState, Schedule};
pub use tape::{Target, Tape, Var};

use thiserror::Error;

use crate::numcore::NumError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("backward needs a 1x1 loss, got {0:?}")]
    NonScalarLoss((usize, usize)),
    #[error("backward already ran on this tape; call reset_grads first")]
    AlreadyBackpropagated,
    #[error("backward has not run on this tape")]
    NoGradients,
    #[error("{op}: index {index} out of range for {bound}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("{0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Num(#[from] NumError),
}

pub type Result<T> = std::result::Result<T, AdError>;
