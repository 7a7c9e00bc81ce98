//! Normalized residual self-attention and its infinite-depth behaviour.
//!
//! A layer maps `X ↦ X + softmax(XQ(XK)ᵀ / (√d_Q‖X‖_F²))·X`. The layer is
//! positively homogeneous of degree one, so an infinitely deep stack is
//! studied through its Frobenius-normalized iterates. Columns either align
//! with `±1ₙ/√n` (rank-one collapse) or keep a component in the orthogonal
//! complement of `1ₙ`.

mod adversarial;
mod beta;
mod deep;
mod layer;
mod sweep;

pub use adversarial::{adversarial_construction, AdversarialInstance, CharacterBasis};
pub use beta::{alpha_star, complement_basis, complement_contraction, estimate_beta, BetaEstimate, BetaOptions};
pub use deep::{
    column_deviations, deep_normalized_output, CollapseReport, DeepOptions, Extension, Securing,
    TheoryStack, COLLAPSE_TOL,
};
pub use layer::{
    attention_matrix, doubling_ratio_probe, phi_layer, technical_inequality_check, technical_inequality_lhs,
    AttnParams, DoublingProbe,
};
pub use sweep::{transition_sweep, ReplacementKind, SweepOptions, SweepRow, SweepSummary, TransitionTable};

use thiserror::Error;

use crate::numcore::NumError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error("input matrix is zero; the zero matrix is excluded from the input domain")]
    ZeroInput,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Num(#[from] NumError),
}

pub type Result<T> = std::result::Result<T, TheoryError>;
