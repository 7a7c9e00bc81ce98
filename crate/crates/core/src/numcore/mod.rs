//! Dense linear algebra, seeded randomness and scalar probability helpers.

mod linalg;
mod matrix;
mod rng;
mod sum;

pub use linalg::{
    frobenius_norm, singular_values, softmax_rows, spectral_norm, PowerIteration,
    DEFAULT_POWER_MAX_ITER, DEFAULT_POWER_TOL,
};
pub use matrix::{gemm_slices, Matrix, View};
pub use rng::{laplace_sample, xavier_bound, xavier_init, Rng};
pub use sum::exact_sum;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("matrix dimensions must be positive, got {rows}x{cols}")]
    EmptyShape { rows: usize, cols: usize },
    #[error("data length {len} does not match {rows}x{cols}")]
    DataLength { rows: usize, cols: usize, len: usize },
    #[error("ragged rows")]
    Ragged,
    #[error("{op}: non-finite input")]
    NonFinite { op: &'static str },
    #[error("{0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, NumError>;
