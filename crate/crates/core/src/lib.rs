//! Numerical laboratory for semi-open model deployment.
//!
//! * [`numcore`]: dense matrices, seeded randomness, norms and SVD.
//! * [`theory`]: normalized residual attention, deep-limit collapse, and the
//!   contraction/transition quantities that go with it.
//! * [`autodiff`]: a reverse-mode tape and AdamW.
//! * [`toymodel`]: a tiny decoder-only transformer with secured-layer
//!   partitioning and checkpoints.
//! * [`taskgen`]: synthetic token tasks and victim query datasets.
//! * [`harness`]: deployment strategies, distillation attacks, distillation
//!   difficulty, SOLID selection and the ratio metrics.

pub mod numcore;
pub mod theory;
pub mod autodiff;
pub mod toymodel;
pub mod taskgen;
pub mod harness;
pub mod parallel;

pub use numcore::{Matrix, Rng};
