//! Deployment strategies, the distillation attacks against them, and the
//! metrics around them: distillation ratio and its benchmark average,
//! distillation difficulty, prefix selection, customization and sweeps.

mod attack;
mod customize;
mod dd;
pub mod stats;
mod strategy;
mod sweep;
mod train;
mod victim;

pub use attack::{
    distill, ordering_check, run_attack, victim_scores, AttackConfig, AttackKind, BenchmarkScore, DistillReport,
    OrderingCheck, Replica, DEFAULT_SEEDS, ORDERING_MAX_GAP, ORDERING_MIN_MARGIN,
};
pub use customize::{customize, CustomizeConfig, CustomizeReport};
pub use dd::{compute_dd, distillation_difficulty, select_prefix, solid_select, DDReport, PrefixDifficulty, Selection, DEFAULT_EPSILON};
pub use strategy::{sap_open_layers, DeploymentStrategy, DEFAULT_DP_NOISE};
pub use sweep::{dd_dr_correlation, sweep_placement, sweep_size, Correlation, SweepRow, SweepTable};
pub use train::{evaluate, train, EvalSummary, Supervision, TaskEval, TrainConfig, TrainLog};
pub use victim::{train_victim, Benchmarks, Victim, VictimConfig};

use thiserror::Error;

use crate::autodiff::AdError;
use crate::taskgen::TaskError;
use crate::toymodel::ModelError;

/// Seed stream for replacement weights of secured layers.
pub const REINIT_STREAM: u64 = 0x7265_696e_6974;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("statistics: {0}")]
    Stats(String),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tape(#[from] AdError),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Quotes a CSV field when it holds a comma, quote or newline.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
