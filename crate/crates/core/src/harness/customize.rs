use serde::{Deserialize, Serialize};

use super::strategy::DeploymentStrategy;
use super::train::{evaluate, train, Supervision, TrainConfig};
use super::{HarnessError, Result};
use crate::autodiff::{AdamConfig, Schedule};
use crate::numcore::Rng;
use crate::taskgen::{mixture, split_eval, TaskKind, TaskSpec, DEFAULT_EVAL_COUNT, TRAIN_STREAM};
use crate::toymodel::{partition, DecoderParams, SecuredSet};

fn default_downstream() -> TaskSpec {
    TaskSpec::new(TaskKind::MarkovNextToken).with_transition_seed(11)
}
fn default_examples() -> usize {
    4096
}
fn default_eval_count() -> usize {
    DEFAULT_EVAL_COUNT
}
fn default_customize_train() -> TrainConfig {
    TrainConfig {
        epochs: 3,
        batch_size: 64,
        adam: AdamConfig {
            lr: 2e-3,
            weight_decay: 0.01,
            schedule: Schedule::Cosine {
                total_steps: 0,
                warmup_steps: 20,
                floor: 0.1,
            },
            ..AdamConfig::default()
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomizeConfig {
    /// Must differ from every task the victim was trained on.
    #[serde(default = "default_downstream")]
    pub downstream: TaskSpec,
    #[serde(default = "default_examples")]
    pub train_examples: usize,
    #[serde(default = "default_customize_train")]
    pub train: TrainConfig,
    #[serde(default = "default_eval_count")]
    pub eval_count: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for CustomizeConfig {
    fn default() -> Self {
        Self {
            downstream: default_downstream(),
            train_examples: default_examples(),
            train: default_customize_train(),
            eval_count: default_eval_count(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CustomizeReport {
    pub strategy: String,
    pub secured: String,
    pub downstream: String,
    /// Held-out accuracy of the untouched model.
    pub frozen_accuracy: f64,
    /// Held-out accuracy after fine-tuning the public parameters.
    pub accuracy: f64,
    pub trained_parameters: usize,
    pub steps: u64,
}

/// Fine-tunes the public parameters of the deployed model on a downstream
/// task. Secured layers keep the vendor's weights and stay frozen; when
/// every decoder layer is secured nothing is tuned and the frozen accuracy is
/// reported.
pub fn customize(
    victim: &DecoderParams,
    strategy: &DeploymentStrategy,
    config: &CustomizeConfig,
    pretraining: &[TaskSpec],
) -> Result<CustomizeReport> {
    let spec = config.downstream;
    spec.validate()?;
    if pretraining.contains(&spec) {
        return Err(HarnessError::Config(format!(
            "downstream task {} is part of the pretraining mixture",
            spec.name()
        )));
    }
    let depth = victim.config().layers;
    let secured = strategy.secured_set(depth)?;
    let eval = split_eval(&spec, config.eval_count, &[config.seed])?;
    let frozen_accuracy = evaluate(victim, &eval)?.accuracy;
    let locked = secured == SecuredSet::all(depth);
    let mut report = CustomizeReport {
        strategy: strategy.to_string(),
        secured: secured.to_string(),
        downstream: spec.name(),
        frozen_accuracy,
        accuracy: frozen_accuracy,
        trained_parameters: 0,
        steps: 0,
    };
    if locked {
        return Ok(report);
    }
    let part = partition(victim, &secured)?;
    let trainable: Vec<bool> = part.secured_mask().iter().map(|s| !s).collect();
    let data = mixture(
        &[spec],
        config.train_examples,
        &Rng::new(config.seed, TRAIN_STREAM),
        Some(&eval.input_set()),
    )?;
    let mut params = victim.clone();
    let log = train(
        &mut params,
        &data,
        Supervision::Labels,
        &trainable,
        &config.train,
        &mut Rng::new(config.seed, 0x6375_7374),
    )?;
    report.accuracy = evaluate(&params, &eval)?.accuracy;
    report.trained_parameters = part.count(victim, false);
    report.steps = log.steps;
    Ok(report)
}
