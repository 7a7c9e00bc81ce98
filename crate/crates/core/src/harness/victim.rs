use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::train::{evaluate, train, EvalSummary, Supervision, TrainConfig, TrainLog};
use super::{HarnessError, Result};
use crate::autodiff::{AdamConfig, Schedule};
use crate::numcore::Rng;
use crate::taskgen::{mixture, split_eval, Dataset, TaskSpec, DEFAULT_EVAL_COUNT, TRAIN_STREAM};
use crate::toymodel::{DecoderConfig, DecoderParams};

/// Per-task held-out sets. Attack, training and fine-tuning data never
/// contain one of their inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Benchmarks {
    pub specs: Vec<TaskSpec>,
    pub sets: Vec<Dataset>,
}

impl Benchmarks {
    pub fn build(specs: &[TaskSpec], count: usize, seeds: &[u64]) -> Result<Self> {
        if specs.is_empty() {
            return Err(HarnessError::Config("no benchmark tasks".into()));
        }
        let sets = specs
            .iter()
            .map(|s| split_eval(s, count, seeds))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Self {
            specs: specs.to_vec(),
            sets,
        })
    }

    pub fn names(&self) -> Vec<String> {
        self.specs.iter().map(TaskSpec::name).collect()
    }

    /// All benchmark examples in one set, task by task.
    pub fn combined(&self) -> Dataset {
        Dataset::concat(&self.sets).expect("benchmarks are plain and share seq_len")
    }

    pub fn excluded_inputs(&self) -> HashSet<Vec<usize>> {
        self.sets.iter().flat_map(|s| s.input_set()).collect()
    }
}

fn default_train_examples() -> usize {
    64_000
}
fn default_eval_count() -> usize {
    DEFAULT_EVAL_COUNT
}
fn default_eval_seeds() -> Vec<u64> {
    vec![1]
}
fn default_victim_train() -> TrainConfig {
    TrainConfig {
        epochs: 1,
        batch_size: 64,
        adam: AdamConfig {
            lr: 3e-3,
            weight_decay: 0.01,
            schedule: Schedule::Cosine {
                total_steps: 0,
                warmup_steps: 50,
                floor: 0.1,
            },
            ..AdamConfig::default()
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VictimConfig {
    #[serde(default)]
    pub model: DecoderConfig,
    #[serde(default = "TaskSpec::default_mixture")]
    pub tasks: Vec<TaskSpec>,
    #[serde(default = "default_train_examples")]
    pub train_examples: usize,
    #[serde(default = "default_victim_train")]
    pub train: TrainConfig,
    /// Held-out examples per benchmark.
    #[serde(default = "default_eval_count")]
    pub eval_count: usize,
    #[serde(default = "default_eval_seeds")]
    pub eval_seeds: Vec<u64>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for VictimConfig {
    fn default() -> Self {
        Self {
            model: DecoderConfig::default(),
            tasks: TaskSpec::default_mixture(),
            train_examples: default_train_examples(),
            train: default_victim_train(),
            eval_count: default_eval_count(),
            eval_seeds: default_eval_seeds(),
            seed: 0,
        }
    }
}

impl VictimConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        for t in &self.tasks {
            t.validate()?;
            if t.vocab != self.model.vocab || t.seq_len != self.model.seq_len {
                return Err(HarnessError::Config(format!(
                    "task {} uses vocab {} / seq_len {}, model has {} / {}",
                    t.name(),
                    t.vocab,
                    t.seq_len,
                    self.model.vocab,
                    self.model.seq_len
                )));
            }
        }
        Ok(())
    }

    pub fn benchmarks(&self) -> Result<Benchmarks> {
        self.validate()?;
        Benchmarks::build(&self.tasks, self.eval_count, &self.eval_seeds)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Victim {
    pub params: DecoderParams,
    pub benchmarks: Benchmarks,
    pub log: TrainLog,
    pub eval: EvalSummary,
}

/// Trains the victim on a task mixture disjoint from the benchmarks.
pub fn train_victim(config: &VictimConfig) -> Result<Victim> {
    let benchmarks = config.benchmarks()?;
    let data = mixture(
        &config.tasks,
        config.train_examples,
        &Rng::new(config.seed, TRAIN_STREAM),
        Some(&benchmarks.excluded_inputs()),
    )?;
    let mut params = DecoderParams::init(config.model, &mut Rng::new(config.seed, 0x696e_6974))?;
    let trainable = vec![true; params.tensors().len()];
    let log = train(
        &mut params,
        &data,
        Supervision::Labels,
        &trainable,
        &config.train,
        &mut Rng::new(config.seed, 0x7368_7566),
    )?;
    let eval = evaluate(&params, &benchmarks.combined())?;
    Ok(Victim {
        params,
        benchmarks,
        log,
        eval,
    })
}
