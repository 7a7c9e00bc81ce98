use serde::{Deserialize, Serialize};

use super::{HarnessError, Result};
use crate::autodiff::{AdamConfig, AdamState, Schedule, Tape, Target};
use crate::numcore::{Matrix, Rng};
use crate::taskgen::Dataset;
use crate::toymodel::{bind, forward, logits, DecoderParams};

fn default_batch() -> usize {
    64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// A cosine schedule with `total_steps = 0` is stretched over the run.
    #[serde(default)]
    pub adam: AdamConfig,
}

impl TrainConfig {
    pub fn steps_for(&self, examples: usize) -> u64 {
        (self.epochs * examples.div_ceil(self.batch_size.max(1))) as u64
    }
}

/// What the replica is fitted to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Supervision {
    /// Ground-truth next tokens at scored positions.
    Labels,
    /// Cross-entropy against softmax of the recorded victim logits at every
    /// position.
    SoftLabels,
    /// As `SoftLabels` but against the argmax token.
    ArgmaxLabels,
    /// MSE between the replica's residual stream at the recorded tap and the
    /// recorded representations. Never looks at logits.
    Representations,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub steps: u64,
    /// Mean batch loss per epoch.
    pub epoch_losses: Vec<f64>,
}

fn row_softmax(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    let c = m.cols();
    for row in out.data_mut().chunks_mut(c) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    out
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Minibatch AdamW over `data`. Only tensors with `trainable[i]` change;
/// all others stay bit-identical. Reshuffles every epoch from `rng`.
pub fn train(
    params: &mut DecoderParams,
    data: &Dataset,
    supervision: Supervision,
    trainable: &[bool],
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<TrainLog> {
    let n_tensors = params.tensors().len();
    if trainable.len() != n_tensors {
        return Err(HarnessError::Config(format!(
            "trainable mask has {} entries for {n_tensors} tensors",
            trainable.len()
        )));
    }
    if data.is_empty() {
        return Err(HarnessError::Config("empty training set".into()));
    }
    if config.batch_size == 0 {
        return Err(HarnessError::Config("batch_size must be at least 1".into()));
    }
    let tap = match supervision {
        Supervision::Labels => None,
        Supervision::SoftLabels | Supervision::ArgmaxLabels => {
            if data.soft_labels.is_none() {
                return Err(HarnessError::Config("soft-label training needs a queried dataset".into()));
            }
            None
        }
        Supervision::Representations => match &data.representations {
            Some(r) => Some(r.layer),
            None => return Err(HarnessError::Config("representation training needs a tap".into())),
        },
    };
    let mut log = TrainLog {
        steps: 0,
        epoch_losses: Vec::with_capacity(config.epochs),
    };
    if config.epochs == 0 || !trainable.iter().any(|t| *t) {
        return Ok(log);
    }

    let mut adam_cfg = config.adam;
    if let Schedule::Cosine {
        total_steps: 0,
        warmup_steps,
        floor,
    } = adam_cfg.schedule
    {
        adam_cfg.schedule = Schedule::Cosine {
            total_steps: config.steps_for(data.len()),
            warmup_steps,
            floor,
        };
    }
    let mut adam = AdamState::new(adam_cfg, params.tensors()).with_decay_mask(params.decay_mask())?;
    let frozen: Vec<bool> = trainable.iter().map(|t| !t).collect();
    let soft_probs = match supervision {
        Supervision::SoftLabels => data.soft_labels.as_ref().map(row_softmax),
        _ => None,
    };
    let t = data.seq_len;
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..config.epochs {
        for i in (1..order.len()).rev() {
            order.swap(i, rng.below(i + 1));
        }
        let mut total = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(config.batch_size) {
            let tokens: Vec<Vec<usize>> = batch.iter().map(|i| data.examples[*i].input.clone()).collect();
            let mut tape = Tape::new();
            let bound = bind(&mut tape, params, trainable)?;
            let out = forward(&mut tape, params, &bound, &tokens, tap)?;
            let loss = match supervision {
                Supervision::Labels => {
                    let (labels, mask) = data.flat_targets(batch);
                    tape.cross_entropy(out.logits.expect("full pass"), Target::Hard { labels, mask })?
                }
                Supervision::SoftLabels => {
                    let probs = gather(soft_probs.as_ref().expect("checked"), batch, t);
                    let rows = probs.rows();
                    tape.cross_entropy(
                        out.logits.expect("full pass"),
                        Target::Soft {
                            probs,
                            mask: vec![true; rows],
                        },
                    )?
                }
                Supervision::ArgmaxLabels => {
                    let raw = gather(data.soft_labels.as_ref().expect("checked"), batch, t);
                    let labels: Vec<usize> = (0..raw.rows()).map(|r| argmax(raw.row(r))).collect();
                    let mask = vec![true; labels.len()];
                    tape.cross_entropy(out.logits.expect("full pass"), Target::Hard { labels, mask })?
                }
                Supervision::Representations => {
                    let reps = data.representations.as_ref().expect("checked");
                    let target = gather(&reps.values, batch, t);
                    tape.mse(out.hidden[reps.layer], target)?
                }
            };
            total += tape.value(loss).get(0, 0);
            batches += 1;
            tape.backward(loss)?;
            let grads: Vec<Matrix> = bound
                .vars
                .iter()
                .zip(params.tensors())
                .zip(trainable)
                .map(|((v, p), train)| {
                    if *train {
                        tape.grad(*v)
                    } else {
                        Ok(Matrix::zeros(p.rows(), p.cols()))
                    }
                })
                .collect::<std::result::Result<_, _>>()?;
            adam.step(params.tensors_mut(), &grads, &frozen)?;
            log.steps += 1;
        }
        let mean = total / batches as f64;
        if !mean.is_finite() {
            return Err(HarnessError::Diverged(format!("epoch loss {mean}")));
        }
        log.epoch_losses.push(mean);
    }
    Ok(log)
}

fn gather(m: &Matrix, examples: &[usize], per: usize) -> Matrix {
    let cols = m.cols();
    let mut data = Vec::with_capacity(examples.len() * per * cols);
    for &e in examples {
        data.extend_from_slice(&m.data()[e * per * cols..(e + 1) * per * cols]);
    }
    Matrix::new(examples.len() * per, cols, data).expect("consistent gather")
}

/// Loss and accuracy on one task's scored positions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskEval {
    pub task: String,
    pub scored: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    /// Mean next-token cross-entropy over every scored position.
    pub loss: f64,
    /// Fraction of scored positions whose argmax is the target.
    pub accuracy: f64,
    pub tasks: Vec<TaskEval>,
}

impl EvalSummary {
    /// Unweighted mean of per-task accuracies.
    pub fn mean_task_accuracy(&self) -> f64 {
        self.tasks.iter().map(|t| t.accuracy).sum::<f64>() / self.tasks.len().max(1) as f64
    }

    pub fn task(&self, name: &str) -> Option<&TaskEval> {
        self.tasks.iter().find(|t| t.task == name)
    }
}

/// Scores a frozen model on the scored positions of `data`, pooled and per
/// task (tasks in order of first appearance).
pub fn evaluate(params: &DecoderParams, data: &Dataset) -> Result<EvalSummary> {
    if data.is_empty() {
        return Err(HarnessError::Config("empty evaluation set".into()));
    }
    let names = data.tasks();
    // (scored, loss sum, correct) per task
    let mut acc: Vec<(usize, f64, usize)> = vec![(0, 0.0, 0); names.len()];
    let t = data.seq_len;
    for chunk in data.examples.chunks(128) {
        let tokens: Vec<Vec<usize>> = chunk.iter().map(|e| e.input.clone()).collect();
        let z = logits(params, &tokens)?;
        for (k, e) in chunk.iter().enumerate() {
            let slot = names.iter().position(|n| *n == e.task).expect("listed task");
            for j in 0..t {
                if !e.scored[j] {
                    continue;
                }
                let row = z.row(k * t + j);
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                let entry = &mut acc[slot];
                entry.0 += 1;
                entry.1 += lse - row[e.target[j]];
                entry.2 += usize::from(argmax(row) == e.target[j]);
            }
        }
    }
    let total_scored: usize = acc.iter().map(|a| a.0).sum();
    if total_scored == 0 {
        return Err(HarnessError::Config("evaluation set has no scored positions".into()));
    }
    let tasks: Vec<TaskEval> = names
        .into_iter()
        .zip(&acc)
        .map(|(task, (n, loss, correct))| TaskEval {
            task,
            scored: *n,
            loss: loss / *n as f64,
            accuracy: *correct as f64 / *n as f64,
        })
        .collect();
    Ok(EvalSummary {
        loss: acc.iter().map(|a| a.1).sum::<f64>() / total_scored as f64,
        accuracy: acc.iter().map(|a| a.2).sum::<usize>() as f64 / total_scored as f64,
        tasks,
    })
}
