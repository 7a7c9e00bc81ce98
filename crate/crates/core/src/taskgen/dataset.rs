use std::collections::HashSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::spec::TaskSpec;
use super::{Result, TaskError, EVAL_STREAM};
use crate::autodiff::Tape;
use crate::numcore::{Matrix, Rng};
use crate::toymodel::{bind, forward, DecoderParams};

/// One training/evaluation sequence: `target[j]` is the token after
/// `input[j]`, and only `scored` positions count towards loss and accuracy.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub task: String,
    pub input: Vec<usize>,
    pub target: Vec<usize>,
    pub scored: Vec<bool>,
}

/// Victim hidden states recorded at the output of `layer`.
#[derive(Clone, Debug, PartialEq)]
pub struct Representations {
    pub layer: usize,
    /// `(examples·seq_len) × d_model`, example-major.
    pub values: Matrix,
}

/// Examples plus, after a query pass, the victim's outputs for them. Both
/// matrices are example-major with `seq_len` rows per example.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub seq_len: usize,
    pub examples: Vec<Example>,
    pub soft_labels: Option<Matrix>,
    pub representations: Option<Representations>,
}

fn stable_label(name: &str) -> u64 {
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

fn gather_rows(m: &Matrix, examples: &[usize], per: usize) -> Matrix {
    let cols = m.cols();
    let mut data = Vec::with_capacity(examples.len() * per * cols);
    for &e in examples {
        data.extend_from_slice(&m.data()[e * per * cols..(e + 1) * per * cols]);
    }
    Matrix::new(examples.len() * per, cols, data).expect("consistent gather")
}

impl Dataset {
    pub fn new(seq_len: usize, examples: Vec<Example>) -> Self {
        Self {
            seq_len,
            examples,
            soft_labels: None,
            representations: None,
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn inputs(&self) -> Vec<Vec<usize>> {
        self.examples.iter().map(|e| e.input.clone()).collect()
    }

    pub fn input_set(&self) -> HashSet<Vec<usize>> {
        self.examples.iter().map(|e| e.input.clone()).collect()
    }

    /// No input sequence of `self` occurs in `other`.
    pub fn is_disjoint_from(&self, other: &Dataset) -> bool {
        let theirs = other.input_set();
        self.examples.iter().all(|e| !theirs.contains(&e.input))
    }

    /// Task names in order of first appearance.
    pub fn tasks(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for e in &self.examples {
            if !out.contains(&e.task) {
                out.push(e.task.clone());
            }
        }
        out
    }

    /// Examples at `indices`, with their recorded outputs.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            seq_len: self.seq_len,
            examples: indices.iter().map(|i| self.examples[*i].clone()).collect(),
            soft_labels: self.soft_labels.as_ref().map(|m| gather_rows(m, indices, self.seq_len)),
            representations: self.representations.as_ref().map(|r| Representations {
                layer: r.layer,
                values: gather_rows(&r.values, indices, self.seq_len),
            }),
        }
    }

    pub fn task_subset(&self, task: &str) -> Dataset {
        let idx: Vec<usize> = (0..self.len()).filter(|i| self.examples[*i].task == task).collect();
        self.subset(&idx)
    }

    /// Concatenation of plain (unqueried) datasets.
    pub fn concat(parts: &[Dataset]) -> Result<Dataset> {
        let seq_len = parts.first().map(|p| p.seq_len).unwrap_or(0);
        let mut examples = Vec::new();
        for p in parts {
            if p.seq_len != seq_len {
                return Err(TaskError::Dataset("cannot concatenate different sequence lengths".into()));
            }
            if p.soft_labels.is_some() || p.representations.is_some() {
                return Err(TaskError::Dataset("cannot concatenate queried datasets".into()));
            }
            examples.extend(p.examples.iter().cloned());
        }
        Ok(Dataset::new(seq_len, examples))
    }

    /// Next-token targets and scored flags of `indices`, flattened
    /// example-major.
    pub fn flat_targets(&self, indices: &[usize]) -> (Vec<usize>, Vec<bool>) {
        let mut labels = Vec::with_capacity(indices.len() * self.seq_len);
        let mut mask = Vec::with_capacity(indices.len() * self.seq_len);
        for &i in indices {
            labels.extend(&self.examples[i].target);
            mask.extend(&self.examples[i].scored);
        }
        (labels, mask)
    }

    /// One JSON object per line: task, input, target, scored and, when
    /// present, the per-position soft labels.
    pub fn write_jsonl(&self, mut out: impl Write) -> Result<()> {
        #[derive(Serialize)]
        struct Record<'a> {
            task: &'a str,
            input: &'a [usize],
            target: &'a [usize],
            scored: &'a [bool],
            #[serde(skip_serializing_if = "Option::is_none")]
            soft_labels: Option<Vec<&'a [f64]>>,
        }
        for (i, e) in self.examples.iter().enumerate() {
            let soft = self
                .soft_labels
                .as_ref()
                .map(|m| (i * self.seq_len..(i + 1) * self.seq_len).map(|r| m.row(r)).collect());
            let rec = Record {
                task: &e.task,
                input: &e.input,
                target: &e.target,
                scored: &e.scored,
                soft_labels: soft,
            };
            let line = serde_json::to_string(&rec).map_err(|e| TaskError::Io(e.to_string()))?;
            writeln!(out, "{line}").map_err(|e| TaskError::Io(e.to_string()))?;
        }
        Ok(())
    }
}

/// Draws `count` sequences, skipping any input in `exclude`.
fn draw(spec: &TaskSpec, count: usize, rng: &mut Rng, exclude: Option<&HashSet<Vec<usize>>>) -> Result<Vec<Example>> {
    spec.validate()?;
    let succ = spec.successors();
    let name = spec.name();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        if attempts > 1000 * count.max(1) {
            return Err(TaskError::Dataset(format!(
                "could not draw {count} {name} sequences outside the excluded set"
            )));
        }
        let (seq, scored) = spec.sample(&succ, rng);
        let input = seq[..spec.seq_len].to_vec();
        if exclude.is_some_and(|ex| ex.contains(&input)) {
            continue;
        }
        out.push(Example {
            task: name.clone(),
            input,
            target: seq[1..].to_vec(),
            scored,
        });
    }
    Ok(out)
}

/// `count` sequences of one task, deterministic in `rng`.
pub fn generate(spec: &TaskSpec, count: usize, rng: &mut Rng) -> Result<Dataset> {
    if count == 0 {
        return Err(TaskError::Dataset("count must be at least 1".into()));
    }
    Ok(Dataset::new(spec.seq_len, draw(spec, count, rng, None)?))
}

/// Interleaved mixture: example `i` comes from `specs[i % specs.len()]`,
/// each task drawing from its own fork of `rng`. Inputs in `exclude` are
/// rejected and redrawn.
pub fn mixture(
    specs: &[TaskSpec],
    count: usize,
    rng: &Rng,
    exclude: Option<&HashSet<Vec<usize>>>,
) -> Result<Dataset> {
    if specs.is_empty() || count == 0 {
        return Err(TaskError::Dataset("mixture needs at least one task and one example".into()));
    }
    let seq_len = specs[0].seq_len;
    if specs.iter().any(|s| s.seq_len != seq_len) {
        return Err(TaskError::Dataset("mixture tasks disagree on seq_len".into()));
    }
    let k = specs.len();
    let mut per_task: Vec<std::vec::IntoIter<Example>> = Vec::with_capacity(k);
    for (t, spec) in specs.iter().enumerate() {
        let share = count / k + usize::from(t < count % k);
        let mut r = rng.fork(stable_label(&spec.name()));
        per_task.push(draw(spec, share, &mut r, exclude)?.into_iter());
    }
    let examples = (0..count)
        .map(|i| per_task[i % k].next().expect("share sized for round robin"))
        .collect();
    Ok(Dataset::new(seq_len, examples))
}

/// Held-out benchmark set for one task: `count` examples split evenly over
/// the evaluation streams of `seeds`.
pub fn split_eval(spec: &TaskSpec, count: usize, seeds: &[u64]) -> Result<Dataset> {
    if count == 0 || seeds.is_empty() {
        return Err(TaskError::Dataset("evaluation set needs a count and at least one seed".into()));
    }
    let mut examples = Vec::with_capacity(count);
    for (i, seed) in seeds.iter().enumerate() {
        let share = count / seeds.len() + usize::from(i < count % seeds.len());
        let mut rng = Rng::new(*seed, EVAL_STREAM).fork(stable_label(&spec.name()));
        examples.extend(draw(spec, share, &mut rng, None)?);
    }
    Ok(Dataset::new(spec.seq_len, examples))
}

/// Labels `data` with the victim's logits plus Laplace(0, `noise_scale`)
/// noise, and records the noiseless residual stream after layer `tap`.
pub fn query_victim(
    victim: &DecoderParams,
    data: &Dataset,
    noise_scale: f64,
    tap: Option<usize>,
    rng: &mut Rng,
) -> Result<Dataset> {
    if data.is_empty() {
        return Err(TaskError::Dataset("empty query set".into()));
    }
    if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
        return Err(TaskError::Dataset(format!("noise scale {noise_scale} must be finite and >= 0")));
    }
    let cfg = victim.config();
    if let Some(l) = tap {
        if l > cfg.layers {
            return Err(TaskError::Dataset(format!("tap layer {l} beyond depth {}", cfg.layers)));
        }
    }
    let t = data.seq_len;
    let mut logit_rows = Vec::with_capacity(data.len() * t * cfg.vocab);
    let mut rep_rows = Vec::with_capacity(if tap.is_some() { data.len() * t * cfg.d_model } else { 0 });
    let frozen = vec![false; victim.tensors().len()];
    for chunk in data.examples.chunks(64) {
        let tokens: Vec<Vec<usize>> = chunk.iter().map(|e| e.input.clone()).collect();
        let mut tape = Tape::new();
        let bound = bind(&mut tape, victim, &frozen)?;
        let out = forward(&mut tape, victim, &bound, &tokens, None)?;
        logit_rows.extend_from_slice(tape.value(out.logits.expect("full pass")).data());
        if let Some(l) = tap {
            rep_rows.extend_from_slice(tape.value(out.hidden[l]).data());
        }
    }
    let mut soft = Matrix::new(data.len() * t, cfg.vocab, logit_rows).expect("sized by construction");
    if noise_scale > 0.0 {
        for v in soft.data_mut() {
            *v += rng.laplace(noise_scale);
        }
    }
    let mut out = data.clone();
    out.soft_labels = Some(soft);
    out.representations = tap.map(|layer| Representations {
        layer,
        values: Matrix::new(data.len() * t, cfg.d_model, rep_rows).expect("sized by construction"),
    });
    Ok(out)
}
