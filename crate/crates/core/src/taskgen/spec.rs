use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Result, TaskError};
use crate::numcore::{Matrix, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    /// Triples `a, b, (a+b) mod m`; the sums are scored.
    ModularAdd,
    /// A source half followed by its reverse; the reversed half is scored.
    CopyReverse,
    /// A first-order chain whose successor is a fixed permutation with
    /// probability `peak`, otherwise uniform over the other states.
    MarkovNextToken,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::ModularAdd, TaskKind::CopyReverse, TaskKind::MarkovNextToken];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::ModularAdd => "modular-add",
            TaskKind::CopyReverse => "copy-reverse",
            TaskKind::MarkovNextToken => "markov-next-token",
        }
    }

    fn marker_offset(self) -> usize {
        match self {
            TaskKind::ModularAdd => 3,
            TaskKind::CopyReverse => 2,
            TaskKind::MarkovNextToken => 1,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub kind: TaskKind,
    #[serde(default = "default_vocab")]
    pub vocab: usize,
    #[serde(default = "default_seq_len")]
    pub seq_len: usize,
    /// Modular-add only.
    #[serde(default = "default_modulus")]
    pub modulus: usize,
    /// Markov only: seed of the successor permutation.
    #[serde(default = "default_transition_seed")]
    pub transition_seed: u64,
    /// Markov only: probability of the preferred successor.
    #[serde(default = "default_peak")]
    pub peak: f64,
}

fn default_vocab() -> usize {
    16
}
fn default_seq_len() -> usize {
    32
}
fn default_modulus() -> usize {
    5
}
fn default_transition_seed() -> u64 {
    7
}
fn default_peak() -> f64 {
    0.95
}

impl TaskSpec {
    pub fn new(kind: TaskKind) -> Self {
        Self {
            kind,
            vocab: default_vocab(),
            seq_len: default_seq_len(),
            modulus: default_modulus(),
            transition_seed: default_transition_seed(),
            peak: default_peak(),
        }
    }

    /// The three default tasks of the training mixture.
    pub fn default_mixture() -> Vec<TaskSpec> {
        TaskKind::ALL.iter().map(|k| TaskSpec::new(*k)).collect()
    }

    pub fn with_dims(self, vocab: usize, seq_len: usize) -> Self {
        Self { vocab, seq_len, ..self }
    }

    pub fn with_modulus(self, modulus: usize) -> Self {
        Self { modulus, ..self }
    }

    pub fn with_transition_seed(self, transition_seed: u64) -> Self {
        Self {
            transition_seed,
            ..self
        }
    }

    /// Benchmark name; non-default task parameters are part of it.
    pub fn name(&self) -> String {
        match self.kind {
            TaskKind::ModularAdd if self.modulus != default_modulus() => format!("modular-add-{}", self.modulus),
            TaskKind::MarkovNextToken if self.transition_seed != default_transition_seed() => {
                format!("markov-next-token-{}", self.transition_seed)
            }
            k => k.name().to_string(),
        }
    }

    /// Number of non-marker tokens.
    pub fn content_tokens(&self) -> usize {
        self.vocab.saturating_sub(3)
    }

    pub fn marker(&self) -> usize {
        self.vocab - self.kind.marker_offset()
    }

    pub fn validate(&self) -> Result<()> {
        let content = self.content_tokens();
        if content < 2 {
            return Err(TaskError::Spec(format!("vocab {} leaves fewer than 2 content tokens", self.vocab)));
        }
        if self.seq_len < 4 {
            return Err(TaskError::Spec(format!("seq_len {} is too short", self.seq_len)));
        }
        match self.kind {
            TaskKind::ModularAdd => {
                let m = self.modulus;
                if m < 2 || m > content {
                    return Err(TaskError::Spec(format!("modulus {m} outside 2..={content}")));
                }
            }
            TaskKind::CopyReverse => {
                if self.seq_len % 2 != 0 {
                    return Err(TaskError::Spec("copy-reverse needs an even seq_len".into()));
                }
            }
            TaskKind::MarkovNextToken => {
                if !(self.peak >= 0.0 && self.peak <= 1.0) {
                    return Err(TaskError::Spec(format!("peak {} outside [0, 1]", self.peak)));
                }
            }
        }
        Ok(())
    }

    /// Preferred successor of each state.
    pub fn successors(&self) -> Vec<usize> {
        let n = self.content_tokens();
        let mut rng = Rng::new(self.transition_seed, 0x6d61_726b);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.below(i + 1));
        }
        perm
    }

    /// Row-stochastic transition matrix of the markov task.
    pub fn transition_matrix(&self) -> Matrix {
        let n = self.content_tokens();
        let succ = self.successors();
        let off = (1.0 - self.peak) / (n - 1) as f64;
        Matrix::from_fn(n, n, |i, j| if succ[i] == j { self.peak } else { off })
    }

    /// One raw sequence of `seq_len + 1` tokens and the scored flags of its
    /// `seq_len` next-token targets.
    pub(crate) fn sample(&self, succ: &[usize], rng: &mut Rng) -> (Vec<usize>, Vec<bool>) {
        let t = self.seq_len;
        let content = self.content_tokens();
        let mut s = Vec::with_capacity(t + 1);
        s.push(self.marker());
        let scored: Vec<bool>;
        match self.kind {
            TaskKind::ModularAdd => {
                let m = self.modulus;
                let (mut a, mut b) = (0, 0);
                for i in 1..=t {
                    s.push(match (i - 1) % 3 {
                        0 => {
                            a = rng.below(m);
                            a
                        }
                        1 => {
                            b = rng.below(m);
                            b
                        }
                        _ => (a + b) % m,
                    });
                }
                scored = (0..t).map(|j| j % 3 == 2).collect();
            }
            TaskKind::CopyReverse => {
                let half = t / 2;
                let src: Vec<usize> = (0..half).map(|_| rng.below(content)).collect();
                s.extend(&src);
                s.extend(src.iter().rev());
                scored = (0..t).map(|j| j >= half).collect();
            }
            TaskKind::MarkovNextToken => {
                let mut state = rng.below(content);
                s.push(state);
                for _ in 1..t {
                    state = if rng.uniform() < self.peak {
                        succ[state]
                    } else {
                        let k = rng.below(content - 1);
                        if k >= succ[state] {
                            k + 1
                        } else {
                            k
                        }
                    };
                    s.push(state);
                }
                scored = (0..t).map(|j| j >= 1).collect();
            }
        }
        (s, scored)
    }
}
