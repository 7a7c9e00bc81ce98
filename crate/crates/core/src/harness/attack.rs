use serde::{Deserialize, Serialize};

use super::strategy::DeploymentStrategy;
use super::train::{evaluate, train, Supervision, TrainConfig, TrainLog};
use super::victim::Benchmarks;
use super::{csv_field, HarnessError, Result, REINIT_STREAM};
use crate::autodiff::{AdamConfig, Schedule};
use crate::numcore::Rng;
use crate::parallel::parallel_map;
use crate::taskgen::{mixture, query_victim, ATTACK_STREAM, QUERY_NOISE_STREAM};
use crate::toymodel::{partition, reinit_secured, DecoderParams, SecuredSet};

const SHUFFLE_STREAM: u64 = 0x6469_7374;

/// Seeds of the random replacements and query sets.
pub const DEFAULT_SEEDS: [u64; 3] = [20, 42, 1234];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    /// Replacement and public parameters trained on full-model outputs.
    FtAll,
    /// Only the replacement trained on full-model outputs.
    FtClosed,
    /// Only the replacement trained to reproduce the secured module's output
    /// representation.
    Sem,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::FtAll => "FT-all",
            AttackKind::FtClosed => "FT-closed",
            AttackKind::Sem => "SEM",
        }
    }

    pub fn default_epochs(self) -> usize {
        match self {
            AttackKind::FtAll | AttackKind::FtClosed => 5,
            AttackKind::Sem => 30,
        }
    }
}

fn default_kind() -> AttackKind {
    AttackKind::FtAll
}
fn default_queries() -> usize {
    4096
}
fn default_batch() -> usize {
    64
}
fn default_seeds() -> Vec<u64> {
    DEFAULT_SEEDS.to_vec()
}
fn default_attack_adam() -> AdamConfig {
    AdamConfig {
        lr: 2e-3,
        weight_decay: 0.01,
        schedule: Schedule::Cosine {
            total_steps: 0,
            warmup_steps: 20,
            floor: 0.1,
        },
        ..AdamConfig::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    #[serde(default = "default_kind")]
    pub kind: AttackKind,
    /// Number of query sequences in the attack set.
    #[serde(default = "default_queries")]
    pub queries: usize,
    /// Defaults to 5 for the fine-tuning attacks and 30 for SEM.
    #[serde(default)]
    pub epochs: Option<usize>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_attack_adam")]
    pub adam: AdamConfig,
    /// Distil against the victim's argmax instead of its full distribution.
    #[serde(default)]
    pub hard_labels: bool,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self::new(AttackKind::FtAll)
    }
}

impl AttackConfig {
    pub fn new(kind: AttackKind) -> Self {
        Self {
            kind,
            queries: default_queries(),
            epochs: None,
            batch_size: default_batch(),
            adam: default_attack_adam(),
            hard_labels: false,
            seeds: default_seeds(),
        }
    }

    pub fn epochs(&self) -> usize {
        self.epochs.unwrap_or_else(|| self.kind.default_epochs())
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs(),
            batch_size: self.batch_size,
            adam: self.adam,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.queries == 0 {
            return Err(HarnessError::Config("attack set is empty (queries = 0)".into()));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("attack needs at least one seed".into()));
        }
        if self.batch_size == 0 {
            return Err(HarnessError::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// A distilled replica and how it was obtained.
#[derive(Clone, Debug, PartialEq)]
pub struct Replica {
    pub params: DecoderParams,
    pub tap: Option<usize>,
    pub log: TrainLog,
}

/// One attack run against `secured` with one seed. Securing nothing leaves
/// nothing to replace: the replica is the victim itself.
pub fn distill(
    victim: &DecoderParams,
    secured: &SecuredSet,
    noise_scale: f64,
    attack: &AttackConfig,
    benchmarks: &Benchmarks,
    seed: u64,
) -> Result<Replica> {
    attack.validate()?;
    let depth = victim.config().layers;
    secured.validate(depth)?;
    let tap = secured.highest_layer();
    if attack.kind == AttackKind::Sem && tap.is_none() {
        return Err(HarnessError::Config(
            "SEM needs a representation tap, but nothing is secured".into(),
        ));
    }
    if secured.is_empty() {
        return Ok(Replica {
            params: victim.clone(),
            tap,
            log: TrainLog {
                steps: 0,
                epoch_losses: vec![],
            },
        });
    }
    let part = partition(victim, secured)?;
    if attack.kind == AttackKind::FtClosed && part.unsecured.is_empty() {
        return Err(HarnessError::Config("FT-closed needs public parameters to hold fixed".into()));
    }
    let queries = mixture(
        &benchmarks.specs,
        attack.queries,
        &Rng::new(seed, ATTACK_STREAM),
        Some(&benchmarks.excluded_inputs()),
    )?;
    let sem = attack.kind == AttackKind::Sem;
    let mut answered = query_victim(
        victim,
        &queries,
        noise_scale,
        if sem { tap } else { None },
        &mut Rng::new(seed, QUERY_NOISE_STREAM),
    )?;
    let supervision = if sem {
        // The representation path never sees the model's outputs.
        answered.soft_labels = None;
        Supervision::Representations
    } else if attack.hard_labels {
        Supervision::ArgmaxLabels
    } else {
        Supervision::SoftLabels
    };
    let mut params = reinit_secured(victim, secured, &mut Rng::new(seed, REINIT_STREAM))?;
    let trainable = match attack.kind {
        AttackKind::FtAll => vec![true; params.tensors().len()],
        AttackKind::FtClosed | AttackKind::Sem => part.secured_mask(),
    };
    let log = train(
        &mut params,
        &answered,
        supervision,
        &trainable,
        &attack.train_config(),
        &mut Rng::new(seed, SHUFFLE_STREAM),
    )?;
    Ok(Replica { params, tap, log })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkScore {
    pub benchmark: String,
    pub victim_score: f64,
    /// Replica accuracy per attack seed, in seed order.
    pub distilled_scores: Vec<f64>,
    pub distilled_score: f64,
    /// Mean distilled score over victim score; absent when the victim scores
    /// zero.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistillReport {
    pub strategy: String,
    pub label: String,
    pub secured: String,
    pub attack: AttackKind,
    pub queries: usize,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub noise_scale: f64,
    pub tap: Option<usize>,
    pub benchmarks: Vec<BenchmarkScore>,
    /// Mean ratio over benchmarks with a defined ratio.
    pub adr: f64,
    /// `adr` minus the fully-secured `adr`, when that baseline was run.
    pub delta_adr: Option<f64>,
    pub flags: Vec<String>,
}

impl DistillReport {
    /// Fills `delta_adr` against a fully-secured run of the same attack.
    pub fn set_baseline(&mut self, fully_secured: &DistillReport) {
        self.delta_adr = Some(self.adr - fully_secured.adr);
    }

    pub fn benchmark(&self, name: &str) -> Option<&BenchmarkScore> {
        self.benchmarks.iter().find(|b| b.benchmark == name)
    }

    pub const CSV_HEADER: &'static str =
        "strategy,secured,attack,benchmark,seed,victim_score,distilled_score,ratio,adr,delta_adr";

    /// One row per (benchmark, seed).
    pub fn csv_rows(&self) -> Vec<String> {
        let delta = self.delta_adr.map(|d| d.to_string()).unwrap_or_default();
        let mut rows = Vec::new();
        for b in &self.benchmarks {
            for (seed, s) in self.seeds.iter().zip(&b.distilled_scores) {
                let ratio = if b.victim_score > 0.0 {
                    (s / b.victim_score).to_string()
                } else {
                    String::new()
                };
                rows.push(format!(
                    "{},{},{},{},{seed},{},{s},{ratio},{},{delta}",
                    csv_field(&self.strategy),
                    csv_field(&self.secured),
                    self.attack.name(),
                    b.benchmark,
                    b.victim_score,
                    self.adr
                ));
            }
        }
        rows
    }
}

/// Victim accuracy on every benchmark.
pub fn victim_scores(victim: &DecoderParams, benchmarks: &Benchmarks) -> Result<Vec<f64>> {
    benchmarks
        .sets
        .iter()
        .map(|set| Ok(evaluate(victim, set)?.accuracy))
        .collect()
}

/// Runs `attack` against `strategy` once per seed and scores the replicas on
/// each benchmark. Scores are averaged over seeds before dividing by the
/// victim's score.
pub fn run_attack(
    victim: &DecoderParams,
    strategy: &DeploymentStrategy,
    attack: &AttackConfig,
    benchmarks: &Benchmarks,
    jobs: usize,
) -> Result<DistillReport> {
    strategy.validate()?;
    attack.validate()?;
    let depth = victim.config().layers;
    let secured = strategy.secured_set(depth)?;
    let victim_score = victim_scores(victim, benchmarks)?;
    let per_seed: Vec<Result<(Vec<f64>, Option<usize>)>> = parallel_map(&attack.seeds, jobs, |seed| {
        let replica = distill(victim, &secured, strategy.noise_scale(), attack, benchmarks, *seed)?;
        let scores = if secured.is_empty() {
            victim_score.clone()
        } else {
            victim_scores(&replica.params, benchmarks)?
        };
        Ok((scores, replica.tap))
    });
    let mut seed_scores = Vec::with_capacity(per_seed.len());
    let mut tap = None;
    for r in per_seed {
        let (s, t) = r?;
        seed_scores.push(s);
        tap = t;
    }
    let mut flags = Vec::new();
    let mut scores = Vec::with_capacity(benchmarks.sets.len());
    for (b, name) in benchmarks.names().into_iter().enumerate() {
        let distilled: Vec<f64> = seed_scores.iter().map(|s| s[b]).collect();
        let mean = distilled.iter().sum::<f64>() / distilled.len() as f64;
        let ratio = if victim_score[b] > 0.0 {
            Some(mean / victim_score[b])
        } else {
            flags.push(format!("victim scores 0 on {name}; excluded from ADR"));
            None
        };
        scores.push(BenchmarkScore {
            benchmark: name,
            victim_score: victim_score[b],
            distilled_scores: distilled,
            distilled_score: mean,
            ratio,
        });
    }
    let ratios: Vec<f64> = scores.iter().filter_map(|s| s.ratio).collect();
    if ratios.is_empty() {
        return Err(HarnessError::Config("victim scores 0 on every benchmark".into()));
    }
    if attack.kind == AttackKind::Sem && !secured.is_bottom_prefix() {
        if let Some(t) = tap {
            flags.push(format!(
                "secured set {secured} is not a bottom prefix; representations tapped after layer {t}"
            ));
        }
    }
    Ok(DistillReport {
        strategy: strategy.to_string(),
        label: strategy.label(),
        secured: secured.to_string(),
        attack: attack.kind,
        queries: attack.queries,
        epochs: attack.epochs(),
        seeds: attack.seeds.clone(),
        noise_scale: strategy.noise_scale(),
        tap: if attack.kind == AttackKind::Sem { tap } else { None },
        adr: ratios.iter().sum::<f64>() / ratios.len() as f64,
        benchmarks: scores,
        delta_adr: None,
        flags,
    })
}

/// Required ADR margin of top-layer securing over the selected prefix.
pub const ORDERING_MIN_MARGIN: f64 = 0.15;
/// Largest tolerated ADR gap between the selected prefix and full securing.
pub const ORDERING_MAX_GAP: f64 = 0.10;

/// Whether the headline ordering holds: securing only the top layer leaks
/// clearly more than securing the selected bottom prefix, and the prefix is
/// about as protective as securing everything.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderingCheck {
    pub solid_adr: f64,
    pub darknetz_adr: f64,
    pub fully_secured_adr: f64,
    /// `darknetz_adr − solid_adr`; must be at least [`ORDERING_MIN_MARGIN`].
    pub darknetz_margin: f64,
    /// `|solid_adr − fully_secured_adr|`; must be at most [`ORDERING_MAX_GAP`].
    pub solid_gap: f64,
    pub holds: bool,
    pub flag: Option<String>,
}

pub fn ordering_check(solid_adr: f64, darknetz_adr: f64, fully_secured_adr: f64) -> OrderingCheck {
    let darknetz_margin = darknetz_adr - solid_adr;
    let solid_gap = (solid_adr - fully_secured_adr).abs();
    let mut broken = Vec::new();
    if !(darknetz_margin >= ORDERING_MIN_MARGIN) {
        broken.push(format!(
            "ADR(DarkneTZ) - ADR(SOLID) = {darknetz_margin:.4} < {ORDERING_MIN_MARGIN}"
        ));
    }
    if !(solid_gap <= ORDERING_MAX_GAP) {
        broken.push(format!("|ADR(SOLID) - ADR(Fully-secured)| = {solid_gap:.4} > {ORDERING_MAX_GAP}"));
    }
    let flag = (!broken.is_empty()).then(|| {
        format!(
            "expected ordering not reproduced ({}); small models show weak coupling between \
             distillation difficulty and distillation ratio (correlation coefficients above -0.33), \
             so the toy-scale ordering can deviate",
            broken.join("; ")
        )
    });
    OrderingCheck {
        solid_adr,
        darknetz_adr,
        fully_secured_adr,
        darknetz_margin,
        solid_gap,
        holds: flag.is_none(),
        flag,
    }
}
