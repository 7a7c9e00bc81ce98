use serde::{Deserialize, Serialize};

use super::train::evaluate;
use super::{csv_field, HarnessError, Result};
use crate::numcore::Rng;
use crate::parallel::parallel_map;
use crate::taskgen::Dataset;
use crate::toymodel::{reinit_secured, DecoderParams, SecuredSet};

/// Tolerance of the prefix-selection rule.
pub const DEFAULT_EPSILON: f64 = 0.05;

const DD_STREAM: u64 = 0x6464_7265_696e;

/// Expected evaluation loss of the model after re-initializing `secured`,
/// per seed (seeds de-duplicated, order kept) and averaged.
pub fn distillation_difficulty(
    victim: &DecoderParams,
    secured: &SecuredSet,
    eval: &Dataset,
    seeds: &[u64],
    jobs: usize,
) -> Result<(f64, Vec<(u64, f64)>)> {
    let seeds = unique(seeds);
    if seeds.is_empty() {
        return Err(HarnessError::Config("distillation difficulty needs at least one seed".into()));
    }
    let losses: Vec<Result<f64>> = parallel_map(&seeds, jobs, |seed| {
        let model = reinit_secured(victim, secured, &mut Rng::new(*seed, DD_STREAM))?;
        Ok(evaluate(&model, eval)?.loss)
    });
    let per_seed: Vec<(u64, f64)> = seeds
        .iter()
        .zip(losses)
        .map(|(s, l)| l.map(|l| (*s, l)))
        .collect::<Result<_>>()?;
    let mean = per_seed.iter().map(|p| p.1).sum::<f64>() / per_seed.len() as f64;
    Ok((mean, per_seed))
}

fn unique(seeds: &[u64]) -> Vec<u64> {
    let mut out: Vec<u64> = Vec::with_capacity(seeds.len());
    for s in seeds {
        if !out.contains(s) {
            out.push(*s);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrefixDifficulty {
    /// Bottom layers re-initialized; 0 is the untouched victim.
    pub prefix: usize,
    pub mean: f64,
    pub per_seed: Vec<(u64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DDReport {
    pub depth: usize,
    pub seeds: Vec<u64>,
    pub epsilon: f64,
    pub curve: Vec<PrefixDifficulty>,
    /// Difficulty with every decoder layer re-initialized.
    pub full: f64,
    pub selected: Option<usize>,
}

impl DDReport {
    pub fn at(&self, prefix: usize) -> Option<f64> {
        self.curve.iter().find(|p| p.prefix == prefix).map(|p| p.mean)
    }

    pub fn threshold(&self) -> f64 {
        (1.0 - self.epsilon) * self.full
    }

    pub const CSV_HEADER: &'static str = "prefix,secured,seed,dd,dd_mean,dd_full,threshold,selected";

    pub fn csv_rows(&self) -> Vec<String> {
        let sel = self.selected.map(|l| l.to_string()).unwrap_or_else(|| "none".into());
        let mut rows = Vec::new();
        for p in &self.curve {
            for (seed, v) in &p.per_seed {
                rows.push(format!(
                    "{},{},{seed},{v},{},{},{},{sel}",
                    p.prefix,
                    csv_field(&SecuredSet::prefix(p.prefix).to_string()),
                    p.mean,
                    self.full,
                    self.threshold()
                ));
            }
        }
        rows
    }
}

/// Smallest `l ≥ 1` on the curve with `dd(l) ≥ (1 − ε)·full`.
pub fn select_prefix(curve: &[(usize, f64)], full: f64, epsilon: f64) -> Option<usize> {
    let threshold = (1.0 - epsilon) * full;
    let mut candidates: Vec<&(usize, f64)> = curve.iter().filter(|(l, _)| *l >= 1).collect();
    candidates.sort_by_key(|(l, _)| *l);
    candidates.into_iter().find(|(_, dd)| *dd >= threshold).map(|(l, _)| *l)
}

/// Difficulty of every bottom prefix in `prefixes` and of the whole stack,
/// plus the selected prefix.
pub fn compute_dd(
    victim: &DecoderParams,
    prefixes: &[usize],
    eval: &Dataset,
    seeds: &[u64],
    epsilon: f64,
    jobs: usize,
) -> Result<DDReport> {
    if eval.is_empty() {
        return Err(HarnessError::Config("empty evaluation set".into()));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(HarnessError::Config(format!("epsilon {epsilon} outside [0, 1]")));
    }
    let depth = victim.config().layers;
    let mut prefixes = prefixes.to_vec();
    prefixes.sort_unstable();
    prefixes.dedup();
    if let Some(bad) = prefixes.iter().find(|l| **l > depth) {
        return Err(HarnessError::Config(format!("prefix {bad} beyond depth {depth}")));
    }
    let mut curve = Vec::with_capacity(prefixes.len());
    for l in prefixes {
        let (mean, per_seed) = distillation_difficulty(victim, &SecuredSet::prefix(l), eval, seeds, jobs)?;
        curve.push(PrefixDifficulty { prefix: l, mean, per_seed });
    }
    let full = match curve.iter().find(|p| p.prefix == depth) {
        Some(p) => p.mean,
        None => distillation_difficulty(victim, &SecuredSet::all(depth), eval, seeds, jobs)?.0,
    };
    let points: Vec<(usize, f64)> = curve.iter().map(|p| (p.prefix, p.mean)).collect();
    Ok(DDReport {
        depth,
        seeds: unique(seeds),
        epsilon,
        selected: select_prefix(&points, full, epsilon),
        curve,
        full,
    })
}

/// Outcome of SOLID selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub secured: SecuredSet,
    pub prefix: Option<usize>,
    pub warning: Option<String>,
}

/// The selected bottom prefix, or the whole stack with a warning when no
/// prefix on the curve meets the threshold.
pub fn solid_select(dd: &DDReport) -> Selection {
    match dd.selected {
        Some(l) => Selection {
            secured: SecuredSet::prefix(l),
            prefix: Some(l),
            warning: None,
        },
        None => Selection {
            secured: SecuredSet::all(dd.depth),
            prefix: None,
            warning: Some(format!(
                "no prefix reaches {:.6} = (1 - {}) x {:.6}; securing all {} layers",
                dd.threshold(),
                dd.epsilon,
                dd.full,
                dd.depth
            )),
        },
    }
}
