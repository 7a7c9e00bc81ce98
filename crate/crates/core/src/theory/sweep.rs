use serde::{Deserialize, Serialize};

use super::deep::{deep_normalized_output, DeepOptions, Securing, TheoryStack, COLLAPSE_TOL};
use super::layer::AttnParams;
use super::{Result, TheoryError};
use crate::numcore::{Matrix, Rng};
use crate::parallel::parallel_map;

/// What the attacker substitutes at the secured layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplacementKind {
    /// Fresh Xavier-uniform key and query, drawn from the run seed.
    Xavier,
    /// The victim's own layer (no perturbation).
    Original,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepOptions {
    pub deep: DeepOptions,
    pub collapse_tol: f64,
    pub replacement: ReplacementKind,
    pub jobs: usize,
}

impl SweepOptions {
    /// Finite model of exactly `depth` layers.
    pub fn for_depth(depth: usize) -> Self {
        Self {
            deep: DeepOptions {
                tol: 1e-10,
                max_layers: depth,
            },
            collapse_tol: COLLAPSE_TOL,
            replacement: ReplacementKind::Xavier,
            jobs: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub seed: u64,
    pub secured_index: usize,
    pub realized_alpha: f64,
    pub max_deviation: f64,
    pub sigma_ratio: f64,
    pub collapsed: bool,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub alpha: f64,
    pub secured_index: usize,
    pub realized_alpha: f64,
    /// Mean over seeds of the largest column deviation.
    pub mean_deviation: f64,
    pub collapse_fraction: f64,
    pub all_collapsed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionTable {
    pub depth: usize,
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SweepSummary>,
}

/// Secured layer for depth fraction `alpha` of an `depth`-layer model: `⌈α·L⌉`, at least 1.
pub fn secured_index_for(alpha: f64, depth: usize) -> usize {
    ((alpha * depth as f64).ceil() as usize).clamp(1, depth)
}

/// For every `(α, seed)`, secures layer `⌈αL⌉` of the stack with a
/// replacement and records whether the normalized deep output collapses to
/// rank one. Rows come back in `(α, seed)` order.
pub fn transition_sweep(
    stack: &TheoryStack,
    x0: &Matrix,
    alphas: &[f64],
    seeds: &[u64],
    opts: &SweepOptions,
) -> Result<TransitionTable> {
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
        return Err(TheoryError::InvalidArgument(format!("alpha {a} outside (0, 1]")));
    }
    if seeds.is_empty() {
        return Err(TheoryError::InvalidArgument("at least one seed is required".into()));
    }
    let depth = stack.len();
    let (_, d, dq) = stack.dims();
    let jobs: Vec<(f64, u64)> = alphas
        .iter()
        .flat_map(|a| seeds.iter().map(move |s| (*a, *s)))
        .collect();

    let results = parallel_map(&jobs, opts.jobs, |&(alpha, seed)| -> Result<SweepRow> {
        let index = secured_index_for(alpha, depth);
        let replacement = match opts.replacement {
            ReplacementKind::Xavier => AttnParams::xavier(d, dq, &mut Rng::new(seed, 0)),
            ReplacementKind::Original => stack.layer_at(index).into_owned(),
        };
        let securing = Securing { index, replacement };
        let rep = deep_normalized_output(x0, stack, Some(&securing), &opts.deep)?;
        Ok(SweepRow {
            alpha,
            seed,
            secured_index: index,
            realized_alpha: index as f64 / depth as f64,
            max_deviation: rep.max_deviation(),
            sigma_ratio: rep.sigma_ratio,
            collapsed: rep.collapsed(opts.collapse_tol),
            converged: rep.converged,
            iterations: rep.iterations_used,
        })
    });
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;

    let summary = rows
        .chunks(seeds.len())
        .map(|chunk| {
            let k = chunk.len() as f64;
            let collapsed = chunk.iter().filter(|r| r.collapsed).count();
            SweepSummary {
                alpha: chunk[0].alpha,
                secured_index: chunk[0].secured_index,
                realized_alpha: chunk[0].realized_alpha,
                mean_deviation: chunk.iter().map(|r| r.max_deviation).sum::<f64>() / k,
                collapse_fraction: collapsed as f64 / k,
                all_collapsed: collapsed == chunk.len(),
            }
        })
        .collect();
    Ok(TransitionTable { depth, rows, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ceiling_rule() {
        assert_eq!(secured_index_for(0.05, 64), 4);
        assert_eq!(secured_index_for(0.5, 64), 32);
        assert_eq!(secured_index_for(1e-9, 64), 1);
        assert_eq!(secured_index_for(1.0, 64), 64);
    }

    #[test]
    fn rejects_alpha_outside_unit_interval() {
        let mut rng = Rng::new(0, 0);
        let stack = TheoryStack::random(3, 4, 2, 0.1, 4, &mut rng).unwrap();
        let x0 = rng.normal_matrix(3, 4);
        let opts = SweepOptions::for_depth(4);
        assert!(transition_sweep(&stack, &x0, &[0.0], &[1], &opts).is_err());
        assert!(transition_sweep(&stack, &x0, &[1.5], &[1], &opts).is_err());
        assert!(transition_sweep(&stack, &x0, &[0.5], &[], &opts).is_err());
    }
}
