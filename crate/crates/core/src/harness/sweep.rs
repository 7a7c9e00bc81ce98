use serde::{Deserialize, Serialize};

use super::attack::{run_attack, AttackConfig, DistillReport};
use super::customize::{customize, CustomizeConfig};
use super::dd::distillation_difficulty;
use super::stats::{pearson, spearman};
use super::strategy::DeploymentStrategy;
use super::victim::Benchmarks;
use super::{csv_field, HarnessError, Result};
use crate::toymodel::{DecoderParams, SecuredSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// First secured layer (placement sweep) or number of secured layers
    /// (size sweep).
    pub index: usize,
    pub secured: String,
    pub dd: f64,
    pub adr: f64,
    pub customization_accuracy: Option<f64>,
    pub report: DistillReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    /// `placement` or `size`.
    pub sweep: String,
    /// Window length of a placement sweep.
    pub window: Option<usize>,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub const CSV_HEADER: &'static str = "sweep,index,secured,dd,adr,customization_accuracy";

    pub fn csv_rows(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| {
                format!(
                    "{},{},{},{},{},{}",
                    self.sweep,
                    r.index,
                    csv_field(&r.secured),
                    r.dd,
                    r.adr,
                    r.customization_accuracy.map(|a| a.to_string()).unwrap_or_default()
                )
            })
            .collect()
    }
}

fn row(
    victim: &DecoderParams,
    index: usize,
    secured: SecuredSet,
    attack: &AttackConfig,
    benchmarks: &Benchmarks,
    jobs: usize,
) -> Result<SweepRow> {
    let eval = benchmarks.combined();
    let (dd, _) = distillation_difficulty(victim, &secured, &eval, &attack.seeds, jobs)?;
    let report = run_attack(
        victim,
        &DeploymentStrategy::Custom {
            secured: secured.clone(),
        },
        attack,
        benchmarks,
        jobs,
    )?;
    Ok(SweepRow {
        index,
        secured: secured.to_string(),
        dd,
        adr: report.adr,
        customization_accuracy: None,
        report,
    })
}

/// Secures `window` consecutive layers at every start position.
pub fn sweep_placement(
    victim: &DecoderParams,
    window: usize,
    attack: &AttackConfig,
    benchmarks: &Benchmarks,
    jobs: usize,
) -> Result<SweepTable> {
    let depth = victim.config().layers;
    if window == 0 || window > depth {
        return Err(HarnessError::Config(format!("window {window} outside 1..={depth}")));
    }
    let rows = (1..=depth + 1 - window)
        .map(|start| row(victim, start, SecuredSet::layers(start..start + window), attack, benchmarks, jobs))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable {
        sweep: "placement".into(),
        window: Some(window),
        rows,
    })
}

/// Secures bottom prefixes of the given sizes; optionally measures how well
/// each deployment can still be customized.
pub fn sweep_size(
    victim: &DecoderParams,
    sizes: &[usize],
    attack: &AttackConfig,
    benchmarks: &Benchmarks,
    customization: Option<&CustomizeConfig>,
    jobs: usize,
) -> Result<SweepTable> {
    let depth = victim.config().layers;
    if let Some(bad) = sizes.iter().find(|s| **s > depth) {
        return Err(HarnessError::Config(format!("size {bad} beyond depth {depth}")));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let secured = SecuredSet::prefix(size);
        let mut r = row(victim, size, secured.clone(), attack, benchmarks, jobs)?;
        if let Some(c) = customization {
            let report = customize(victim, &DeploymentStrategy::Custom { secured }, c, &benchmarks.specs)?;
            r.customization_accuracy = Some(report.accuracy);
        }
        rows.push(r);
    }
    Ok(SweepTable {
        sweep: "size".into(),
        window: None,
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    /// A benchmark name, or `overall` for ADR.
    pub group: String,
    pub pairs: usize,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    /// Why a coefficient is missing.
    pub note: Option<String>,
}

impl Correlation {
    pub const CSV_HEADER: &'static str = "group,pairs,pearson,spearman,note";

    pub fn csv_row(&self) -> String {
        let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{}",
            self.group,
            self.pairs,
            f(self.pearson),
            f(self.spearman),
            csv_field(self.note.as_deref().unwrap_or(""))
        )
    }
}

fn correlate(group: String, dd: &[f64], dr: &[f64]) -> Correlation {
    let (p, s) = (pearson(dd, dr), spearman(dd, dr));
    let note = match (&p, &s) {
        (Err(e), _) | (_, Err(e)) => Some(e.to_string()),
        _ => None,
    };
    Correlation {
        group,
        pairs: dd.len(),
        pearson: p.ok(),
        spearman: s.ok(),
        note,
    }
}

/// Pearson and Spearman coefficients between difficulty and distillation
/// ratio over the rows of sweep tables, per benchmark and overall (ADR).
/// Degenerate groups carry a note instead of coefficients.
pub fn dd_dr_correlation(tables: &[&SweepTable]) -> Result<Vec<Correlation>> {
    let rows: Vec<&SweepRow> = tables.iter().flat_map(|t| &t.rows).collect();
    if rows.len() < 3 {
        return Err(HarnessError::Stats(format!("need at least 3 (DD, DR) pairs, got {}", rows.len())));
    }
    let mut out = Vec::new();
    let names: Vec<String> = rows[0].report.benchmarks.iter().map(|b| b.benchmark.clone()).collect();
    for name in names {
        let (dd, dr): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter_map(|r| r.report.benchmark(&name).and_then(|b| b.ratio).map(|ratio| (r.dd, ratio)))
            .unzip();
        out.push(correlate(name, &dd, &dr));
    }
    let dd: Vec<f64> = rows.iter().map(|r| r.dd).collect();
    let adr: Vec<f64> = rows.iter().map(|r| r.adr).collect();
    out.push(correlate("overall".into(), &dd, &adr));
    Ok(out)
}
