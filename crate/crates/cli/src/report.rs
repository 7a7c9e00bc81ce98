use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use layerlock::harness::{csv_field, AttackKind, DistillReport};

use crate::output::{read_artifact, Artifact, Output};
use crate::{AttackSummary, CliError, Run};

/// One attack's ratio table: benchmarks down, strategies across.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioTable {
    pub attack: AttackKind,
    pub strategies: Vec<String>,
    pub benchmarks: Vec<String>,
    /// `ratios[b][s]`.
    pub ratios: Vec<Vec<Option<f64>>>,
    pub adr: Vec<f64>,
    pub delta_adr: Vec<Option<f64>>,
}

fn tables(reports: &[DistillReport]) -> Vec<RatioTable> {
    let mut kinds: Vec<AttackKind> = Vec::new();
    for r in reports {
        if !kinds.contains(&r.attack) {
            kinds.push(r.attack);
        }
    }
    kinds
        .into_iter()
        .map(|kind| {
            let mut cols: Vec<&DistillReport> = Vec::new();
            for r in reports.iter().filter(|r| r.attack == kind) {
                if !cols.iter().any(|c| c.strategy == r.strategy) {
                    cols.push(r);
                }
            }
            let mut benchmarks: Vec<String> = Vec::new();
            for c in &cols {
                for b in &c.benchmarks {
                    if !benchmarks.contains(&b.benchmark) {
                        benchmarks.push(b.benchmark.clone());
                    }
                }
            }
            let ratios = benchmarks
                .iter()
                .map(|b| cols.iter().map(|c| c.benchmark(b).and_then(|s| s.ratio)).collect())
                .collect();
            RatioTable {
                attack: kind,
                strategies: cols.iter().map(|c| c.strategy.clone()).collect(),
                benchmarks,
                ratios,
                adr: cols.iter().map(|c| c.adr).collect(),
                delta_adr: cols.iter().map(|c| c.delta_adr).collect(),
            }
        })
        .collect()
}

fn pct(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{:.1}%", 100.0 * x),
        None => "n/a".into(),
    }
}

fn markdown(hash: &str, tables: &[RatioTable], flags: &[String]) -> String {
    let mut s = format!("<!-- config_hash={hash} -->\n");
    for t in tables {
        let _ = writeln!(s, "\n## {} distillation ratio\n", t.attack.name());
        let _ = writeln!(s, "| Benchmark | {} |", t.strategies.join(" | "));
        let _ = writeln!(s, "|---|{}", "---|".repeat(t.strategies.len()));
        for (b, row) in t.benchmarks.iter().zip(&t.ratios) {
            let cells: Vec<String> = row.iter().map(|v| pct(*v)).collect();
            let _ = writeln!(s, "| {b} | {} |", cells.join(" | "));
        }
        let adr: Vec<String> = t.adr.iter().map(|v| pct(Some(*v))).collect();
        let _ = writeln!(s, "| ADR | {} |", adr.join(" | "));
        let delta: Vec<String> = t.delta_adr.iter().map(|v| pct(*v)).collect();
        let _ = writeln!(s, "| ΔADR | {} |", delta.join(" | "));
    }
    if !flags.is_empty() {
        s.push_str("\n## Flags\n\n");
        for f in flags {
            let _ = writeln!(s, "- {f}");
        }
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub sources: Vec<String>,
    pub tables: Vec<RatioTable>,
    pub flags: Vec<String>,
}

/// Collects `attack.json` from every input directory (default: the output
/// directory) into a markdown table per attack kind. All inputs must come
/// from the same config.
pub fn report(run: &Run, out: &mut Output) -> Result<(), CliError> {
    let dirs = if run.inputs.is_empty() {
        vec![run.out.clone()]
    } else {
        run.inputs.clone()
    };
    let mut hash: Option<String> = None;
    let mut reports = Vec::new();
    let mut flags = Vec::new();
    for dir in &dirs {
        let path = dir.join("attack.json");
        if !path.exists() {
            return Err(CliError::Runtime(format!("{} has no attack.json", dir.display())));
        }
        let a: Artifact<AttackSummary> = read_artifact(&path)?;
        match &hash {
            Some(h) if *h != a.config_hash => {
                return Err(CliError::Runtime(format!(
                    "refusing to mix config hashes {h} and {} ({})",
                    a.config_hash,
                    path.display()
                )))
            }
            Some(_) => {}
            None => hash = Some(a.config_hash.clone()),
        }
        reports.extend(a.data.reports);
        for f in a.data.flags {
            if !flags.contains(&f) {
                flags.push(f);
            }
        }
    }
    let hash = hash.expect("at least one input");
    if hash != out.hash() {
        flags.push(format!("attack results come from config {hash}; this report was run with {}", out.hash()));
    }
    let tables = tables(&reports);

    let mut rows = Vec::new();
    for t in &tables {
        for (b, row) in t.benchmarks.iter().zip(&t.ratios) {
            for (s, v) in t.strategies.iter().zip(row) {
                rows.push(format!(
                    "{},{},{b},{}",
                    t.attack.name(),
                    csv_field(s),
                    v.map(|x| x.to_string()).unwrap_or_default()
                ));
            }
        }
        for (s, v) in t.strategies.iter().zip(&t.adr) {
            rows.push(format!("{},{},ADR,{v}", t.attack.name(), csv_field(s)));
        }
    }
    out.csv("report", "attack,strategy,benchmark,ratio", rows)?;
    out.text("report.md", &markdown(&hash, &tables, &flags))?;
    out.json(
        "report",
        &ReportSummary {
            sources: dirs.iter().map(|d| d.display().to_string()).collect(),
            tables,
            flags,
        },
    )
}
