//! Experiment orchestration for the `layerlock` binary: configuration,
//! deterministic recipes and persisted artifacts.
//!
//! Every command writes `<name>.json` and `<name>.csv` plus a
//! `<command>.manifest.json` into the output directory. CSV files start with
//! a `# config_hash=` comment line, JSON files carry a `config_hash` field,
//! and nothing time-dependent is ever written, so equal configs give
//! byte-identical files.

pub mod config;
mod output;
mod report;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use layerlock::harness::{
    compute_dd, customize, dd_dr_correlation, ordering_check, run_attack, solid_select, sweep_placement, sweep_size,
    train_victim, Benchmarks, Correlation, CustomizeReport, DDReport, DeploymentStrategy, DistillReport,
    EvalSummary, OrderingCheck, Selection, SweepTable,
};
use layerlock::numcore::Rng;
use layerlock::theory::{
    adversarial_construction, alpha_star, deep_normalized_output, estimate_beta, transition_sweep, AttnParams,
    DeepOptions, Securing, SweepOptions, TheoryStack, TransitionTable,
};
use layerlock::toymodel::{load_checkpoint, save_checkpoint, DecoderParams};

pub use config::{ExperimentConfig, Planned, StrategyEntry};
use output::Output;
pub use output::{read_artifact, Artifact};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Runtime(_) => "runtime",
        }
    }
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    TheorySweep,
    TheoryAdversarial,
    TheoryBeta,
    TrainVictim,
    Dd,
    SolidSelect,
    Attack,
    Customize,
    SweepPlacement,
    SweepSize,
    Correlate,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::TheorySweep => "theory-sweep",
            Command::TheoryAdversarial => "theory-adversarial",
            Command::TheoryBeta => "theory-beta",
            Command::TrainVictim => "train-victim",
            Command::Dd => "dd",
            Command::SolidSelect => "solid-select",
            Command::Attack => "attack",
            Command::Customize => "customize",
            Command::SweepPlacement => "sweep-placement",
            Command::SweepSize => "sweep-size",
            Command::Correlate => "correlate",
            Command::Report => "report",
        }
    }
}

/// Resolved invocation.
pub struct Run {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    pub jobs: usize,
    pub format: Format,
    /// Extra attack directories for `report`.
    pub inputs: Vec<PathBuf>,
}

/// What a command printed: the main artifact in the requested format.
pub struct Outcome {
    pub stdout: String,
}

pub fn execute(command: Command, run: &Run) -> Result<Outcome, CliError> {
    if run.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    std::fs::create_dir_all(&run.out)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", run.out.display())))?;
    let mut out = Output::new(&run.out, command.name(), run.config.hash());
    match command {
        Command::TheorySweep => theory_sweep(run, &mut out)?,
        Command::TheoryAdversarial => theory_adversarial(run, &mut out)?,
        Command::TheoryBeta => theory_beta(run, &mut out)?,
        Command::TrainVictim => train(run, &mut out)?,
        Command::Dd => dd(run, &mut out)?,
        Command::SolidSelect => select(run, &mut out)?,
        Command::Attack => attack(run, &mut out)?,
        Command::Customize => customize_cmd(run, &mut out)?,
        Command::SweepPlacement => placement(run, &mut out)?,
        Command::SweepSize => size(run, &mut out)?,
        Command::Correlate => correlate(run, &mut out)?,
        Command::Report => report::report(run, &mut out)?,
    }
    out.write_manifest(&run.config)?;
    Ok(Outcome {
        stdout: out.primary(run.format),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

// ---------------------------------------------------------------- theory

fn theory_inputs(cfg: &ExperimentConfig) -> Result<(TheoryStack, layerlock::Matrix), CliError> {
    let t = &cfg.theory;
    let mut rng = Rng::new(cfg.theory_seed(), 0x7374_6163_6b);
    let stack = TheoryStack::random(t.n, t.d, t.dq, t.budget, t.depth, &mut rng).map_err(runtime)?;
    let x0 = rng.normal_matrix(t.n, t.d);
    Ok((stack, x0))
}

fn theory_sweep(run: &Run, out: &mut Output) -> Result<(), CliError> {
    let t = &run.config.theory;
    let (stack, x0) = theory_inputs(&run.config)?;
    let mut opts = SweepOptions::for_depth(t.depth);
    opts.jobs = run.jobs;
    let table: TransitionTable = transition_sweep(&stack, &x0, &t.alphas, &t.seeds, &opts).map_err(runtime)?;
    out.seeds("replacement", &t.seeds);
    out.seeds("stack", &[run.config.theory_seed()]);
    let rows = table
        .rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{}",
                r.alpha, r.seed, r.secured_index, r.max_deviation, r.sigma_ratio, r.collapsed
            )
        })
        .collect();
    out.csv("theory_sweep", "alpha,seed,secured_index,max_deviation,sigma_ratio,collapsed", rows)?;
    let summary = table
        .summary
        .iter()
        .map(|s| {
            format!(
                "{},{},{},{},{}",
                s.alpha, s.secured_index, s.realized_alpha, s.mean_deviation, s.collapse_fraction
            )
        })
        .collect();
    out.csv(
        "theory_sweep_summary",
        "alpha,secured_index,realized_alpha,mean_deviation,collapse_fraction",
        summary,
    )?;
    out.json("theory_sweep", &table)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversarialRun {
    pub replacement_seed: u64,
    pub secured_index: usize,
    pub min_deviation: f64,
    pub max_deviation: f64,
    pub sigma_ratio: f64,
    pub non_collapsed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversarialSummary {
    pub budget: f64,
    pub depth: usize,
    pub contraction: f64,
    pub eigenvalues: Vec<f64>,
    pub directions: usize,
    pub runs: Vec<AdversarialRun>,
    pub all_non_collapsed: bool,
}

/// Lowest deviation and spread a replacement run must keep to count as not
/// collapsed.
const NON_COLLAPSE_DEVIATION: f64 = 1.0;
const NON_COLLAPSE_SIGMA_RATIO: f64 = 0.1;

pub fn adversarial_runs(cfg: &ExperimentConfig) -> Result<AdversarialSummary, CliError> {
    let t = &cfg.theory;
    let inst = adversarial_construction(t.n, t.d, t.dq, t.adversarial_budget).map_err(runtime)?;
    let depth = t.adversarial_depth;
    let stack = TheoryStack::repeated(inst.params.clone(), t.n, t.adversarial_budget, depth).map_err(runtime)?;
    let opts = DeepOptions {
        tol: 1e-10,
        max_layers: depth,
    };
    let mut runs = Vec::with_capacity(t.replacements);
    for r in 0..t.replacements as u64 {
        let securing = Securing {
            index: depth,
            replacement: AttnParams::xavier(t.d, t.dq, &mut Rng::new(cfg.theory_seed(), r)),
        };
        let rep = deep_normalized_output(&inst.x, &stack, Some(&securing), &opts).map_err(runtime)?;
        runs.push(AdversarialRun {
            replacement_seed: r,
            secured_index: depth,
            min_deviation: rep.min_deviation(),
            max_deviation: rep.max_deviation(),
            sigma_ratio: rep.sigma_ratio,
            non_collapsed: rep.min_deviation() >= NON_COLLAPSE_DEVIATION && rep.sigma_ratio >= NON_COLLAPSE_SIGMA_RATIO,
        });
    }
    Ok(AdversarialSummary {
        budget: t.adversarial_budget,
        depth,
        contraction: inst.contraction,
        eigenvalues: inst.eigenvalues,
        directions: inst.directions,
        all_non_collapsed: runs.iter().all(|r| r.non_collapsed),
        runs,
    })
}

fn theory_adversarial(run: &Run, out: &mut Output) -> Result<(), CliError> {
    let summary = adversarial_runs(&run.config)?;
    let seeds: Vec<u64> = summary.runs.iter().map(|r| r.replacement_seed).collect();
    out.seeds("replacement", &seeds);
    let rows = summary
        .runs
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{}",
                r.replacement_seed, r.secured_index, r.min_deviation, r.max_deviation, r.sigma_ratio, r.non_collapsed
            )
        })
        .collect();
    out.csv(
        "theory_adversarial",
        "replacement_seed,secured_index,min_deviation,max_deviation,sigma_ratio,non_collapsed",
        rows,
    )?;
    out.json("theory_adversarial", &summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaSummary {
    pub budget: f64,
    pub beta: f64,
    pub alpha_star: f64,
    pub estimate: layerlock::theory::BetaEstimate,
}

fn theory_beta(run: &Run, out: &mut Output) -> Result<(), CliError> {
    let t = &run.config.theory;
    let seed = run.config.theory_seed();
    let est = estimate_beta(t.n, t.d, t.dq, t.budget, &mut Rng::new(seed, 0x6265_7461), &t.beta).map_err(runtime)?;
    let a = alpha_star(est.beta).map_err(runtime)?;
    out.seeds("search", &[seed]);
    out.csv(
        "theory_beta",
        "budget,beta,alpha_star,restarts,ascent_steps",
        vec![format!("{},{},{a},{},{}", t.budget, est.beta, t.beta.restarts, t.beta.ascent_steps)],
    )?;
    out.json(
        "theory_beta",
        &BetaSummary {
            budget: t.budget,
            beta: est.beta,
            alpha_star: a,
            estimate: est,
        },
    )
}

// ---------------------------------------------------------------- victim

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VictimSummary {
    pub victim_hash: String,
    pub parameters: usize,
    pub steps: u64,
    pub epoch_losses: Vec<f64>,
    pub eval: EvalSummary,
}

const VICTIM_FILE: &str = "victim.sold";

fn train(run: &Run, out: &mut Output) -> Result<(), CliError> {
    let cfg = &run.config.victim;
    let v = train_victim(cfg).map_err(runtime)?;
    let path = run.out.join(VICTIM_FILE);
    save_checkpoint(&v.params, None, &path).map_err(runtime)?;
    out.record(VICTIM_FILE);
    out.seeds("victim", &[cfg.seed]);
    out.seeds("eval", &cfg.eval_seeds);
    let mut rows: Vec<String> = v
        .eval
        .tasks
        .iter()
        .map(|t| format!("{},{},{},{}", t.task, t.scored, t.loss, t.accuracy))
        .collect();
    let scored: usize = v.eval.tasks.iter().map(|t| t.scored).sum();
    rows.push(format!("overall,{scored},{},{}", v.eval.loss, v.eval.accuracy));
    out.csv("victim", "benchmark,scored,loss,accuracy", rows)?;
    out.json(
        "victim",
        &VictimSummary {
            victim_hash: run.config.victim_hash(),
            parameters: v.params.param_count(),
            steps: v.log.steps,
            epoch_losses: v.log.epoch_losses,
            eval: v.eval,
        },
    )
}

/// The trained victim of this config and its benchmarks.
fn load_victim(run: &Run) -> Result<(DecoderParams, Benchmarks), CliError> {
    let path = run.out.join(VICTIM_FILE);
    if !path.exists() {
        return Err(CliError::Runtime(format!(
            "victim checkpoint {} not found; run train-victim first",
            path.display()
        )));
    }
    let summary: Artifact<VictimSummary> = read_artifact(&run.out.join("victim.json"))?;
    if summary.data.victim_hash != run.config.victim_hash() {
        return Err(CliError::Runtime(format!(
            "checkpoint in {} was trained from a different victim config",
            run.out.display()
        )));
    }
    let (params, _) = load_checkpoint(&path).map_err(|e| CliError::Runtime(format!("bad checkpoint: {e}")))?;
    if *params.config() != run.config.victim.model {
        return Err(CliError::Runtime("checkpoint dimensions differ from the configured model".into()));
    }
    let bench = run.config.victim.benchmarks().map_err(runtime)?;
    Ok((params, bench))
}

// ---------------------------------------------------------------- dd / selection

fn dd_prefixes(run: &Run, depth: usize) -> Vec<usize> {
    run.config.dd.prefixes.clone().unwrap_or_else(|| (0..=depth).collect())
}

fn compute_dd_report(run: &Run, victim: &DecoderParams, bench: &Benchmarks) -> Result<DDReport, CliError> {
    let d = &run.config.dd;
    let prefixes = dd_prefixes(run, victim.config().layers);
    compute_dd(victim, &prefixes, &bench.combined(), &d.seeds, d.epsilon, run.jobs).map_err(runtime)
}

/// DD report of this config: reused from `dd.json` when it was produced by
/// the same config, computed otherwise.
fn dd_report(run: &Run, victim: &DecoderParams, bench: &Benchmarks) -> Result<DDReport, CliError> {
    let cached = run.out.join("dd.json");
    if cached.exists() {
        if let Ok(a) = read_artifact::<DDReport>(&cached) {
            if a.config_hash == run.config.hash() {
                return Ok(a.data);
            }
        }
    }
    compute_dd_report(run, victim, bench)
}

fn dd(run: &Run, out: &mut Output) -> Result<(), CliError> {
    let (victim, bench) = load_victim(run)?;
    let report = compute_dd_report(run, &victim, &bench)?;
    out.seeds("dd", &report.seeds);
    out.csv("dd", DDReport::CSV_HEADER, report.csv_rows())?;
    out.json("dd", &report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub selection: Selection,
    pub dd_selected: Option<f64>,
    pub dd_full: f64,
    pub threshold: f64,
    pub epsilon: f64,
    pub dd_empty: Option<f64>,
    pub victim_loss: f64,
}

fn select(run: &Run, out: &mut Output) -> Result<(), CliError> {
    let (victim, bench) = load_victim(run)?;
    let report = dd_report(run, &victim, &bench)?;
    let selection = solid_select(&report);
    let victim_loss = layerlock::harness::evaluate(&victim, &bench.combined()).map_err(runtime)?.loss;
    out.seeds("dd", &report.seeds);
    let summary = SelectionSummary {
        dd_selected: selection.prefix.and_then(|l| report.at(l)),
        dd_full: report.full,
        threshold: report.threshold(),
        epsilon: report.epsilon,
        dd_empty: report.at(0),
        victim_loss,
        selection,
    };
    out.csv(
        "solid_select",
        "prefix,secured,dd_selected,dd_full,threshold,epsilon,dd_empty,victim_loss,warning",
        vec![format!(
            "{},{},{},{},{},{},{},{},{}",
            summary.selection.prefix.map(|l| l.to_string()).unwrap_or_default(),
            layerlock::harness::csv_field(&summary.selection.secured.to_string()),
            fmt_opt(summary.dd_selected),
            summary.dd_full,
            summary.threshold,
            summary.epsilon,
            fmt_opt(summary.dd_empty),
            summary.victim_loss,
            layerlock::harness::csv_field(summary.selection.warning.as_deref().unwrap_or("")),
        )],
    )?;
    out.json("solid_select", &summary)
}

/// Concrete strategies of the config; `solid` becomes the selected prefix.
fn resolve_strategies(
    run: &Run,
    victim: &DecoderParams,
    bench: &Benchmarks,
) -> Result<(Vec<DeploymentStrategy>, Option<Selection>), CliError> {
    let plans = run
        .config
        .strategies
        .iter()
        .map(|s| s.plan())
        .collect::<Result<Vec<_>, _>>()?;
    let mut selection = None;
    if plans.contains(&Planned::AutoSolid) {
        let report = dd_report(run, victim, bench)?;
        selection = Some(solid_select(&report));
    }
    let depth = victim.config().layers;
    let strategies = plans
        .into_iter()
        .map(|p| match p {
            Planned::Fixed(s) => s,
            Planned::AutoSolid => DeploymentStrategy::Solid {
                l: selection.as_ref().and_then(|s| s.prefix).unwrap_or(depth),
            },
        })
        .collect();
    Ok((strategies, selection))
}

// ---------------------------------------------------------------- attacks

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSummary {
    pub reports: Vec<DistillReport>,
    /// SOLID prefix chosen from the DD curve, when `solid` was requested.
    pub selection: Option<Selection>,
    /// Fully-secured run used for ΔADR when it was not among the strategies.
    pub baseline: Option<DistillReport>,
    pub ordering: Option<OrderingCheck>,
    pub flags: Vec<String>,
}

fn attack(run: &Run, out: &mut Output) -> Result<(), CliError> {
    let (victim, bench) = load_victim(run)?;
    let (strategies, selection) = resolve_strategies(run, &victim, &bench)?;
    let cfg = &run.config.attack;
    let mut reports = strategies
        .iter()
        .map(|s| run_attack(&victim, s, cfg, &bench, run.jobs).map_err(runtime))
        .collect::<Result<Vec<_>, _>>()?;
    let fully = reports
        .iter()
        .find(|r| r.strategy == DeploymentStrategy::FullySecured.to_string())
        .cloned();
    let baseline = match fully {
        Some(_) => None,
        None => Some(
            run_attack(&victim, &DeploymentStrategy::FullySecured, cfg, &bench, run.jobs).map_err(runtime)?,
        ),
    };
    let base = fully.clone().or_else(|| baseline.clone()).expect("baseline present");
    for r in reports.iter_mut() {
        r.set_baseline(&base);
    }

    let mut flags = Vec::new();
    if let Some(w) = selection.as_ref().and_then(|s| s.warning.clone()) {
        flags.push(w);
    }
    let find = |label: &str| reports.iter().find(|r| r.label == label).map(|r| r.adr);
    let ordering = match (find("SOLID"), find("DarkneTZ")) {
        (Some(solid), Some(dark)) => {
            let check = ordering_check(solid, dark, base.adr);
            flags.extend(check.flag.clone());
            Some(check)
        }
        _ => None,
    };
    for r in &reports {
        flags.extend(r.flags.iter().map(|f| format!("{}: {f}", r.strategy)));
    }

    out.seeds("attack", &cfg.seeds);
    if selection.is_some() {
        out.seeds("dd", &run.config.dd.seeds);
    }
    let rows = reports.iter().flat_map(|r| r.csv_rows()).collect();
    out.csv("attack", DistillReport::CSV_HEADER, rows)?;
    out.json(
        "attack",
        &AttackSummary {
            reports,
            selection,
            baseline,
            ordering,
            flags,
        },
    )
}

fn customize_cmd(run: &Run, out: &mut Output) -> Result<(), CliError> {
    let (victim, bench) = load_victim(run)?;
    let (strategies, selection) = resolve_strategies(run, &victim, &bench)?;
    let cfg = &run.config.customize;
    let reports: Vec<CustomizeReport> = strategies
        .iter()
        .map(|s| customize(&victim, s, cfg, &bench.specs).map_err(runtime))
        .collect::<Result<_, _>>()?;
    out.seeds("customize", &[cfg.seed]);
    if selection.is_some() {
        out.seeds("dd", &run.config.dd.seeds);
    }
    let rows = reports
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{}",
                layerlock::harness::csv_field(&r.strategy),
                layerlock::harness::csv_field(&r.secured),
                r.downstream,
                r.frozen_accuracy,
                r.accuracy,
                r.trained_parameters,
                r.steps
            )
        })
        .collect();
    out.csv(
        "customize",
        "strategy,secured,downstream,frozen_accuracy,accuracy,trained_parameters,steps",
        rows,
    )?;
    out.json("customize", &reports)
}

// ---------------------------------------------------------------- sweeps

fn write_sweep(out: &mut Output, name: &str, table: &SweepTable, seeds: &[u64]) -> Result<(), CliError> {
    out.seeds("attack", seeds);
    out.csv(name, SweepTable::CSV_HEADER, table.csv_rows())?;
    out.json(name, table)
}

fn placement(run: &Run, out: &mut Output) -> Result<(), CliError> {
    let (victim, bench) = load_victim(run)?;
    let table = sweep_placement(&victim, run.config.sweep.window, &run.config.attack, &bench, run.jobs)
        .map_err(runtime)?;
    write_sweep(out, "sweep_placement", &table, &run.config.attack.seeds)
}

fn size(run: &Run, out: &mut Output) -> Result<(), CliError> {
    let (victim, bench) = load_victim(run)?;
    let depth = victim.config().layers;
    let sizes = run.config.sweep.sizes.clone().unwrap_or_else(|| (1..=depth).collect());
    let cust = run.config.sweep.customize.then_some(&run.config.customize);
    let table = sweep_size(&victim, &sizes, &run.config.attack, &bench, cust, run.jobs).map_err(runtime)?;
    if cust.is_some() {
        out.seeds("customize", &[run.config.customize.seed]);
    }
    write_sweep(out, "sweep_size", &table, &run.config.attack.seeds)
}

fn correlate(run: &Run, out: &mut Output) -> Result<(), CliError> {
    let mut tables = Vec::new();
    for name in ["sweep_placement", "sweep_size"] {
        let path = run.out.join(format!("{name}.json"));
        if !path.exists() {
            continue;
        }
        let a: Artifact<SweepTable> = read_artifact(&path)?;
        if a.config_hash != run.config.hash() {
            return Err(CliError::Runtime(format!(
                "{} comes from config {}, not {}",
                path.display(),
                a.config_hash,
                run.config.hash()
            )));
        }
        tables.push(a.data);
    }
    if tables.is_empty() {
        return Err(CliError::Runtime(format!(
            "no sweep tables in {}; run sweep-placement or sweep-size first",
            run.out.display()
        )));
    }
    let refs: Vec<&SweepTable> = tables.iter().collect();
    let corr: Vec<Correlation> = dd_dr_correlation(&refs).map_err(runtime)?;
    out.seeds("attack", &run.config.attack.seeds);
    out.csv("correlation", Correlation::CSV_HEADER, corr.iter().map(|c| c.csv_row()).collect())?;
    out.json("correlation", &corr)
}

/// Directory a command reads and writes when no `--out` is given.
pub fn default_out() -> PathBuf {
    PathBuf::from("layerlock-out")
}
