//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. The toy-scale pipeline (criteria 6–10) runs
//! the real binary with the default configuration.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use layerlock::harness::{
    distill, run_attack, AttackConfig, AttackKind, DeploymentStrategy, VictimConfig,
};
use layerlock::numcore::{Matrix, Rng};
use layerlock::taskgen::{mixture, query_victim};
use layerlock::theory::{
    alpha_star, deep_normalized_output, doubling_ratio_probe, estimate_beta, phi_layer, technical_inequality_check,
    transition_sweep, AttnParams, BetaOptions, DeepOptions, Securing, SweepOptions, TheoryStack,
};
use layerlock::toymodel::{decoder_gradcheck, load_checkpoint, partition, DecoderConfig, SecuredSet};
use layerlock_cli::{read_artifact, Artifact, AttackSummary, ExperimentConfig, SelectionSummary};

struct Verdict {
    pass: bool,
    /// The target result was not reached, but the criterion's documented
    /// fallback (complete the run and flag the deviation) was met.
    flagged: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        flagged: false,
        detail: detail.into(),
    }
}

type Check = Result<Verdict, String>;

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

// ------------------------------------------------------------------ theory

fn rank_collapse_guarantee() -> Check {
    let opts = DeepOptions {
        tol: 1e-10,
        max_layers: 4096,
    };
    let mut collapsed = 0;
    let (mut worst_dev, mut worst_ratio, mut deepest) = (0.0f64, 0.0f64, 0);
    for seed in 0..100u64 {
        let mut rng = Rng::new(seed, 1);
        let stack = TheoryStack::random(8, 16, 4, 0.1, 8, &mut rng).map_err(e)?;
        let x0 = rng.normal_matrix(8, 16);
        let securing = Securing {
            index: 1,
            replacement: AttnParams::xavier(16, 4, &mut Rng::new(seed, 2)),
        };
        let rep = deep_normalized_output(&x0, &stack, Some(&securing), &opts).map_err(e)?;
        worst_dev = worst_dev.max(rep.max_deviation());
        worst_ratio = worst_ratio.max(rep.sigma_ratio);
        deepest = deepest.max(rep.iterations_used);
        if rep.max_deviation() < 1e-6 && rep.sigma_ratio < 1e-6 {
            collapsed += 1;
        }
    }
    Ok(verdict(
        collapsed == 100,
        format!("{collapsed}/100 collapsed; worst deviation {worst_dev:.2e}, worst σ₂/σ₁ {worst_ratio:.2e}, depth ≤ {deepest}"),
    ))
}

fn non_collapse_existence() -> Check {
    let cfg = ExperimentConfig::default().resolve(None);
    let s = layerlock_cli::adversarial_runs(&cfg).map_err(e)?;
    let ok = s.runs.iter().filter(|r| r.min_deviation >= 1.0 && r.sigma_ratio >= 0.1).count();
    let min_dev = s.runs.iter().map(|r| r.min_deviation).fold(f64::INFINITY, f64::min);
    let min_ratio = s.runs.iter().map(|r| r.sigma_ratio).fold(f64::INFINITY, f64::min);
    Ok(verdict(
        ok == 20 && s.runs.len() == 20 && s.budget == 2.0,
        format!(
            "{ok}/{} replacements at layer {} stay spread; min deviation {min_dev:.4}, min σ₂/σ₁ {min_ratio:.4}",
            s.runs.len(),
            s.depth
        ),
    ))
}

fn alpha_star_consistency() -> Check {
    let (n, d, dq, budget, depth) = (8, 16, 4, 1.0, 256);
    let est = estimate_beta(n, d, dq, budget, &mut Rng::new(3, 0), &BetaOptions::default()).map_err(e)?;
    let a_star = alpha_star(est.beta).map_err(e)?;
    let top = a_star - 0.05;
    if top <= 0.0 {
        return Ok(verdict(false, format!("α̂* = {a_star:.4} leaves no testable α")));
    }
    let alphas: Vec<f64> = (1..=8).map(|i| top * i as f64 / 8.0).collect();
    let mut violations = 0;
    let mut runs = 0;
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        let mut rng = Rng::new(seed, 3);
        let stack = TheoryStack::random(n, d, dq, budget, depth, &mut rng).map_err(e)?;
        let x0 = rng.normal_matrix(n, d);
        let table = transition_sweep(&stack, &x0, &alphas, &[seed], &SweepOptions::for_depth(depth)).map_err(e)?;
        for r in &table.rows {
            runs += 1;
            worst = worst.max(r.max_deviation);
            if !r.collapsed {
                violations += 1;
            }
        }
    }
    Ok(verdict(
        violations == 0 && runs == 80,
        format!(
            "β̂ = {:.4} at D = {budget}, α̂* = {a_star:.4}; {runs} runs with α ≤ {top:.4} at L = {depth}: {violations} violations (worst deviation {worst:.2e})",
            est.beta
        ),
    ))
}

fn exact_lemma_cases() -> Check {
    let mut rng = Rng::new(4, 0);
    // n = 1: the softmax is the scalar 1.
    let mut single = 0.0f64;
    for _ in 0..20 {
        let x = rng.normal_matrix(1, 6);
        let p = AttnParams::random_bounded(6, 3, 2.0, &mut rng);
        let y = phi_layer(&x, &p).map_err(e)?;
        for (a, b) in y.data().iter().zip(x.data()) {
            single = single.max((a - 2.0 * b).abs() / b.abs().max(1e-300));
        }
    }
    // Zero projections give uniform attention.
    let mut doubling = 0.0f64;
    for _ in 0..20 {
        let x = rng.normal_matrix(7, 5);
        let probe = doubling_ratio_probe(&x, &AttnParams::zeros(5, 2)).map_err(e)?;
        doubling = doubling.max(probe.max_abs_deviation_from_two());
    }
    let mut homog = 0.0f64;
    for _ in 0..20 {
        let x = rng.normal_matrix(6, 5);
        let p = AttnParams::random_bounded(5, 3, 1.5, &mut rng);
        let base = phi_layer(&x, &p).map_err(e)?;
        for c in [1e-3, 3.7, 1e3] {
            let scaled = phi_layer(&x.scale(c), &p).map_err(e)?;
            let err = scaled.sub(&base.scale(c)).map_err(e)?.frobenius_norm() / (c * base.frobenius_norm());
            homog = homog.max(err);
        }
    }
    let inequality = technical_inequality_check(10_000, &mut Rng::new(5, 0)).map_err(e)?;
    Ok(verdict(
        single < 1e-12 && doubling < 1e-12 && homog < 1e-12 && inequality,
        format!(
            "n=1 rel err {single:.1e}; doubling |r−2| {doubling:.1e}; homogeneity {homog:.1e}; inequality on 10⁴ samples: {inequality}"
        ),
    ))
}

fn gradient_correctness() -> Check {
    let mut worst_prim = 0.0f64;
    let mut worst_name = String::new();
    let mut worst_dec = 0.0f64;
    let mut checked = 0;
    for seed in 1..=5 {
        for g in layerlock::autodiff::gradcheck::primitive_suite(seed).map_err(e)? {
            checked += g.checked;
            if g.max_rel_error > worst_prim {
                worst_prim = g.max_rel_error;
                worst_name = g.name.clone();
            }
        }
        let g = decoder_gradcheck(DecoderConfig::default(), seed, 10).map_err(e)?;
        checked += g.checked;
        worst_dec = worst_dec.max(g.max_rel_error);
    }
    Ok(verdict(
        worst_prim < 1e-5 && worst_dec < 1e-5,
        format!("{checked} coordinates; worst primitive {worst_prim:.1e} ({worst_name}), 6-layer decoder {worst_dec:.1e}"),
    ))
}

// ------------------------------------------------------------------ toy pipeline

fn layerlock(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_layerlock"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_remove("LAYERLOCK_OUT")
        .output()
        .map_err(e)?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("layerlock {args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn bytes(path: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(path).map_err(|err| format!("{}: {err}", path.display()))
}

/// A cheap attack for the structural checks.
fn quick(kind: AttackKind) -> AttackConfig {
    AttackConfig {
        queries: 256,
        epochs: Some(1),
        seeds: vec![20, 42],
        ..AttackConfig::new(kind)
    }
}

fn fixed_points(victim_path: &Path) -> Check {
    let (victim, _) = load_checkpoint(victim_path).map_err(e)?;
    let bench = VictimConfig::default().benchmarks().map_err(e)?;
    let attack = quick(AttackKind::FtAll);

    let empty = DeploymentStrategy::Custom {
        secured: SecuredSet::empty(),
    };
    let r0 = run_attack(&victim, &empty, &attack, &bench, 1).map_err(e)?;
    let r_empty = r0.benchmarks.iter().map(|b| (b.ratio.unwrap_or(f64::NAN) - 1.0).abs()).fold(0.0, f64::max);

    let fully = run_attack(&victim, &DeploymentStrategy::FullySecured, &attack, &bench, 1).map_err(e)?;
    let mut with_base = fully.clone();
    with_base.set_baseline(&fully);
    let delta_zero = with_base.delta_adr == Some(0.0);

    let secured = SecuredSet::prefix(2);
    let part = partition(&victim, &secured).map_err(e)?;
    let closed = distill(&victim, &secured, 0.0, &quick(AttackKind::FtClosed), &bench, 20).map_err(e)?;
    let untouched = part.unsecured.iter().all(|i| {
        let a = closed.params.tensors()[*i].data();
        let b = victim.tensors()[*i].data();
        a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
    });

    let sap = run_attack(&victim, &DeploymentStrategy::Sap { open_k: None }, &attack, &bench, 1).map_err(e)?;
    let dp0 = DeploymentStrategy::SapDp {
        open_k: None,
        noise_scale: 0.0,
    };
    let dp = run_attack(&victim, &dp0, &attack, &bench, 1).map_err(e)?;
    let same = sap.benchmarks == dp.benchmarks && sap.adr == dp.adr && sap.secured == dp.secured;
    Ok(verdict(
        r_empty < 1e-9 && delta_zero && untouched && same,
        format!(
            "max |R(∅)−1| {r_empty:.1e}; ΔADR(FS) = {:?}; FT-closed public tensors byte-identical: {untouched}; SAP-DP(0) = SAP: {same}",
            with_base.delta_adr
        ),
    ))
}

fn noise_law(victim_path: &Path) -> Check {
    let (victim, _) = load_checkpoint(victim_path).map_err(e)?;
    let cfg = VictimConfig::default();
    let data = mixture(&cfg.tasks, 1980, &Rng::new(77, 0), None).map_err(e)?;
    let clean = query_victim(&victim, &data, 0.0, None, &mut Rng::new(8, 0)).map_err(e)?;
    let noisy = query_victim(&victim, &data, 0.5, None, &mut Rng::new(8, 0)).map_err(e)?;
    let a: &Matrix = clean.soft_labels.as_ref().ok_or("no clean outputs")?;
    let b: &Matrix = noisy.soft_labels.as_ref().ok_or("no noisy outputs")?;
    let diffs: Vec<f64> = b.data().iter().zip(a.data()).map(|(x, y)| x - y).collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let rel = (var / (2.0 * 0.25) - 1.0).abs();
    Ok(verdict(
        diffs.len() >= 1_000_000 && rel < 0.02,
        format!("{} entries, variance {var:.5} vs 2b² = 0.5 (off by {:.2}%)", diffs.len(), 100.0 * rel),
    ))
}

struct PipelineRun {
    minutes: f64,
}

fn full_pipeline(dir: &Path) -> Result<PipelineRun, String> {
    let t = Instant::now();
    for cmd in ["train-victim", "dd", "solid-select", "attack", "report"] {
        layerlock(dir, &[cmd])?;
    }
    Ok(PipelineRun {
        minutes: t.elapsed().as_secs_f64() / 60.0,
    })
}

fn table_ordering(dir: &Path, run: &PipelineRun) -> Check {
    let victim: Artifact<layerlock_cli::VictimSummary> = read_artifact(&dir.join("victim.json")).map_err(e)?;
    let acc = victim.data.eval.accuracy;
    let attack: Artifact<AttackSummary> = read_artifact(&dir.join("attack.json")).map_err(e)?;
    let a = &attack.data;
    let cfg = &a.reports[0];
    let settings_ok = cfg.attack == AttackKind::FtAll && cfg.queries == 4096 && cfg.epochs == 5 && cfg.seeds == [20, 42, 1234];
    let ordering = a.ordering.as_ref().ok_or("attack report has no ordering check")?;
    let report = std::fs::read_to_string(dir.join("report.md")).map_err(e)?;
    let flagged = report.contains("above -0.33") && ordering.flag.is_some();
    let timely = run.minutes < 30.0;
    let summary = format!(
        "victim accuracy {:.2}%; ADR SOLID {:.1}%, DarkneTZ {:.1}%, Fully-secured {:.1}% (margin {:+.1} pts, gap {:.1} pts); {:.1} min",
        100.0 * acc,
        100.0 * ordering.solid_adr,
        100.0 * ordering.darknetz_adr,
        100.0 * ordering.fully_secured_adr,
        100.0 * ordering.darknetz_margin,
        100.0 * ordering.solid_gap,
        run.minutes
    );
    let base_ok = acc >= 0.9 && settings_ok && timely;
    if ordering.holds {
        Ok(verdict(base_ok, format!("ordering reproduced; {summary}")))
    } else {
        Ok(Verdict {
            pass: base_ok && flagged,
            flagged: true,
            detail: format!("ordering NOT reproduced; run completed and report.md flags the deviation with the small-model caveat; {summary}"),
        })
    }
}

fn selection_determinism(a: &Path, b: &Path) -> Check {
    let sa: Artifact<SelectionSummary> = read_artifact(&a.join("solid_select.json")).map_err(e)?;
    let sb: Artifact<SelectionSummary> = read_artifact(&b.join("solid_select.json")).map_err(e)?;
    let dd: Artifact<layerlock::harness::DDReport> = read_artifact(&a.join("dd.json")).map_err(e)?;
    let s = &sa.data;
    let identical = sa.data == sb.data
        && bytes(&a.join("solid_select.csv"))? == bytes(&b.join("solid_select.csv"))?
        && bytes(&a.join("dd.csv"))? == bytes(&b.join("dd.csv"))?;
    let rule = match s.selection.prefix {
        Some(l) => {
            dd.data.at(l).is_some_and(|v| v >= dd.data.threshold())
                && (1..l).all(|k| dd.data.at(k).is_some_and(|v| v < dd.data.threshold()))
        }
        None => dd.data.curve.iter().filter(|p| p.prefix >= 1).all(|p| p.mean < dd.data.threshold()),
    };
    let dd_empty = s.dd_empty.ok_or("DD curve lacks the empty prefix")?;
    let gap = (dd_empty - s.victim_loss).abs();
    Ok(verdict(
        identical && rule && gap <= 1e-12,
        format!(
            "selected l* = {:?} (DD {:.4} ≥ {:.4} = 0.95·{:.4}); identical across re-runs: {identical}; |DD(∅) − loss| = {gap:.1e}",
            s.selection.prefix,
            s.dd_selected.unwrap_or(f64::NAN),
            s.threshold,
            s.dd_full
        ),
    ))
}

const TINY: &str = r#"
[victim]
train_examples = 600
eval_count = 60
tasks = [
  { kind = "modular-add", seq_len = 16 },
  { kind = "copy-reverse", seq_len = 16 },
  { kind = "markov-next-token", seq_len = 16 },
]
[victim.model]
d_model = 8
layers = 3
seq_len = 16
[victim.train]
epochs = 1
batch_size = 32
[attack]
queries = 64
epochs = 1
batch_size = 32
[customize]
downstream = { kind = "markov-next-token", seq_len = 16, transition_seed = 11 }
train_examples = 64
eval_count = 30
train = { epochs = 1, batch_size = 32 }
[theory]
depth = 32
replacements = 4
adversarial_depth = 32
beta = { restarts = 2, ascent_steps = 10 }
"#;

const ALL_COMMANDS: [&str; 12] = [
    "theory-sweep",
    "theory-adversarial",
    "theory-beta",
    "train-victim",
    "dd",
    "solid-select",
    "attack",
    "customize",
    "sweep-placement",
    "sweep-size",
    "correlate",
    "report",
];

fn csv_files(dir: &Path) -> Result<Vec<String>, String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map_err(e)?
        .filter_map(|f| f.ok())
        .map(|f| f.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    Ok(names)
}

fn reproducibility(full_a: &Path, full_b: &Path, scratch: &Path) -> Check {
    let (ta, tb) = (scratch.join("a"), scratch.join("b"));
    for dir in [&ta, &tb] {
        std::fs::create_dir_all(dir).map_err(e)?;
        let cfg = dir.join("tiny.toml");
        std::fs::write(&cfg, TINY).map_err(e)?;
        let jobs = if dir == &ta { "1" } else { "2" };
        for cmd in ALL_COMMANDS {
            layerlock(dir, &["--config", cfg.to_str().unwrap(), "--jobs", jobs, cmd])?;
        }
    }
    let mut compared = 0;
    let mut differing = Vec::new();
    for (a, b) in [(&ta, &tb), (&full_a.to_path_buf(), &full_b.to_path_buf())] {
        for name in csv_files(a)? {
            let other = b.join(&name);
            if !other.exists() {
                continue;
            }
            compared += 1;
            if bytes(&a.join(&name))? != bytes(&other)? {
                differing.push(name);
            }
        }
    }
    let tiny_count = csv_files(&ta)?.len();
    Ok(verdict(
        differing.is_empty() && tiny_count >= ALL_COMMANDS.len(),
        format!(
            "{compared} CSV pairs from all {} subcommands (jobs 1 vs 2) and the default-scale re-run; differing: {:?}",
            ALL_COMMANDS.len(),
            differing
        ),
    ))
}

// ------------------------------------------------------------------ driver

#[derive(Default)]
struct Tally {
    passed: usize,
    flagged: usize,
    failed: usize,
}

fn report(n: usize, name: &str, t: Instant, check: Check, tally: &mut Tally) {
    let secs = t.elapsed().as_secs_f64();
    let (status, detail) = match check {
        Ok(v) if !v.pass => ("FAIL", v.detail),
        Ok(v) if v.flagged => ("FLAGGED", v.detail),
        Ok(v) => ("PASS", v.detail),
        Err(err) => ("FAIL", format!("error: {err}")),
    };
    match status {
        "PASS" => tally.passed += 1,
        "FLAGGED" => tally.flagged += 1,
        _ => tally.failed += 1,
    }
    println!("criterion {n:>2} [{status}] {name}: {detail} ({secs:.1}s)");
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut tally = Tally::default();
    println!("running acceptance criteria 1-10");

    let t = Instant::now();
    report(1, "rank-collapse guarantee", t, rank_collapse_guarantee(), &mut tally);
    let t = Instant::now();
    report(2, "non-collapse existence", t, non_collapse_existence(), &mut tally);
    let t = Instant::now();
    report(3, "collapse below the transition", t, alpha_star_consistency(), &mut tally);
    let t = Instant::now();
    report(4, "exact lemma cases", t, exact_lemma_cases(), &mut tally);
    let t = Instant::now();
    report(5, "gradient correctness", t, gradient_correctness(), &mut tally);

    let scratch = tempfile::tempdir().expect("temp dir");
    let (run_a, run_b) = (scratch.path().join("run-a"), scratch.path().join("run-b"));
    let t = Instant::now();
    let pipeline = full_pipeline(&run_a);
    let pipeline_secs = t.elapsed();
    let victim = run_a.join("victim.sold");

    let t = Instant::now();
    let c6 = match &pipeline {
        Ok(_) => fixed_points(&victim),
        Err(err) => Err(err.clone()),
    };
    report(6, "attack-pipeline fixed points", t, c6, &mut tally);
    let t = Instant::now();
    let c7 = match &pipeline {
        Ok(_) => noise_law(&victim),
        Err(err) => Err(err.clone()),
    };
    report(7, "noisy-output variance", t, c7, &mut tally);
    let c8 = match &pipeline {
        Ok(p) => table_ordering(&run_a, p),
        Err(err) => Err(err.clone()),
    };
    println!("           (toy pipeline wall time {:.1} min)", pipeline_secs.as_secs_f64() / 60.0);
    report(8, "qualitative strategy ordering", Instant::now(), c8, &mut tally);

    let t = Instant::now();
    let rerun = ["train-victim", "dd", "solid-select"]
        .iter()
        .try_for_each(|cmd| layerlock(&run_b, &[cmd]));
    let c9 = match (&pipeline, rerun) {
        (Ok(_), Ok(())) => selection_determinism(&run_a, &run_b),
        (Err(err), _) => Err(err.clone()),
        (_, Err(err)) => Err(err),
    };
    report(9, "SOLID selection determinism", t, c9, &mut tally);
    let t = Instant::now();
    report(10, "byte-identical re-runs", t, reproducibility(&run_a, &run_b, scratch.path()), &mut tally);

    println!(
        "acceptance: {} passed, {} flagged (target not reached, deviation reported), {} failed",
        tally.passed, tally.flagged, tally.failed
    );
    if tally.failed > 0 {
        std::process::exit(1);
    }
}
