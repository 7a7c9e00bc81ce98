use std::path::Path;
use std::process::{Command, Output};

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
layers = 2
seq_len = 16
[victim.train]
epochs = 1
batch_size = 32

[attack]
queries = 64
epochs = 1
batch_size = 32
seeds = [20, 42]

[customize]
downstream = { kind = "markov-next-token", seq_len = 16, transition_seed = 11 }
train_examples = 64
eval_count = 30
train = { epochs = 1, batch_size = 32 }

[theory]
depth = 16
alphas = [0.1, 1.0]
seeds = [0, 1]
adversarial_depth = 16
replacements = 3
beta = { restarts = 2, ascent_steps = 5 }
"#;

fn layerlock(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_layerlock"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_remove("LAYERLOCK_OUT")
        .output()
        .unwrap()
}

fn with_config(dir: &Path, args: &[&str]) -> Output {
    let cfg = dir.join("tiny.toml");
    if !cfg.exists() {
        std::fs::write(&cfg, TINY).unwrap();
    }
    let mut all = vec!["--config", cfg.to_str().unwrap()];
    all.extend_from_slice(args);
    layerlock(dir, &all)
}

fn ok(o: &Output) {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

fn read(dir: &Path, file: &str) -> String {
    std::fs::read_to_string(dir.join(file)).unwrap()
}

#[test]
fn toy_pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    for cmd in [
        "train-victim",
        "dd",
        "solid-select",
        "attack",
        "customize",
        "sweep-placement",
        "sweep-size",
        "correlate",
        "report",
    ] {
        ok(&with_config(dir, &[cmd]));
    }
    let hash = serde_json::from_str::<serde_json::Value>(&read(dir, "attack.json")).unwrap()["config_hash"]
        .as_str()
        .unwrap()
        .to_string();
    for csv in ["victim", "dd", "solid_select", "attack", "customize", "sweep_placement", "sweep_size", "correlation", "report"] {
        let text = read(dir, &format!("{csv}.csv"));
        assert_eq!(text.lines().next().unwrap(), format!("# config_hash={hash}"), "{csv}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&read(dir, "dd.manifest.json")).unwrap();
    assert_eq!(manifest["seeds"]["dd"], serde_json::json!([20, 42, 1234]));
    assert_eq!(manifest["config_hash"], hash.as_str());

    let md = read(dir, "report.md");
    assert!(md.contains("| Benchmark | SOLID(l="));
    assert!(md.contains("| modular-add |"));
    assert!(md.contains("| ADR |") && md.contains("| ΔADR |"));

    let attack: serde_json::Value = serde_json::from_str(&read(dir, "attack.json")).unwrap();
    let reports = attack["data"]["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 4);
    let fully = reports.iter().find(|r| r["label"] == "Fully-secured").unwrap();
    assert_eq!(fully["delta_adr"], 0.0);
    assert!(attack["data"]["ordering"].is_object());
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        ok(&with_config(dir, &["theory-sweep"]));
        ok(&with_config(dir, &["train-victim"]));
        ok(&with_config(dir, &["--jobs", "2", "attack"]));
    }
    for f in ["theory_sweep.csv", "victim.csv", "victim.sold", "attack.csv", "attack.json", "attack.manifest.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn theory_sweep_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let o = with_config(tmp.path(), &["theory-sweep"]);
    ok(&o);
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    assert_eq!(lines.next().unwrap(), "alpha,seed,secured_index,max_deviation,sigma_ratio,collapsed");
    assert_eq!(lines.count(), 4);
    ok(&with_config(tmp.path(), &["--format", "json", "theory-adversarial"]));
    ok(&with_config(tmp.path(), &["theory-beta"]));
    assert!(read(tmp.path(), "theory_beta.csv").contains("budget,beta,alpha_star"));
}

#[test]
fn seed_override_changes_the_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let a = String::from_utf8(with_config(tmp.path(), &["theory-sweep"]).stdout).unwrap();
    let b = String::from_utf8(with_config(tmp.path(), &["--seed", "9", "theory-sweep"]).stdout).unwrap();
    assert_ne!(a.lines().next(), b.lines().next());
}

#[test]
fn usage_errors_exit_one_on_a_single_line() {
    let tmp = tempfile::tempdir().unwrap();
    let o = layerlock(tmp.path(), &["attak"]);
    assert_eq!(o.status.code(), Some(1));
    let o = layerlock(tmp.path(), &["--jobs", "0", "theory-sweep"]);
    assert_eq!(o.status.code(), Some(1));
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "[attack]\nquerys = 3\n").unwrap();
    let o = layerlock(tmp.path(), &["--config", bad.to_str().unwrap(), "attack"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8(o.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error[usage]: "));
}

#[test]
fn runtime_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = with_config(tmp.path(), &["dd"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.starts_with("error[runtime]: ") && err.contains("train-victim"), "{err}");

    std::fs::write(tmp.path().join("victim.sold"), b"SOLD\x01garbage").unwrap();
    std::fs::write(
        tmp.path().join("victim.json"),
        r#"{"config_hash":"x","command":"train-victim","data":{"victim_hash":"y","parameters":0,"steps":0,"epoch_losses":[],"eval":{"loss":0,"accuracy":0,"tasks":[]}}}"#,
    )
    .unwrap();
    assert_eq!(with_config(tmp.path(), &["attack"]).status.code(), Some(2));
}

#[test]
fn report_refuses_mixed_hashes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, seed) in [(a.path(), "1"), (b.path(), "2")] {
        ok(&with_config(dir, &["--seed", seed, "train-victim"]));
        ok(&with_config(dir, &["--seed", seed, "attack"]));
    }
    let o = with_config(a.path(), &["--seed", "1", "report", a.path().to_str().unwrap(), b.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8(o.stderr).unwrap().contains("refusing to mix"));
}

#[test]
fn output_directory_defaults_to_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let target = tmp.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_layerlock"))
        .args(["--config", cfg.to_str().unwrap(), "theory-beta"])
        .env("LAYERLOCK_OUT", &target)
        .output()
        .unwrap();
    ok(&o);
    assert!(target.join("theory_beta.csv").exists());
    assert!(target.join("theory-beta.manifest.json").exists());
}
