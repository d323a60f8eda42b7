use std::path::Path;
use std::process::{Command, Output};

use nalgebra::DMatrix;
use padloop_core::data::{save_features, FeatureTable};
use padloop_core::signal::FeatureMode;

const CONFIG: &str = r#"
seed = 4
elicitation_count = 30
induction_count = 16
pretrain_count = 40
horizon = 12

[pipeline.train]
epochs = 2
finetune_epochs = 5

[pipeline.perf]
grid_size = 3
repeats = 1
"#;

fn padloop(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_padloop"))
        .current_dir(dir)
        .env_remove("PADLOOP_SEED")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let mut full = vec!["--config", "run.toml"];
    full.extend_from_slice(args);
    let out = padloop(dir, &full);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn value(stdout: &str, key: &str) -> String {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {stdout}"))
        .to_string()
}

fn trained_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.toml"), CONFIG).unwrap();
    for kind in ["elicitation", "induction", "pretrain"] {
        ok(d, &["gen-data", "--kind", kind, "--out", &format!("data/{kind}.csv")]);
    }
    for stage in ["dbn", "pad-gp", "perf-gp"] {
        ok(d, &["train", "--stage", stage]);
    }
    dir
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = padloop(dir.path(), &["gen-data", "--kind", "induction"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_artifact_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = padloop(dir.path(), &["train", "--stage", "pad-gp"]);
    assert_eq!(out.status.code(), Some(3));
    let out = padloop(dir.path(), &["simulate"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bad_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "sed = 3\n").unwrap();
    let out = padloop(dir.path(), &["--config", "run.toml", "gen-data", "--kind", "induction", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn env_seed_overrides_config_and_flag_overrides_env() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.toml"), CONFIG).unwrap();
    let gen = |out: &str, env: Option<&str>, flag: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_padloop"));
        cmd.current_dir(d).env_remove("PADLOOP_SEED");
        if let Some(s) = env {
            cmd.env("PADLOOP_SEED", s);
        }
        cmd.args(["--config", "run.toml"]);
        if let Some(s) = flag {
            cmd.args(["--seed", s]);
        }
        cmd.args(["gen-data", "--kind", "induction", "--count", "4", "--out", out]);
        assert!(cmd.output().unwrap().status.success());
        std::fs::read(d.join(out)).unwrap()
    };
    let from_config = gen("a.csv", None, None);
    let from_env = gen("b.csv", Some("9"), None);
    let from_flag = gen("c.csv", None, Some("9"));
    let flag_over_env = gen("d.csv", Some("1"), Some("9"));
    assert_ne!(from_config, from_env);
    assert_eq!(from_env, from_flag);
    assert_eq!(from_flag, flag_over_env);
}

#[test]
fn trained_models_predict_simulate_and_report() {
    let dir = trained_dir();
    let d = dir.path();

    let out = ok(d, &["predict", "--features-file", "data/induction.csv", "--out", "pred.csv"]);
    assert_eq!(value(&out, "rows"), "16");

    let empty = FeatureTable {
        mode: FeatureMode::Bands,
        ids: Vec::new(),
        features: DMatrix::zeros(0, FeatureMode::Bands.dim()),
    };
    save_features(&d.join("empty.csv"), &empty).unwrap();
    let out = ok(d, &["predict", "--features-file", "empty.csv", "--out", "none.csv"]);
    assert_eq!(value(&out, "rows"), "0");
    let text = std::fs::read_to_string(d.join("none.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);

    ok(d, &["--mode", "eeg", "gen-data", "--kind", "pretrain", "--count", "3", "--out", "eeg.csv"]);
    let out = padloop(d, &["--config", "run.toml", "predict", "--features-file", "eeg.csv", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));

    let off = ok(d, &["simulate", "--control", "off", "--out", "off.csv"]);
    assert_eq!(value(&off, "stimuli"), "0");
    assert_eq!(value(&off, "steps"), "12");
    ok(d, &["simulate", "--control", "on", "--out", "on.csv"]);

    let rep = ok(d, &["report", "--trace", "off.csv", "--out", "rep.csv", "--table", "steps.csv"]);
    assert_eq!(value(&rep, "stimuli_nonnull"), "0");
    let table = std::fs::read_to_string(d.join("steps.csv")).unwrap();
    let q: Vec<f64> = table
        .lines()
        .skip(2)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(q.len(), 12);
    let mean = q.iter().sum::<f64>() / q.len() as f64;
    let reported: f64 = value(&rep, "mean_q").parse().unwrap();
    assert!((mean - reported).abs() < 1e-12, "{mean} vs {reported}");

    let both = ok(d, &["report", "--trace", "on.csv", "--trace", "off.csv", "--out", "pair.csv"]);
    let diff: f64 = value(&both, "diff_mean_q").parse().unwrap();
    let a: f64 = value(&both, "trace1_mean_q").parse().unwrap();
    let b: f64 = value(&both, "trace2_mean_q").parse().unwrap();
    assert!((diff - (a - b)).abs() < 1e-12);
    let csv = std::fs::read_to_string(d.join("pair.csv")).unwrap();
    assert!(csv.lines().last().unwrap().starts_with("paired,"));
}

#[test]
fn three_traces_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = padloop(
        dir.path(),
        &["report", "--trace", "a", "--trace", "b", "--trace", "c", "--out", "r.csv"],
    );
    assert_eq!(out.status.code(), Some(2));
}
