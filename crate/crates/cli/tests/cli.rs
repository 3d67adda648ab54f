use std::path::Path;
use std::process::{Command, Output};

use higsfa::{load_dataset, load_model, save_dataset};

const CONFIG: &str = r#"{
  "name": "cli-test",
  "seed": 5,
  "dataset": {"generator": "multilabel", "n": 1000},
  "graph": {"type": "combined", "balance": true, "parts": [
    {"type": "serial", "label": "age", "groups": 20},
    {"type": "clustered", "label": "race"},
    {"type": "clustered", "label": "gender"}
  ]},
  "networks": [{"name": "h", "preset": "multilabel_higsfa"}],
  "pca_baseline": true,
  "tasks": [
    {"label": "age", "kind": "regression", "features": 4},
    {"label": "gender", "kind": "classification", "features": 4}
  ]
}"#;

fn higsfa(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_higsfa"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.json"), CONFIG).unwrap();
    dir
}

#[test]
fn pipeline_gen_train_extract_reconstruct_evaluate() {
    let dir = setup();
    let d = dir.path();
    let o = higsfa(d, &["--config", "exp.json", "--out", "data.hgsd", "gen"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let data = load_dataset(&d.join("data.hgsd")).unwrap();
    assert_eq!(data.x.dim(), (1000, 16));

    let o = higsfa(d, &["train", "--config", "exp.json", "--data", "data.hgsd", "--out", "m.hgsf"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let model = load_model(&d.join("m.hgsf")).unwrap();
    assert_eq!(model.network.output_dim(), 4);
    assert!(model.reconstruction.is_some());

    let o = higsfa(d, &["inspect-model", "--model", "m.hgsf"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("layer 1: 1x2 nodes"), "{text}");
    assert!(text.contains("layer 2: 1x1 nodes"), "{text}");

    let o = higsfa(d, &["extract", "--model", "m.hgsf", "--data", "data.hgsd", "--out", "f.hgsd"]);
    assert_eq!(code(&o), 0);
    let feats = load_dataset(&d.join("f.hgsd")).unwrap();
    assert_eq!(feats.x.dim(), (1000, 4));
    assert_eq!(feats.splits, data.splits);
    assert_eq!(feats.labels, data.labels);
    let direct = model.network.extract(&data.x.view()).unwrap();
    assert_eq!(feats.x, direct);

    let o = higsfa(d, &["reconstruct", "--model", "m.hgsf", "--data", "f.hgsd", "--out", "r.hgsd"]);
    assert_eq!(code(&o), 0);
    let rec = load_dataset(&d.join("r.hgsd")).unwrap();
    assert_eq!(rec.x.dim(), (1000, 16));

    let o = higsfa(d, &["evaluate", "--config", "exp.json", "--data", "f.hgsd", "--out", "ev.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ev: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("ev.json")).unwrap()).unwrap();
    let rate = ev[1]["classification_rate"].as_f64().unwrap();
    assert!(rate > 0.9, "gender rate {rate}");
    let mae = ev[0]["soft"]["mae"].as_f64().unwrap();
    let chance = ev[0]["chance"]["mae"].as_f64().unwrap();
    assert!(mae < chance, "{mae} vs chance {chance}");
}

#[test]
fn run_writes_reports_and_is_deterministic() {
    let dir = setup();
    let d = dir.path();
    for out in ["a", "b"] {
        let o = higsfa(d, &["--config", "exp.json", "--threads", "2", "--out", out, "run"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["metrics.json", "deltas.csv", "cs.csv", "erec.csv", "summary.txt"] {
        let a = std::fs::read(d.join("a").join(f)).unwrap();
        let b = std::fs::read(d.join("b").join(f)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{f} differs between runs");
    }
}

#[test]
fn seed_flag_changes_generated_data() {
    let dir = setup();
    let d = dir.path();
    assert_eq!(code(&higsfa(d, &["--config", "exp.json", "--out", "a.hgsd", "gen"])), 0);
    assert_eq!(code(&higsfa(d, &["--config", "exp.json", "--seed", "6", "--out", "b.hgsd", "gen"])), 0);
    let a = load_dataset(&d.join("a.hgsd")).unwrap();
    let b = load_dataset(&d.join("b.hgsd")).unwrap();
    assert_ne!(a.x, b.x);
}

#[test]
fn gen_accepts_bare_dataset_spec() {
    let dir = setup();
    let d = dir.path();
    std::fs::write(d.join("ds.json"), r#"{"generator": "toy-infoloss", "n": 500}"#).unwrap();
    let o = higsfa(d, &["--config", "ds.json", "--out", "t.hgsd", "gen"]);
    assert_eq!(code(&o), 2, "a bare spec needs --seed");
    let o = higsfa(d, &["--config", "ds.json", "--seed", "1", "--out", "t.hgsd", "gen"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(load_dataset(&d.join("t.hgsd")).unwrap().x.dim(), (500, 4));
}

#[test]
fn exit_codes() {
    let dir = setup();
    let d = dir.path();
    // usage and configuration errors
    assert_eq!(code(&higsfa(d, &["bogus"])), 2);
    assert_eq!(code(&higsfa(d, &["run"])), 2);
    std::fs::write(d.join("noseed.json"), r#"{"name": "x"}"#).unwrap();
    assert_eq!(code(&higsfa(d, &["--config", "noseed.json", "run"])), 2);
    assert_eq!(code(&higsfa(d, &["--preset", "no-such-preset", "run"])), 2);
    // io and format errors
    assert_eq!(code(&higsfa(d, &["--config", "missing.json", "run"])), 4);
    std::fs::write(d.join("junk.hgsf"), b"not a model").unwrap();
    assert_eq!(code(&higsfa(d, &["inspect-model", "--model", "junk.hgsf"])), 4);
    // numeric errors: constant inputs leave nothing to whiten
    assert_eq!(code(&higsfa(d, &["--config", "exp.json", "--out", "data.hgsd", "gen"])), 0);
    let mut data = load_dataset(&d.join("data.hgsd")).unwrap();
    data.x.fill(0.0);
    save_dataset(&data, &d.join("zero.hgsd")).unwrap();
    let o = higsfa(d, &["train", "--config", "exp.json", "--data", "zero.hgsd", "--out", "z.hgsf"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn presets_listed() {
    let dir = setup();
    let o = higsfa(dir.path(), &["inspect-model", "--list-presets"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("table2_higsfa"));
    assert!(text.contains("latent-regression"));
}
