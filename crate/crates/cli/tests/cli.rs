use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"schema_version = 1
seed = 3

[season]
days = 6

[synth]
replication = 5

[train.wmsdte]
n_trees = 10

[train.tcsmsb]
rounds = 10

[optimize.scp]
k_max = 5

[simulate]
trials = 20000
replay_trials = 20000
bins = 20
"#;

fn relgrid(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relgrid"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn workspace() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    (dir, cfg)
}

#[test]
fn theory_check_default_grid_is_strict() {
    let dir = tempfile::tempdir().unwrap();
    let o = relgrid(dir.path(), &["theory-check", "--out", "r"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("r/theory/grid.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let col = rdr.headers().unwrap().iter().position(|h| h == "strict").unwrap();
    let rows: Vec<_> = rdr.records().map(|r| r.unwrap()).collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| &r[col] == "true"));
}

#[test]
fn theory_check_without_strict_gap_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("eq.toml"), "schema_version = 1\n[theory]\ndeltas = [1.0]\n").unwrap();
    let o = relgrid(dir.path(), &["theory-check", "--config", "eq.toml", "--out", "r"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_2_with_location() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "schema_version = 1\n\n[simulate]\ntrials = -4\n").unwrap();
    let o = relgrid(dir.path(), &["ingest", "--config", "bad.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));

    std::fs::write(dir.path().join("old.toml"), "schema_version = 0\n").unwrap();
    let o = relgrid(dir.path(), &["ingest", "--config", "old.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("schema_version"));

    let o = relgrid(dir.path(), &["ingest", "--config", "missing.toml"]);
    assert_eq!(o.status.code(), Some(2));

    let o = relgrid(dir.path(), &["ingest", "--scenario", "medium"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_upstream_artifacts_name_the_stage() {
    let (dir, _) = workspace();
    let o = relgrid(dir.path(), &["train", "--config", "small.toml", "--out", "r"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("`ingest`"), "{}", stderr(&o));

    assert!(relgrid(dir.path(), &["ingest", "--config", "small.toml", "--out", "r"]).status.success());
    let o = relgrid(dir.path(), &["train", "--config", "small.toml", "--out", "r"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("`synth`"), "{}", stderr(&o));

    let o = relgrid(dir.path(), &["report", "--config", "small.toml", "--out", "r"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn training_twice_gives_identical_models() {
    let (dir, _) = workspace();
    for stage in ["ingest", "synth"] {
        let o = relgrid(dir.path(), &[stage, "--config", "small.toml", "--out", "r"]);
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
    }
    for model in ["wmsdte", "tcsmsb"] {
        let mut digests = Vec::new();
        for _ in 0..2 {
            let o = relgrid(dir.path(), &["train", "--config", "small.toml", "--out", "r", "--model", model, "--seed", "7"]);
            assert!(o.status.success(), "{}", stderr(&o));
            let bus = std::fs::read(dir.path().join("r/model/bus.json")).unwrap();
            let line = std::fs::read(dir.path().join("r/model/line.json")).unwrap();
            digests.push((relgrid::seed::digest_hex(&bus), relgrid::seed::digest_hex(&line)));
        }
        assert_eq!(digests[0], digests[1], "{model}");
        let text = std::fs::read_to_string(dir.path().join("r/model/bus.json")).unwrap();
        let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(doc["model"]["kind"], model);
    }
}

const ARTIFACTS: [&str; 12] = [
    "dataset/schema.toml",
    "dataset/load.csv",
    "corpus/bus.csv",
    "model/bus.json",
    "model/metrics.csv",
    "calibration/params.json",
    "optimize/params.json",
    "optimize/trace.csv",
    "optimize/dispatch.csv",
    "simulate/histogram_mcrm_monte_carlo.csv",
    "theory/grid.csv",
    "report/manifest.csv",
];

#[test]
fn pipeline_equals_the_stage_composition() {
    let (dir, _) = workspace();
    let o = relgrid(dir.path(), &["pipeline", "--config", "small.toml", "--out", "whole"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for stage in ["ingest", "synth", "train", "calibrate", "optimize", "simulate", "theory-check", "report"] {
        let o = relgrid(dir.path(), &[stage, "--config", "small.toml", "--out", "parts"]);
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
    }
    for a in ARTIFACTS {
        assert!(dir.path().join("whole").join(a).exists(), "{a}");
    }
    let whole = std::fs::read_to_string(dir.path().join("whole/report/manifest.csv")).unwrap();
    let parts = std::fs::read_to_string(dir.path().join("parts/report/manifest.csv")).unwrap();
    assert_eq!(whole, parts);
    assert!(whole.lines().count() > 25);
}
