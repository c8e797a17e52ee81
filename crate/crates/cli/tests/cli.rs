use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use featlab::harness::{RunConfig, RunManifest};

fn featlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_featlab")).args(args).output().unwrap()
}

fn small_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.experiment.classes = 3;
    cfg.experiment.dim = 16;
    cfg.experiment.patches = 12;
    cfg.experiment.train_size = 60;
    cfg.experiment.max_iters = 20;
    cfg.train.log_every = 5;
    cfg.eval.n_test = 50;
    cfg
}

fn write_config(dir: &Path, name: &str, cfg: &RunConfig) -> String {
    let path = dir.join(name);
    fs::write(&path, cfg.to_json()).unwrap();
    path.to_str().unwrap().to_string()
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines().skip(2).collect()
}

#[test]
fn validate_defaults_passes() {
    let out = featlab(&["validate", "--preset", "paper-desk"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(!String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn validate_names_the_violated_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let mut mix = RunConfig::default();
    mix.augment.c2 = 0.4;
    mix.augment.c3 = 0.3;
    let out = featlab(&["validate", "--config", &write_config(dir.path(), "mix.json", &mix)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL C2+C3 < 0.6"));

    let mut combined = RunConfig::default();
    combined.augment.c1_combined = 0.15;
    let out = featlab(&["validate", "--config", &write_config(dir.path(), "a3.json", &combined)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("C1 > C2+C3"));
}

#[test]
fn run_with_invalid_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.augment.c1 = 0.5;
    let path = write_config(dir.path(), "bad.json", &cfg);
    let out_dir = dir.path().join("out");
    let out = featlab(&["run", "--config", &path, "--mode", "a1", "--seeds", "1", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("C1 in (0, 0.4)"));
}

#[test]
fn usage_errors_exit_four() {
    assert_eq!(featlab(&["bogus"]).status.code(), Some(4));
    assert_eq!(featlab(&["run", "--mode", "a9", "--out", "/nonexistent"]).status.code(), Some(4));
    assert_eq!(featlab(&["validate", "--preset", "nope"]).status.code(), Some(4));
    assert_eq!(featlab(&["run", "--seeds", "x", "--out", "/nonexistent"]).status.code(), Some(4));
}

#[test]
fn single_seed_run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "cfg.json", &small_config());
    let out_dir = dir.path().join("out");
    let out = featlab(&["run", "--config", &path, "--mode", "vanilla", "--seeds", "7", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert!(summary.starts_with("# schema=1\nmode,n_seeds,dataset_checksum,"));
    assert_eq!(data_rows(&summary).len(), 1);
    let metrics = fs::read_to_string(out_dir.join("vanilla/seed_7/metrics.csv")).unwrap();
    assert!(metrics.starts_with("# schema=1\n"));
    assert!(!metrics.contains('\r'));

    let manifest: RunManifest =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.seeds, vec![7]);
    assert_eq!(manifest.files.len(), 4);
    assert!(manifest.verify().unwrap().is_empty());
    let snapshot = serde_json::to_string(&manifest.config).unwrap();
    assert_eq!(RunConfig::from_json(&snapshot).unwrap(), manifest.config);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "cfg.json", &small_config());
    let mut csvs = Vec::new();
    for name in ["a", "b"] {
        let out_dir = dir.path().join(name);
        let out = featlab(&["run", "--config", &path, "--mode", "a2,cutmix", "--seeds", "0..2", "--out", out_dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
        csvs.push(
            ["a2/seed_0", "a2/seed_1", "cutmix/seed_1"]
                .map(|d| fs::read(out_dir.join(d).join("metrics.csv")).unwrap()),
        );
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn compare_shares_the_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "cfg.json", &small_config());
    let out_dir = dir.path().join("out");
    let out = featlab(&["compare", "--config", &path, "--seeds", "3", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    let rows = data_rows(&summary);
    assert_eq!(rows.len(), 4);
    let modes: Vec<&str> = rows.iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(modes, ["vanilla", "a1", "a2", "a3"]);
    let checksums: Vec<&str> = rows.iter().map(|r| r.split(',').nth(2).unwrap()).collect();
    assert!(checksums.iter().all(|c| *c == checksums[0] && c.len() == 64));
}

#[test]
fn numeric_abort_exits_three_with_dump() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.experiment.init_scale = 1e307;
    let path = write_config(dir.path(), "cfg.json", &cfg);
    let out_dir = dir.path().join("out");
    let out = featlab(&["run", "--config", &path, "--seeds", "0", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("last_finite.json"));
    assert!(out_dir.join("vanilla/seed_0/last_finite.json").exists());
}

#[test]
fn checks_pass() {
    assert_eq!(featlab(&["gradcheck"]).status.code(), Some(0));
    assert_eq!(featlab(&["lemma1check", "--draws", "2000"]).status.code(), Some(0));
}
