use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rino(args: &[&str]) -> Output {
    rino_env(args, None)
}

fn rino_env(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rino"));
    cmd.args(args).env("RUST_LOG", "warn").env_remove("RINO_THREADS");
    if let Some(t) = threads {
        cmd.env("RINO_THREADS", t);
    }
    cmd.output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const TINY: &str = r#"{
  "experiment": "antiderivative",
  "seeds": [1],
  "dataset_dir": "data",
  "data": {"n_train": 8, "n_test": 4, "subsample": {"m_min": 10, "m_max": 15}},
  "dictionary": {"epochs_per_atom": 20, "max_atoms": 3},
  "train": {"epochs": 20},
  "eval_sensors": [51]
}"#;

/// Generates data and runs the tiny config; returns the run directory.
fn tiny_run(dir: &Path, config: &str) -> String {
    let cfg = write_config(dir, config);
    let out = dir.join("out");
    assert_eq!(code(&rino(&["gen-data", "--config", &cfg])), 0);
    let o = rino(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out.to_str().unwrap().to_string()
}

#[test]
fn help_lists_every_command() {
    let out = rino(&["--help"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    for c in ["gen-data", "run", "eval", "report"] {
        assert!(text.contains(c), "{c} missing from help");
    }
}

#[test]
fn malformed_json_reports_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "{\n  \"experiment\": \"antiderivative\",\n  \"seeds\": [1,,]\n}");
    let out = rino(&["gen-data", "--config", &cfg]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

#[test]
fn unknown_and_mistyped_fields_report_their_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"experiment": "darcy1d", "data": {"n_trian": 5}}"#);
    let out = rino(&["gen-data", "--config", &cfg, "--dry-run"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("n_trian"), "{}", stderr(&out));

    let cfg = write_config(dir.path(), r#"{"experiment": "darcy1d", "train": {"epochs": "many"}}"#);
    let out = rino(&["run", "--config", &cfg, "--dry-run"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("train.epochs"), "{}", stderr(&out));
}

#[test]
fn semantic_validation_fails_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    for bad in [
        r#"{"experiment": "darcy2d", "eval_sensors": [50]}"#,
        r#"{"experiment": "antiderivative", "seeds": []}"#,
        r#"{"experiment": "antiderivative", "data": {"subsample": {"m_min": 80, "m_max": 20}}}"#,
        r#"{"experiment": "gpod_ablation", "ablation": {"mask_percents": [100]}}"#,
        r#"{"experiment": "heat"}"#,
    ] {
        let cfg = write_config(dir.path(), bad);
        let out = rino(&["gen-data", "--config", &cfg, "--dry-run"]);
        assert_eq!(code(&out), 2, "{bad}: {}", stderr(&out));
    }
}

#[test]
fn missing_files_fail_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(code(&rino(&["gen-data", "--config", missing.to_str().unwrap()])), 3);
    assert_eq!(code(&rino(&["report", "--out", dir.path().to_str().unwrap()])), 3);
}

#[test]
fn thread_override_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    assert_eq!(code(&rino_env(&["gen-data", "--config", &cfg, "--dry-run"], Some("0"))), 2);
    assert_eq!(code(&rino_env(&["gen-data", "--config", &cfg, "--dry-run"], Some("two"))), 2);
    assert_eq!(code(&rino_env(&["gen-data", "--config", &cfg, "--dry-run"], Some("2"))), 0);
}

#[test]
fn dry_runs_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    assert_eq!(code(&rino(&["gen-data", "--config", &cfg, "--dry-run"])), 0);
    assert!(!dir.path().join("data").exists());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    // Validating a run also checks that its dataset is present.
    assert_eq!(code(&rino(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--dry-run"])), 2);
    assert_eq!(code(&rino(&["gen-data", "--config", &cfg])), 0);
    assert_eq!(code(&rino(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--dry-run"])), 0);
    assert!(!out.exists());
}

#[test]
fn run_without_dataset_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    let o = rino(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("gen-data"));
}

#[test]
fn run_writes_tagged_artifacts_and_report_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let out = tiny_run(dir.path(), TINY);
    let out = Path::new(&out);
    for f in ["metrics.json", "results.csv", "seed-1/dictionary.json", "seed-1/model.json", "seed-1/trace.csv", "seed-1/metrics.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    let mut lines = results.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    assert_eq!(lines.next().unwrap(), "experiment,seed,method,M,split,rel_mse");
    assert!(results.contains(",51,test,"));
    assert!(fs::read_to_string(out.join("seed-1/trace.csv")).unwrap().starts_with("# config_hash="));

    let o = rino(&["report", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.lines().any(|l| l.starts_with("experiment,method,M,split,mean,std,n")));
}

#[test]
fn eval_checks_dictionary_and_dataset_fingerprints() {
    let dir = tempfile::tempdir().unwrap();
    let out = tiny_run(dir.path(), TINY);
    let model = Path::new(&out).join("seed-1");
    let data = dir.path().join("data");
    let m = model.to_str().unwrap();
    let d = data.to_str().unwrap();

    let ok = rino(&["eval", "--model", m, "--dataset", d, "--sensors", "26"]);
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));
    let metrics: serde_json::Value = serde_json::from_slice(&fs::read(model.join("eval-26.json")).unwrap()).unwrap();
    assert_eq!(metrics["sensors"], "26");
    assert!(metrics["rel_mse"].as_f64().unwrap().is_finite());

    // A dataset drawn with another seed has a different hash.
    let other = dir.path().join("other");
    let cfg = dir.path().join("config.json");
    let g = rino(&["gen-data", "--config", cfg.to_str().unwrap(), "--seed", "9", "--out", other.to_str().unwrap()]);
    assert_eq!(code(&g), 0);
    let o = rino(&["eval", "--model", m, "--dataset", other.to_str().unwrap()]);
    assert_eq!(code(&o), 7, "{}", stderr(&o));

    // A dictionary from a different seed no longer matches the model.
    let cfg2 = TINY.replace("\"seeds\": [1]", "\"seeds\": [2]");
    let dir2 = tempfile::tempdir().unwrap();
    let out2 = tiny_run(dir2.path(), &cfg2);
    fs::copy(Path::new(&out2).join("seed-2/dictionary.json"), model.join("dictionary.json")).unwrap();
    let o = rino(&["eval", "--model", m, "--dataset", d]);
    assert_eq!(code(&o), 7, "{}", stderr(&o));
}

#[test]
fn gen_data_seed_override_changes_only_the_draw() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&rino(&["gen-data", "--config", &cfg, "--out", a.to_str().unwrap()])), 0);
    assert_eq!(code(&rino(&["gen-data", "--config", &cfg, "--seed", "5", "--out", b.to_str().unwrap()])), 0);
    assert_ne!(fs::read(a.join("data.jsonl")).unwrap(), fs::read(b.join("data.jsonl")).unwrap());
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(b.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["counts"]["train"], 8);
}

#[test]
fn every_experiment_runs_end_to_end_at_toy_size() {
    let configs = [
        r#"{"experiment": "darcy1d", "dataset_dir": "data", "data": {"n_train": 8, "n_test": 3},
            "dictionary": {"epochs_per_atom": 10, "max_atoms": 3}, "train": {"epochs": 10}}"#,
        r#"{"experiment": "darcy2d", "dataset_dir": "data", "data": {"n_train": 6, "n_test": 3, "grid": 8, "subsample": {"m_min": 20, "m_max": 40}},
            "dictionary": {"epochs_per_atom": 10, "max_atoms": 3}, "train": {"epochs": 10}, "eval_sensors": [64, 16]}"#,
        r#"{"experiment": "burgers", "dataset_dir": "data", "data": {"n_train": 8, "n_test": 3, "grid": 33, "subsample": {"m_min": 10, "m_max": 20}, "burgers": {"n_times": 11}},
            "dictionary": {"epochs_per_atom": 10, "max_atoms": 3}, "operator": {"trunk": {"kind": "pod", "modes": 5}}, "train": {"epochs": 10}, "eval_sensors": [33, 11]}"#,
    ];
    for config in configs {
        let dir = tempfile::tempdir().unwrap();
        let out = tiny_run(dir.path(), config);
        let metrics: serde_json::Value = serde_json::from_slice(&fs::read(Path::new(&out).join("seed-0/metrics.json")).unwrap()).unwrap();
        assert!(metrics["test_rel_mse"].as_f64().unwrap().is_finite(), "{config}");
    }
}
