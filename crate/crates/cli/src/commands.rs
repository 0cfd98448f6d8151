//! The four subcommands and their artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rino::dictionary::{DictTrace, Dictionary};
use rino::json::format_f64;
use rino::operator::{DeepOnetModel, TrainTrace};
use rino::RinoError;
use serde::{Deserialize, Serialize};

use crate::ablation::{gpod_ablation, random_basis_ablation, BasisRow, ConsistencyPair, GpodRow};
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::dataset::{self, write_json, Split};
use crate::error::{CliError, Result};
use crate::pipeline::{evaluate, run_seed, SeedMetrics, Sensors};

pub const RESULTS: &str = "results.csv";
pub const REPORT: &str = "report.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryArtifact {
    pub config_hash: String,
    pub seed: u64,
    pub lambda: f64,
    pub dictionary: Dictionary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub experiment: ExperimentKind,
    pub config_hash: String,
    pub seed: u64,
    pub dataset_hash: String,
    pub model: DeepOnetModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub experiment: ExperimentKind,
    pub config_hash: String,
    pub seed: u64,
    pub dataset_hash: String,
    pub sensors: String,
    pub split: Split,
    pub count: usize,
    pub rel_mse: f64,
}

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub seed: u64,
    /// `rino` for the operator pipeline, else the reconstruction method.
    pub method: String,
    /// Sensor count or `random`; observed sensors for masked studies.
    pub sensors: String,
    pub split: String,
    pub rel_mse: f64,
}

const RESULT_HEADER: &str = "experiment,seed,method,M,split,rel_mse";

fn tag_line(config_hash: &str, seed: Option<u64>) -> String {
    match seed {
        Some(s) => format!("# config_hash={config_hash} seed={s}\n"),
        None => format!("# config_hash={config_hash}\n"),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(CliError::io(path))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(CliError::io(path))
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

/// Applies a `--seed` override.
pub fn with_seed(mut cfg: ExperimentConfig, seed: Option<u64>) -> ExperimentConfig {
    if let Some(s) = seed {
        cfg.seeds = vec![s];
    }
    cfg
}

pub fn gen_data(cfg: &ExperimentConfig, out: Option<&Path>, dry_run: bool) -> Result<PathBuf> {
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.dataset_dir.clone());
    if dry_run {
        info!("config valid; would write {} records to {}", cfg.data.n_train + cfg.data.n_test, dir.display());
        return Ok(dir);
    }
    let seed = cfg.seeds[0];
    let (manifest, records) = dataset::generate(cfg, seed)?;
    dataset::write(&dir, &manifest, &records)?;
    info!("wrote {} records to {}", records.len(), dir.display());
    Ok(dir)
}

fn trace_csv(config_hash: &str, seed: u64, dict: &DictTrace, train: Option<&TrainTrace>) -> String {
    let mut s = tag_line(config_hash, Some(seed));
    s.push_str("stage,step,atoms,loss,prediction_loss\n");
    for (k, e) in dict.epochs.iter().enumerate() {
        let _ = writeln!(s, "dictionary,{k},{},{},", e.atoms, format_f64(e.error));
    }
    if let Some(t) = train {
        for (k, (l, p)) in t.loss.iter().zip(&t.prediction_loss).enumerate() {
            let _ = writeln!(s, "operator,{k},,{},{}", format_f64(*l), format_f64(*p));
        }
    }
    s
}

fn results_csv(config_hash: &str, rows: &[ResultRow]) -> String {
    let mut s = tag_line(config_hash, None);
    s.push_str(RESULT_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{},{}", r.experiment, r.seed, r.method, r.sensors, r.split, format_f64(r.rel_mse));
    }
    s
}

#[derive(Serialize)]
struct RunSummary<'a, T: Serialize> {
    experiment: ExperimentKind,
    config_hash: &'a str,
    dataset_hash: &'a str,
    seeds: &'a [u64],
    per_seed: Vec<T>,
}

#[derive(Serialize)]
struct GpodSeed {
    seed: u64,
    rows: Vec<GpodRow>,
}

#[derive(Serialize)]
struct BasisSeed {
    seed: u64,
    masked_percent: f64,
    rows: Vec<BasisRow>,
    consistency: ConsistencyPair,
}

fn observed(grid: usize, r: f64) -> String {
    (grid - (grid as f64 * r / 100.0).round() as usize).to_string()
}

pub fn run(cfg: &ExperimentConfig, dataset_dir: Option<&Path>, out: &Path, dry_run: bool) -> Result<()> {
    let data_dir = dataset_dir.map(Path::to_path_buf).unwrap_or_else(|| cfg.dataset_dir.clone());
    if !data_dir.join(dataset::MANIFEST).is_file() {
        return Err(CliError::Config(format!("dataset {} does not exist; run gen-data first", data_dir.display())));
    }
    if dry_run {
        info!("config valid; dataset at {}", data_dir.display());
        return Ok(());
    }
    let data = dataset::read(&data_dir)?;
    if data.manifest.generator != cfg.experiment {
        return Err(CliError::Config(format!("dataset was generated for {}", data.manifest.generator.name())));
    }
    create_dir(out)?;
    let hash = cfg.hash();
    let name = cfg.experiment.name();
    let mut rows = Vec::new();
    let row = |seed, method: &str, sensors: String, split: &str, rel_mse| ResultRow {
        experiment: name.into(),
        seed,
        method: method.into(),
        sensors,
        split: split.into(),
        rel_mse,
    };
    match cfg.experiment {
        ExperimentKind::GpodAblation => {
            let mut per_seed = Vec::new();
            let mut table = tag_line(&hash, None);
            table.push_str("seed,masked_percent,gpod_train,gpod_test,gpod_converged,learned_train,learned_test,learned_atoms\n");
            for &seed in &cfg.seeds {
                let o = gpod_ablation(cfg, &data, seed)?;
                let dir = seed_dir(out, seed);
                create_dir(&dir)?;
                let mut trace = tag_line(&hash, Some(seed));
                trace.push_str("masked_percent,step,atoms,loss\n");
                for d in &o.dictionaries {
                    let art = DictionaryArtifact { config_hash: hash.clone(), seed, lambda: cfg.dictionary.lambda, dictionary: d.dictionary.clone() };
                    write_json(&dir.join(format!("dictionary-r{}.json", d.masked_percent)), &art)?;
                    for (k, e) in d.trace.epochs.iter().enumerate() {
                        let _ = writeln!(trace, "{},{k},{},{}", d.masked_percent, e.atoms, format_f64(e.error));
                    }
                }
                write_text(&dir.join("trace.csv"), &trace)?;
                for g in &o.rows {
                    let _ = writeln!(
                        table,
                        "{seed},{},{},{},{},{},{},{}",
                        g.masked_percent,
                        format_f64(g.gpod_train),
                        format_f64(g.gpod_test),
                        g.gpod_converged,
                        format_f64(g.learned_train),
                        format_f64(g.learned_test),
                        g.learned_atoms
                    );
                    let m = observed(data.manifest.config.grid, g.masked_percent);
                    rows.push(row(seed, "gpod", m.clone(), "train", g.gpod_train));
                    rows.push(row(seed, "gpod", m.clone(), "test", g.gpod_test));
                    rows.push(row(seed, "learned", m.clone(), "train", g.learned_train));
                    rows.push(row(seed, "learned", m, "test", g.learned_test));
                }
                write_json(&dir.join("metrics.json"), &GpodSeed { seed, rows: o.rows.clone() })?;
                per_seed.push(GpodSeed { seed, rows: o.rows });
            }
            write_text(&out.join("table2.csv"), &table)?;
            write_json(&out.join("metrics.json"), &RunSummary { experiment: cfg.experiment, config_hash: &hash, dataset_hash: &data.hash, seeds: &cfg.seeds, per_seed })?;
        }
        ExperimentKind::RandomBasisAblation => {
            let mut per_seed = Vec::new();
            let mut table = tag_line(&hash, None);
            table.push_str("seed,masked_percent,basis,atoms,test_rel_mse\n");
            for &seed in &cfg.seeds {
                let o = random_basis_ablation(cfg, &data, seed)?;
                let dir = seed_dir(out, seed);
                create_dir(&dir)?;
                let art = DictionaryArtifact { config_hash: hash.clone(), seed, lambda: cfg.dictionary.lambda, dictionary: o.dictionary.dictionary.clone() };
                write_json(&dir.join("dictionary.json"), &art)?;
                write_text(&dir.join("trace.csv"), &trace_csv(&hash, seed, &o.dictionary.trace, None))?;
                write_json(&dir.join("consistency.json"), &o.consistency)?;
                let m = observed(data.manifest.config.grid, o.masked_percent);
                for b in &o.rows {
                    let _ = writeln!(table, "{seed},{},{},{},{}", o.masked_percent, b.basis, b.atoms, format_f64(b.test_rel_mse));
                    rows.push(row(seed, &b.basis, m.clone(), "test", b.test_rel_mse));
                }
                let s = BasisSeed { seed, masked_percent: o.masked_percent, rows: o.rows, consistency: o.consistency };
                write_json(&dir.join("metrics.json"), &s)?;
                per_seed.push(s);
            }
            write_text(&out.join("random_basis.csv"), &table)?;
            write_json(&out.join("metrics.json"), &RunSummary { experiment: cfg.experiment, config_hash: &hash, dataset_hash: &data.hash, seeds: &cfg.seeds, per_seed })?;
        }
        _ => {
            let mut per_seed: Vec<SeedMetrics> = Vec::new();
            for &seed in &cfg.seeds {
                let o = run_seed(cfg, &data, seed)?;
                let dir = seed_dir(out, seed);
                create_dir(&dir)?;
                let dict_art = DictionaryArtifact { config_hash: hash.clone(), seed, lambda: cfg.dictionary.lambda, dictionary: o.dictionary };
                write_json(&dir.join("dictionary.json"), &dict_art)?;
                let model_art = ModelArtifact { experiment: cfg.experiment, config_hash: hash.clone(), seed, dataset_hash: data.hash.clone(), model: o.model };
                write_json(&dir.join("model.json"), &model_art)?;
                write_text(&dir.join("trace.csv"), &trace_csv(&hash, seed, &o.dict_trace, Some(&o.train_trace)))?;
                write_json(&dir.join("metrics.json"), &o.metrics)?;
                let m = &o.metrics;
                rows.push(row(seed, "rino", "random".into(), "train", m.train_rel_mse));
                rows.push(row(seed, "rino", "random".into(), "test", m.test_rel_mse));
                for s in &m.sweep {
                    rows.push(row(seed, "rino", s.sensors.to_string(), "test", s.test_rel_mse));
                }
                per_seed.push(o.metrics);
            }
            write_json(&out.join("metrics.json"), &RunSummary { experiment: cfg.experiment, config_hash: &hash, dataset_hash: &data.hash, seeds: &cfg.seeds, per_seed })?;
        }
    }
    write_text(&out.join(RESULTS), &results_csv(&hash, &rows))?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Scores a trained model on the test split of a dataset.
pub fn eval(model_dir: &Path, dataset_dir: &Path, sensors: Sensors, out: Option<&Path>) -> Result<EvalMetrics> {
    let model: ModelArtifact = read_json(&model_dir.join("model.json"))?;
    let dict: DictionaryArtifact = read_json(&model_dir.join("dictionary.json"))?;
    if dict.dictionary.fingerprint() != model.model.input_fingerprint {
        return Err(CliError::Eval(RinoError::FingerprintMismatch {
            expected: model.model.input_fingerprint.clone(),
            found: dict.dictionary.fingerprint().into(),
        }));
    }
    let data = dataset::read(dataset_dir)?;
    if data.hash != model.dataset_hash {
        return Err(CliError::Eval(RinoError::FingerprintMismatch { expected: model.dataset_hash.clone(), found: data.hash.clone() }));
    }
    let rel_mse = evaluate(&model.model, &dict.dictionary, dict.lambda, &data, Split::Test, sensors)?;
    let metrics = EvalMetrics {
        experiment: model.experiment,
        config_hash: model.config_hash,
        seed: model.seed,
        dataset_hash: data.hash.clone(),
        sensors: sensors.to_string(),
        split: Split::Test,
        count: data.split(Split::Test).count(),
        rel_mse,
    };
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| model_dir.join(format!("eval-{sensors}.json")));
    write_json(&path, &metrics)?;
    info!("{} sensors: test relative MSE {rel_mse:.4e}", sensors);
    Ok(metrics)
}

fn parse_results(text: &str) -> Result<(String, Vec<ResultRow>)> {
    let bad = |k: usize| CliError::Config(format!("{RESULTS} line {}: malformed", k + 1));
    let mut hash = String::new();
    let mut rows = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if let Some(tag) = line.strip_prefix("# config_hash=") {
            hash = tag.split_whitespace().next().unwrap_or_default().to_string();
            continue;
        }
        if line == RESULT_HEADER || line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(bad(k));
        }
        rows.push(ResultRow {
            experiment: f[0].into(),
            seed: f[1].parse().map_err(|_| bad(k))?,
            method: f[2].into(),
            sensors: f[3].into(),
            split: f[4].into(),
            rel_mse: f[5].parse().map_err(|_| bad(k))?,
        });
    }
    Ok((hash, rows))
}

/// Mean and standard deviation over seeds of every result, in the order
/// the results first appear.
pub fn report(run_dir: &Path) -> Result<PathBuf> {
    let path = run_dir.join(RESULTS);
    let text = fs::read_to_string(&path).map_err(CliError::io(&path))?;
    let (hash, rows) = parse_results(&text)?;
    let mut groups: Vec<((String, String, String, String), Vec<f64>)> = Vec::new();
    for r in rows {
        let key = (r.experiment, r.method, r.sensors, r.split);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r.rel_mse),
            None => groups.push((key, vec![r.rel_mse])),
        }
    }
    let mut s = tag_line(&hash, None);
    s.push_str("experiment,method,M,split,mean,std,n\n");
    for ((e, m, sensors, split), v) in &groups {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        let _ = writeln!(s, "{e},{m},{sensors},{split},{},{},{}", format_f64(mean), format_f64(std), v.len());
    }
    let out = run_dir.join(REPORT);
    write_text(&out, &s)?;
    Ok(out)
}
