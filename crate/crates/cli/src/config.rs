//! Experiment configuration. A config file only needs the fields it wants
//! to change; everything else comes from the per-experiment defaults.

use std::path::{Path, PathBuf};

use rino::baselines::{AnalyticKind, GpodConfig};
use rino::datagen::{BurgersConfig, SubsampleConfig};
use rino::dictionary::DictLearnConfig;
use rino::inr::{Activation, MlpSpec};
use rino::operator::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Antiderivative,
    Darcy1d,
    Darcy2d,
    Burgers,
    GpodAblation,
    RandomBasisAblation,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Antiderivative => "antiderivative",
            ExperimentKind::Darcy1d => "darcy1d",
            ExperimentKind::Darcy2d => "darcy2d",
            ExperimentKind::Burgers => "burgers",
            ExperimentKind::GpodAblation => "gpod_ablation",
            ExperimentKind::RandomBasisAblation => "random_basis_ablation",
        }
    }

    pub fn is_ablation(self) -> bool {
        matches!(self, ExperimentKind::GpodAblation | ExperimentKind::RandomBasisAblation)
    }

    /// Spatial dimension of the input functions.
    pub fn input_dim(self) -> usize {
        if self == ExperimentKind::Darcy2d {
            2
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub n_train: usize,
    pub n_test: usize,
    /// Sensors per side of the full input grid.
    pub grid: usize,
    pub length_scale: f64,
    /// Range of the random sensor count kept per input realization.
    pub subsample: SubsampleConfig,
    pub burgers: BurgersConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BranchSpec {
    Identity,
    Mlp { hidden_widths: Vec<usize>, activation: Activation },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrunkSpec {
    Siren { hidden_widths: Vec<usize>, omega0: f64 },
    Mlp { hidden_widths: Vec<usize>, activation: Activation },
    /// Leading POD modes of the training outputs.
    Pod { modes: usize },
    /// A dictionary learned offline on the training outputs.
    Dictionary { learn: DictLearnConfig },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    pub branch: BranchSpec,
    pub trunk: TrunkSpec,
    /// Number of basis functions `P` for a network trunk. An identity
    /// branch forces `P` to the input dictionary size.
    pub width: Option<usize>,
    /// Subtract the snapshot mean before extracting POD modes.
    pub pod_center: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationConfig {
    pub mask_percents: Vec<f64>,
    pub gpod: GpodConfig,
    pub random_kinds: Vec<AnalyticKind>,
    pub random_count: usize,
    pub consistency_trials: usize,
    pub keep_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seeds: Vec<u64>,
    /// Relative paths are taken from the config file's directory.
    pub dataset_dir: PathBuf,
    pub data: DataConfig,
    pub dictionary: DictLearnConfig,
    pub operator: OperatorConfig,
    pub train: TrainConfig,
    /// Uniform sensor counts for the resolution sweep; 2D counts must be
    /// perfect squares.
    pub eval_sensors: Vec<usize>,
    pub ablation: AblationConfig,
}

fn siren_dict(dim: usize, width: usize, depth: usize, omega0: f64, lr: f64, lambda: f64) -> DictLearnConfig {
    let mut d = DictLearnConfig::new(MlpSpec::siren(dim, 1, vec![width; depth], omega0));
    d.lr = lr;
    d.lambda = lambda;
    d
}

impl ExperimentConfig {
    pub fn defaults(kind: ExperimentKind) -> Self {
        use ExperimentKind::*;
        let burgers = BurgersConfig::default();
        let (n_train, n_test, grid, length_scale, range) = match kind {
            Antiderivative => (150, 1000, 100, 0.2, (10, 60)),
            Darcy1d => (800, 200, 50, 0.05, (20, 35)),
            Darcy2d => (800, 200, 20, 0.25, (100, 280)),
            Burgers => (1500, 500, 101, 0.2, (40, 70)),
            GpodAblation | RandomBasisAblation => (200, 50, 100, 0.0, (100, 100)),
        };
        let mut dictionary = match kind {
            Antiderivative => siren_dict(1, 20, 2, 5.0, 1.66e-4, 1e-4),
            Darcy1d => siren_dict(1, 30, 2, 10.0, 3e-4, 1e-4),
            Darcy2d => siren_dict(2, 50, 3, 10.0, 6.6e-4, 1e-5),
            Burgers => siren_dict(1, 30, 2, 10.0, 6.6e-4, 1e-5),
            GpodAblation | RandomBasisAblation => siren_dict(1, 20, 2, 5.0, 1e-3, 1e-4),
        };
        match kind {
            Darcy1d | Darcy2d | Burgers => dictionary.epochs_per_atom = 150,
            GpodAblation | RandomBasisAblation => {
                // The constant atom plus three networks.
                dictionary.max_atoms = 4;
                dictionary.epochs_per_atom = 1000;
                dictionary.tol = 1e-8;
            }
            Antiderivative => {}
        }
        let mlp = |w: Vec<usize>, a| BranchSpec::Mlp { hidden_widths: w, activation: a };
        let (branch, trunk, width) = match kind {
            Antiderivative | GpodAblation | RandomBasisAblation => {
                (BranchSpec::Identity, TrunkSpec::Siren { hidden_widths: vec![50, 50], omega0: 5.0 }, None)
            }
            Darcy1d => (mlp(vec![50], Activation::Relu), TrunkSpec::Siren { hidden_widths: vec![50, 50, 50], omega0: 5.0 }, Some(50)),
            Darcy2d => (
                mlp(vec![50], Activation::Relu),
                TrunkSpec::Mlp { hidden_widths: vec![50, 50], activation: Activation::Relu },
                Some(100),
            ),
            Burgers => (mlp(vec![100, 100], Activation::Tanh), TrunkSpec::Pod { modes: 70 }, None),
        };
        let mut train = TrainConfig::new(match kind {
            Antiderivative => 5000,
            _ => 10000,
        });
        train.normalize_embeddings = kind == Darcy2d;
        let eval_sensors = match kind {
            Antiderivative => vec![100, 51, 26, 21, 11],
            Darcy1d => vec![50, 26, 11, 6],
            Darcy2d => vec![400, 100, 16],
            Burgers => vec![101, 51, 21, 11],
            GpodAblation | RandomBasisAblation => Vec::new(),
        };
        let mask_percents = match kind {
            RandomBasisAblation => vec![85.0],
            _ => vec![25.0, 50.0, 75.0, 90.0, 95.0],
        };
        Self {
            experiment: kind,
            seeds: vec![0],
            dataset_dir: PathBuf::from(format!("data/{}", kind.name())),
            data: DataConfig {
                n_train,
                n_test,
                grid,
                length_scale,
                subsample: SubsampleConfig { m_min: range.0, m_max: range.1 },
                burgers,
            },
            dictionary,
            operator: OperatorConfig { branch, trunk, width, pod_center: false },
            train,
            eval_sensors,
            ablation: AblationConfig {
                mask_percents,
                gpod: GpodConfig::new(3),
                random_kinds: vec![AnalyticKind::RandomCosine, AnalyticKind::RandomRelu],
                random_count: 100,
                consistency_trials: 5,
                keep_fraction: 0.5,
            },
        }
    }

    /// Reads a config file, fills in defaults and resolves relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let mut cfg = Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if cfg.dataset_dir.is_relative() {
            let base = path.parent().unwrap_or(Path::new(""));
            cfg.dataset_dir = base.join(&cfg.dataset_dir);
        }
        Ok(cfg)
    }

    /// Parses config text. Syntax errors report line and column; type
    /// errors and unknown fields report the field path.
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let user: Value = serde_json::from_str(text).map_err(|e| format!("line {} column {}: {e}", e.line(), e.column()))?;
        let kind = user.get("experiment").ok_or("missing field `experiment`")?;
        let kind: ExperimentKind = serde_json::from_value(kind.clone()).map_err(|e| format!("experiment: {e}"))?;
        let mut merged = serde_json::to_value(Self::defaults(kind)).expect("defaults serialize");
        merge(&mut merged, user);
        let cfg: Self = serde_path_to_error::deserialize(merged).map_err(|e| format!("field `{}`: {}", e.path(), e.inner()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.seeds.is_empty() {
            return Err("seeds: at least one seed is required".into());
        }
        let d = &self.data;
        if d.n_train == 0 || d.n_test == 0 {
            return Err("data: n_train and n_test must be positive".into());
        }
        let full = d.grid.pow(self.experiment.input_dim() as u32);
        if !self.experiment.is_ablation() {
            if !(d.length_scale > 0.0) {
                return Err("data.length_scale must be positive".into());
            }
            if d.subsample.m_min == 0 || d.subsample.m_min > d.subsample.m_max || d.subsample.m_max > full {
                return Err(format!("data.subsample: [{}, {}] is not a valid range for {full} sensors", d.subsample.m_min, d.subsample.m_max));
            }
        }
        let dim = self.experiment.input_dim();
        if self.dictionary.atom_spec.input_dim != dim {
            return Err(format!("dictionary.atom_spec.input_dim must be {dim}"));
        }
        if self.experiment == ExperimentKind::Darcy2d {
            if let Some(m) = self.eval_sensors.iter().find(|&&m| (m as f64).sqrt().round().powi(2) as usize != m) {
                return Err(format!("eval_sensors: {m} is not a perfect square"));
            }
        }
        if self.eval_sensors.iter().any(|&m| m < 2) {
            return Err("eval_sensors: need at least two sensors".into());
        }
        if matches!(self.operator.branch, BranchSpec::Identity) && self.operator.width.is_some() {
            return Err("operator.width: an identity branch takes its width from the dictionary".into());
        }
        if self.ablation.mask_percents.iter().any(|r| !(0.0..100.0).contains(r)) {
            return Err("ablation.mask_percents must lie in [0, 100)".into());
        }
        if !(self.ablation.keep_fraction > 0.0 && self.ablation.keep_fraction <= 1.0) {
            return Err("ablation.keep_fraction must lie in (0, 1]".into());
        }
        self.train.validate().map_err(|e| format!("train: {e}"))?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON of the resolved config, dataset path
    /// excluded so that moving a dataset does not change the hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.dataset_dir = PathBuf::new();
        let text = rino::json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    // Tagged enums are replaced whole when the variant changes.
                    Some(slot) if slot.is_object() && v.is_object() && slot.get("kind") == v.get("kind").or(slot.get("kind")) => merge(slot, v),
                    Some(slot) => *slot = v,
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}
