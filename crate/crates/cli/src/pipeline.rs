//! Dictionary learning, embedding, operator training and scoring for the
//! PDE experiments.

use std::str::FromStr;

use log::info;
use rayon::prelude::*;
use rino::dictionary::{learn_dictionary_batch, project, DictTrace, Dictionary, DomainBox, Embedding, PointCloudSignal};
use rino::inr::{MlpSpec, Network};
use rino::metrics::relative_mse;
use rino::numerics::{DenseMatrix, RngState};
use rino::operator::{
    output_embedding, pod_modes, predict, train_predefined_trunk, train_unknown_trunk, Branch, DeepOnetModel, OperatorSample, TrainTrace, Trunk,
};
use serde::{Deserialize, Serialize};

use crate::config::{BranchSpec, ExperimentConfig, TrunkSpec};
use crate::dataset::{Dataset, Manifest, Record, Split};
use crate::error::{CliError, Result};

/// How test inputs are discretized at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sensors {
    /// The stored random subsample of each realization.
    Random,
    /// `M` uniform sensors interpolated from the stored full input.
    Uniform(usize),
}

impl FromStr for Sensors {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "random" {
            return Ok(Sensors::Random);
        }
        match s.parse::<usize>() {
            Ok(m) if m >= 2 => Ok(Sensors::Uniform(m)),
            _ => Err(format!("sensors must be `random` or a count ≥ 2, got `{s}`")),
        }
    }
}

impl std::fmt::Display for Sensors {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Sensors::Random => f.write_str("random"),
            Sensors::Uniform(m) => write!(f, "{m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sensors: usize,
    pub test_rel_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub dataset_hash: String,
    pub dictionary_size: usize,
    pub dictionary_rel_mse: f64,
    pub train_rel_mse: f64,
    pub test_rel_mse: f64,
    pub sweep: Vec<SweepRow>,
    /// Set when operator training stopped on a non-finite gradient.
    pub aborted: Option<String>,
}

pub struct SeedOutcome {
    pub dictionary: Dictionary,
    pub dict_trace: DictTrace,
    pub model: DeepOnetModel,
    pub train_trace: TrainTrace,
    pub metrics: SeedMetrics,
}

/// Linear (1D) or bilinear (2D) interpolation of a field tabulated on the
/// uniform `shape` grid.
pub fn interpolate(shape: &[usize], values: &[f64], p: &[f64]) -> f64 {
    let locate = |n: usize, x: f64| -> (usize, f64) {
        let t = x.clamp(0.0, 1.0) * (n - 1) as f64;
        let k = (t.floor() as usize).min(n - 2);
        (k, t - k as f64)
    };
    match shape {
        [n] => {
            let (k, f) = locate(*n, p[0]);
            values[k] * (1.0 - f) + values[k + 1] * f
        }
        [n, m] => {
            let (i, fx) = locate(*n, p[0]);
            let (j, fy) = locate(*m, p[1]);
            let v = |a: usize, b: usize| values[a * m + b];
            (1.0 - fx) * ((1.0 - fy) * v(i, j) + fy * v(i, j + 1)) + fx * ((1.0 - fy) * v(i + 1, j) + fy * v(i + 1, j + 1))
        }
        _ => panic!("unsupported grid dimension {}", shape.len()),
    }
}

/// The input of `r` as seen through the requested sensors.
pub fn input_signal(manifest: &Manifest, r: &Record, sensors: Sensors) -> Result<PointCloudSignal> {
    match sensors {
        Sensors::Random => PointCloudSignal::new(r.id, crate::dataset::rows_matrix(&r.x)?, r.u.clone()).map_err(CliError::Eval),
        Sensors::Uniform(m) => {
            let dim = manifest.input_shape.len();
            let side = if dim == 2 { (m as f64).sqrt().round() as usize } else { m };
            if side.pow(dim as u32) != m {
                return Err(CliError::Config(format!("{m} sensors do not form a uniform {dim}D grid")));
            }
            let grid = crate::dataset::tensor_grid(&vec![side; dim]);
            let values = grid.row_iter().map(|p| interpolate(&manifest.input_shape, &r.u_full, p)).collect();
            PointCloudSignal::new(r.id, grid, values).map_err(CliError::Eval)
        }
    }
}

/// Mean relative MSE of the model over one split.
pub fn evaluate(model: &DeepOnetModel, dict: &Dictionary, lambda: f64, data: &Dataset, split: Split, sensors: Sensors) -> Result<f64> {
    let recs: Vec<&Record> = data.split(split).collect();
    if recs.is_empty() {
        return Err(CliError::Config(format!("dataset has no {split:?} records")));
    }
    let errs: Vec<f64> = recs
        .par_iter()
        .map(|r| {
            let signal = input_signal(&data.manifest, r, sensors)?;
            let alpha = project(dict, &signal, lambda).map_err(CliError::Eval)?;
            let y = data.output_points(r)?;
            let pred = predict(model, &alpha, &y).map_err(CliError::Eval)?;
            relative_mse(&r.s, &pred).map_err(CliError::Eval)
        })
        .collect::<Result<_>>()?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

fn build_trunk(cfg: &ExperimentConfig, data: &Dataset, train: &[&Record], width: Option<usize>, rng: &RngState) -> Result<(Trunk, Option<f64>)> {
    let y0 = data.output_points(train[0])?;
    let dim = y0.cols();
    let op = &cfg.operator;
    let need = || width.ok_or_else(|| CliError::Config("operator.width is required for a network trunk with an MLP branch".into()));
    Ok(match &op.trunk {
        TrunkSpec::Siren { hidden_widths, omega0 } => {
            let spec = MlpSpec::siren(dim, need()?, hidden_widths.clone(), *omega0);
            (Trunk::Network { network: Network::init(spec, rng).map_err(CliError::Operator)? }, None)
        }
        TrunkSpec::Mlp { hidden_widths, activation } => {
            let spec = MlpSpec::mlp(dim, need()?, hidden_widths.clone(), *activation);
            (Trunk::Network { network: Network::init(spec, rng).map_err(CliError::Operator)? }, None)
        }
        TrunkSpec::Pod { modes } => {
            for r in train {
                if data.output_points(r)? != y0 {
                    return Err(CliError::Config("POD trunk needs every output on the same grid".into()));
                }
            }
            let rows: Vec<Vec<f64>> = train.iter().map(|r| r.s.clone()).collect();
            let snapshots = DenseMatrix::from_rows(&rows).map_err(CliError::Operator)?;
            let pod = pod_modes(&snapshots, *modes, op.pod_center).map_err(CliError::Operator)?;
            (Trunk::Pod { grid: y0, modes: pod.modes, mean: pod.mean }, Some(0.0))
        }
        TrunkSpec::Dictionary { learn } => {
            let signals: Vec<PointCloudSignal> = train
                .iter()
                .map(|r| PointCloudSignal::new(r.id, data.output_points(r)?, r.s.clone()).map_err(CliError::Dictionary))
                .collect::<Result<_>>()?;
            let (dict, _) = learn_dictionary_batch(&signals, &DomainBox::unit(dim), learn, rng).map_err(CliError::Dictionary)?;
            (Trunk::Dictionary { dictionary: dict }, Some(learn.lambda))
        }
    })
}

/// Full pipeline for one seed: learn the input dictionary, embed, train
/// the operator and score it.
pub fn run_seed(cfg: &ExperimentConfig, data: &Dataset, seed: u64) -> Result<SeedOutcome> {
    let rng = RngState::new(seed);
    let lambda = cfg.dictionary.lambda;
    let train: Vec<&Record> = data.split(Split::Train).collect();
    if train.is_empty() {
        return Err(CliError::Config("dataset has no training records".into()));
    }
    let signals: Vec<PointCloudSignal> = train.iter().map(|r| data.input_signal(r)).collect::<Result<_>>()?;
    let (dictionary, dict_trace) =
        learn_dictionary_batch(&signals, &data.manifest.domain, &cfg.dictionary, &rng.derive(1)).map_err(CliError::Dictionary)?;
    info!("seed {seed}: {} atoms, reconstruction error {:.3e}", dictionary.len(), dict_trace.final_error());

    let embeddings: Vec<Embedding> = signals.par_iter().map(|s| project(&dictionary, s, lambda)).collect::<rino::Result<_>>().map_err(CliError::Dictionary)?;
    let width = match cfg.operator.branch {
        BranchSpec::Identity => Some(dictionary.len()),
        BranchSpec::Mlp { .. } => cfg.operator.width,
    };
    let (trunk, gamma_lambda) = build_trunk(cfg, data, &train, width, &rng.derive(2))?;
    let p = trunk.width();
    let branch = match &cfg.operator.branch {
        BranchSpec::Identity => Branch::Identity,
        BranchSpec::Mlp { hidden_widths, activation } => {
            let spec = MlpSpec::mlp(dictionary.len(), p, hidden_widths.clone(), *activation);
            Branch::Mlp { network: Network::init(spec, &rng.derive(3)).map_err(CliError::Operator)? }
        }
    };
    let model = DeepOnetModel::new(branch, trunk, dictionary.fingerprint(), dictionary.len()).map_err(CliError::Operator)?;
    let samples: Vec<OperatorSample> = train
        .iter()
        .zip(embeddings)
        .map(|(r, alpha)| {
            let y = data.output_points(r)?;
            let gamma = match gamma_lambda {
                Some(l) => Some(Embedding {
                    coeffs: output_embedding(&model.trunk, &y, &r.s, l).map_err(CliError::Operator)?,
                    dictionary_fingerprint: "trunk".into(),
                    lambda: l,
                }),
                None => None,
            };
            Ok(OperatorSample { input_embedding: alpha, output_points: y, output_values: r.s.clone(), output_embedding: gamma })
        })
        .collect::<Result<_>>()?;
    let mut tc = cfg.train.clone();
    tc.seed = seed;
    let (model, train_trace) = if gamma_lambda.is_some() {
        train_predefined_trunk(model, &samples, &tc)
    } else {
        train_unknown_trunk(model, &samples, &tc)
    }
    .map_err(CliError::Operator)?;

    let train_rel_mse = evaluate(&model, &dictionary, lambda, data, Split::Train, Sensors::Random)?;
    let test_rel_mse = evaluate(&model, &dictionary, lambda, data, Split::Test, Sensors::Random)?;
    let sweep = cfg
        .eval_sensors
        .iter()
        .map(|&m| Ok(SweepRow { sensors: m, test_rel_mse: evaluate(&model, &dictionary, lambda, data, Split::Test, Sensors::Uniform(m))? }))
        .collect::<Result<_>>()?;
    info!("seed {seed}: train {train_rel_mse:.3e}, test {test_rel_mse:.3e}");
    let metrics = SeedMetrics {
        experiment: cfg.experiment.name().into(),
        config_hash: cfg.hash(),
        seed,
        dataset_hash: data.hash.clone(),
        dictionary_size: dictionary.len(),
        dictionary_rel_mse: dict_trace.final_error(),
        train_rel_mse,
        test_rel_mse,
        sweep,
        aborted: train_trace.aborted.as_ref().map(|e| e.to_string()),
    };
    Ok(SeedOutcome { dictionary, dict_trace, model, train_trace, metrics })
}
