//! Masked-reconstruction studies on the three-basis family: gappy POD
//! against the learned dictionary, and random analytic dictionaries.

use log::info;
use rayon::prelude::*;
use rino::baselines::{embedding_consistency_report, gpod_fill_row, gpod_reconstruct, make_analytic_dictionary, AnalyticKind, ConsistencyReport};
use rino::datagen::mask_matrix;
use rino::dictionary::{learn_dictionary_batch, project, reconstruct, DictTrace, Dictionary, PointCloudSignal};
use rino::metrics::relative_mse;
use rino::numerics::{DenseMatrix, RngState};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::dataset::{Dataset, Split};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpodRow {
    pub masked_percent: f64,
    pub gpod_train: f64,
    pub gpod_test: f64,
    pub gpod_converged: bool,
    pub learned_train: f64,
    pub learned_test: f64,
    pub learned_atoms: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisRow {
    pub basis: String,
    pub atoms: usize,
    pub test_rel_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyPair {
    pub learned: ConsistencyReport,
    pub random_cosine: ConsistencyReport,
}

pub struct LearnedDictionary {
    pub masked_percent: f64,
    pub dictionary: Dictionary,
    pub trace: DictTrace,
}

pub struct GpodOutcome {
    pub rows: Vec<GpodRow>,
    pub dictionaries: Vec<LearnedDictionary>,
}

pub struct RandomBasisOutcome {
    pub masked_percent: f64,
    pub rows: Vec<BasisRow>,
    pub consistency: ConsistencyPair,
    pub dictionary: LearnedDictionary,
}

/// Full data matrices of both splits and the sensor positions.
struct Matrices {
    x: Vec<f64>,
    train: DenseMatrix,
    test: DenseMatrix,
}

fn matrices(data: &Dataset) -> Result<Matrices> {
    let grid = data.manifest.input_grid();
    let rows = |s: Split| -> Result<DenseMatrix> {
        let r: Vec<Vec<f64>> = data.split(s).map(|r| r.u_full.clone()).collect();
        DenseMatrix::from_rows(&r).map_err(CliError::Datagen)
    };
    Ok(Matrices { x: grid.column(0), train: rows(Split::Train)?, test: rows(Split::Test)? })
}

fn percent_key(r: f64) -> u64 {
    (r * 1000.0).round() as u64
}

fn masked_signals(x: &[f64], data: &DenseMatrix, mask: &[Vec<bool>]) -> Result<Vec<PointCloudSignal>> {
    (0..data.rows())
        .map(|i| {
            let keep: Vec<usize> = (0..x.len()).filter(|&j| !mask[i][j]).collect();
            let xs: Vec<f64> = keep.iter().map(|&j| x[j]).collect();
            PointCloudSignal::from_1d(i, &xs, keep.iter().map(|&j| data[(i, j)]).collect()).map_err(CliError::Datagen)
        })
        .collect()
}

/// Mean relative MSE of reconstructing each full row from its observed
/// entries through `dict`.
fn dictionary_error(dict: &Dictionary, lambda: f64, x: &[f64], data: &DenseMatrix, signals: &[PointCloudSignal]) -> Result<f64> {
    let full = DenseMatrix::column_vector(x);
    let errs: Vec<f64> = signals
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let alpha = project(dict, s, lambda)?;
            relative_mse(data.row(i), &reconstruct(dict, &alpha, &full)?)
        })
        .collect::<rino::Result<_>>()
        .map_err(CliError::Eval)?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

fn learn(cfg: &ExperimentConfig, data: &Dataset, signals: &[PointCloudSignal], rng: &RngState, r: f64) -> Result<LearnedDictionary> {
    let (dictionary, trace) = learn_dictionary_batch(signals, &data.manifest.domain, &cfg.dictionary, rng).map_err(CliError::Dictionary)?;
    info!("{r}% masked: {} atoms, error {:.3e}", dictionary.len(), trace.final_error());
    Ok(LearnedDictionary { masked_percent: r, dictionary, trace })
}

struct Masks {
    train: Vec<Vec<bool>>,
    test: Vec<Vec<bool>>,
}

fn masks(m: &Matrices, r: f64, rng: &RngState) -> Result<Masks> {
    let k = percent_key(r);
    let width = m.x.len();
    Ok(Masks {
        train: mask_matrix(m.train.rows(), width, r, &rng.derive(10).derive(k)).map_err(CliError::Datagen)?,
        test: mask_matrix(m.test.rows(), width, r, &rng.derive(11).derive(k)).map_err(CliError::Datagen)?,
    })
}

pub fn gpod_ablation(cfg: &ExperimentConfig, data: &Dataset, seed: u64) -> Result<GpodOutcome> {
    let m = matrices(data)?;
    let rng = RngState::new(seed);
    let lambda = cfg.dictionary.lambda;
    let mut rows = Vec::new();
    let mut dictionaries = Vec::new();
    for &r in &cfg.ablation.mask_percents {
        let mk = masks(&m, r, &rng)?;
        let g = gpod_reconstruct(&m.train, &mk.train, &cfg.ablation.gpod).map_err(CliError::Eval)?;
        let gpod_train = (0..m.train.rows()).map(|i| relative_mse(m.train.row(i), g.filled.row(i))).sum::<rino::Result<f64>>().map_err(CliError::Eval)?
            / m.train.rows() as f64;
        let test_errs: Vec<f64> = (0..m.test.rows())
            .into_par_iter()
            .map(|i| relative_mse(m.test.row(i), &gpod_fill_row(&g.modes, m.test.row(i), &mk.test[i], cfg.ablation.gpod.ridge)?))
            .collect::<rino::Result<_>>()
            .map_err(CliError::Eval)?;
        let gpod_test = test_errs.iter().sum::<f64>() / test_errs.len() as f64;

        let train_signals = masked_signals(&m.x, &m.train, &mk.train)?;
        let test_signals = masked_signals(&m.x, &m.test, &mk.test)?;
        let learned = learn(cfg, data, &train_signals, &rng.derive(12).derive(percent_key(r)), r)?;
        let learned_train = dictionary_error(&learned.dictionary, lambda, &m.x, &m.train, &train_signals)?;
        let learned_test = dictionary_error(&learned.dictionary, lambda, &m.x, &m.test, &test_signals)?;
        info!("{r}% masked: gpod test {gpod_test:.3e}, learned test {learned_test:.3e}");
        rows.push(GpodRow {
            masked_percent: r,
            gpod_train,
            gpod_test,
            gpod_converged: g.converged,
            learned_train,
            learned_test,
            learned_atoms: learned.dictionary.len(),
        });
        dictionaries.push(learned);
    }
    Ok(GpodOutcome { rows, dictionaries })
}

fn kind_name(kind: AnalyticKind) -> &'static str {
    match kind {
        AnalyticKind::RandomCosine => "random_cosine",
        AnalyticKind::RandomRelu => "random_relu",
        AnalyticKind::Monomial => "monomial",
        AnalyticKind::Legendre => "legendre",
    }
}

/// Learned dictionary against random analytic dictionaries at the first
/// configured masking level, plus the embedding consistency check.
pub fn random_basis_ablation(cfg: &ExperimentConfig, data: &Dataset, seed: u64) -> Result<RandomBasisOutcome> {
    let m = matrices(data)?;
    let rng = RngState::new(seed);
    let lambda = cfg.dictionary.lambda;
    let ab = &cfg.ablation;
    let r = *ab.mask_percents.first().ok_or_else(|| CliError::Config("ablation.mask_percents is empty".into()))?;
    let mk = masks(&m, r, &rng)?;
    let train_signals = masked_signals(&m.x, &m.train, &mk.train)?;
    let test_signals = masked_signals(&m.x, &m.test, &mk.test)?;
    let learned = learn(cfg, data, &train_signals, &rng.derive(12).derive(percent_key(r)), r)?;
    let mut rows = vec![BasisRow {
        basis: "learned".into(),
        atoms: learned.dictionary.len(),
        test_rel_mse: dictionary_error(&learned.dictionary, lambda, &m.x, &m.test, &test_signals)?,
    }];
    for (k, &kind) in ab.random_kinds.iter().enumerate() {
        let dict = make_analytic_dictionary(kind, ab.random_count, &rng.derive(20 + k as u64)).map_err(CliError::Dictionary)?;
        rows.push(BasisRow {
            basis: kind_name(kind).into(),
            atoms: dict.len(),
            test_rel_mse: dictionary_error(&dict, lambda, &m.x, &m.test, &test_signals)?,
        });
    }
    let probe = PointCloudSignal::from_1d(0, &m.x, m.test.row(0).to_vec()).map_err(CliError::Datagen)?;
    let trials = rng.derive(31);
    let cosine = make_analytic_dictionary(AnalyticKind::RandomCosine, 3, &rng.derive(30)).map_err(CliError::Dictionary)?;
    let report = |d: &Dictionary| embedding_consistency_report(d, &probe, ab.consistency_trials, ab.keep_fraction, lambda, &trials).map_err(CliError::Eval);
    let consistency = ConsistencyPair { learned: report(&learned.dictionary)?, random_cosine: report(&cosine)? };
    Ok(RandomBasisOutcome { masked_percent: r, rows, consistency, dictionary: learned })
}
