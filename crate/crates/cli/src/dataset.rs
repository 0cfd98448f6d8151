//! Dataset generation and the on-disk format: `manifest.json` plus one
//! JSON record per realization in `data.jsonl`.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use rino::datagen::{
    make_three_basis_dataset, solve_antiderivative, solve_burgers, solve_darcy_1d, solve_darcy_2d, subsample_signal, GrfConfig, GrfSampler,
};
use rino::dictionary::{DomainBox, PointCloudSignal};
use rino::numerics::{DenseMatrix, RngState};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{DataConfig, ExperimentConfig, ExperimentKind};
use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.json";
pub const DATA: &str = "data.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: usize,
    pub split: Split,
    /// Input sensors actually observed.
    pub x: Vec<Vec<f64>>,
    pub u: Vec<f64>,
    /// Output points; absent when the manifest carries a shared grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<Vec<f64>>>,
    pub s: Vec<f64>,
    /// Input on the full manifest grid, for fixed-resolution evaluation.
    pub u_full: Vec<f64>,
    /// Generating coefficients of the synthetic three-basis family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub generator: ExperimentKind,
    pub config: DataConfig,
    pub config_hash: String,
    pub seed: u64,
    pub counts: Counts,
    pub domain: DomainBox,
    /// Sensors per axis of the full input grid, uniform with endpoints.
    pub input_shape: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_grid: Option<Vec<Vec<f64>>>,
}

impl Manifest {
    pub fn input_grid(&self) -> DenseMatrix {
        tensor_grid(&self.input_shape)
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: Manifest,
    pub records: Vec<Record>,
    /// SHA-256 of `data.jsonl`.
    pub hash: String,
}

impl Dataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn input_signal(&self, r: &Record) -> Result<PointCloudSignal> {
        PointCloudSignal::new(r.id, rows_matrix(&r.x)?, r.u.clone()).map_err(CliError::Datagen)
    }

    pub fn output_points(&self, r: &Record) -> Result<DenseMatrix> {
        match (&r.y, &self.manifest.output_grid) {
            (Some(y), _) | (None, Some(y)) => rows_matrix(y),
            (None, None) => Err(CliError::Config(format!("record {} has no output points", r.id))),
        }
    }
}

pub fn rows_matrix(rows: &[Vec<f64>]) -> Result<DenseMatrix> {
    DenseMatrix::from_rows(rows).map_err(CliError::Datagen)
}

pub fn matrix_rows(m: &DenseMatrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.to_vec()).collect()
}

/// Uniform grid on the unit box, endpoints included, last axis fastest.
pub fn tensor_grid(shape: &[usize]) -> DenseMatrix {
    let axis = |n: usize| -> Vec<f64> { (0..n).map(|i| if n == 1 { 0.5 } else { i as f64 / (n - 1) as f64 }).collect() };
    match shape {
        [n] => DenseMatrix::column_vector(&axis(*n)),
        [n, m] => {
            let (a, b) = (axis(*n), axis(*m));
            let rows: Vec<Vec<f64>> = a.iter().flat_map(|&x| b.iter().map(move |&y| vec![x, y])).collect();
            DenseMatrix::from_rows(&rows).expect("rectangular grid")
        }
        _ => panic!("grids of dimension {} are not supported", shape.len()),
    }
}

fn input_shape(kind: ExperimentKind, grid: usize) -> Vec<usize> {
    vec![grid; kind.input_dim()]
}

/// Generates every realization of the configured experiment.
pub fn generate(cfg: &ExperimentConfig, seed: u64) -> Result<(Manifest, Vec<Record>)> {
    let d = &cfg.data;
    let kind = cfg.experiment;
    let root = RngState::new(seed);
    let n = d.n_train + d.n_test;
    let shape = input_shape(kind, d.grid);
    let grid = tensor_grid(&shape);
    let split = |i: usize| if i < d.n_train { Split::Train } else { Split::Test };

    let records: Vec<Record> = if kind.is_ablation() {
        let data = make_three_basis_dataset(n, d.grid, &root.derive(0)).map_err(CliError::Datagen)?;
        let x: Vec<Vec<f64>> = data.x.iter().map(|&v| vec![v]).collect();
        (0..n)
            .map(|i| {
                let u = data.data.row(i).to_vec();
                Record {
                    id: i,
                    split: split(i),
                    x: x.clone(),
                    u: u.clone(),
                    y: Some(x.clone()),
                    s: u.clone(),
                    u_full: u,
                    alpha: Some(data.coeffs.row(i).to_vec()),
                }
            })
            .collect()
    } else {
        let sampler = match kind {
            // Sample one period and close it with the first value.
            ExperimentKind::Burgers => {
                let xs: Vec<f64> = (0..d.grid - 1).map(|i| i as f64 / (d.grid - 1) as f64).collect();
                GrfSampler::new(&DenseMatrix::column_vector(&xs), &GrfConfig::periodic(d.length_scale, 1.0))
            }
            _ => GrfSampler::new(&grid, &GrfConfig::new(d.length_scale)),
        }
        .map_err(CliError::Datagen)?;
        let fields = root.derive(0);
        let subsets = root.derive(1);
        let shared_output = kind == ExperimentKind::Burgers;
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut u = sampler.sample(&fields.derive(i as u64));
                let out = match kind {
                    ExperimentKind::Antiderivative => {
                        let xs = grid.column(0);
                        let s = solve_antiderivative(&xs, &u)?;
                        rino::datagen::SolverOutput { points: grid.clone(), values: s, iterations: 0, residuals: Vec::new() }
                    }
                    ExperimentKind::Darcy1d => solve_darcy_1d(&u)?,
                    ExperimentKind::Darcy2d => solve_darcy_2d(&u, d.grid)?,
                    ExperimentKind::Burgers => {
                        u.push(u[0]);
                        solve_burgers(&u, &d.burgers)?
                    }
                    _ => unreachable!("ablations handled above"),
                };
                let full = PointCloudSignal::new(i, grid.clone(), u.clone())?;
                let sub = subsample_signal(&full, d.subsample, &subsets.derive(i as u64))?;
                Ok(Record {
                    id: i,
                    split: split(i),
                    x: matrix_rows(&sub.points),
                    u: sub.values,
                    y: (!shared_output).then(|| matrix_rows(&out.points)),
                    s: out.values,
                    u_full: u,
                    alpha: None,
                })
            })
            .collect::<rino::Result<Vec<_>>>()
            .map_err(CliError::Datagen)?
    };
    let output_grid = match kind {
        ExperimentKind::Burgers => {
            let u0 = vec![0.0; d.grid];
            Some(matrix_rows(&solve_burgers(&u0, &d.burgers).map_err(CliError::Datagen)?.points))
        }
        _ => None,
    };
    let manifest = Manifest {
        generator: kind,
        config: d.clone(),
        config_hash: cfg.hash(),
        seed,
        counts: Counts { train: d.n_train, test: d.n_test },
        domain: DomainBox::unit(kind.input_dim()),
        input_shape: shape,
        output_grid,
    };
    Ok((manifest, records))
}

pub fn write(dir: &Path, manifest: &Manifest, records: &[Record]) -> Result<()> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let path = dir.join(DATA);
    let file = fs::File::create(&path).map_err(CliError::io(&path))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = rino::json::to_string(r).map_err(CliError::Datagen)?;
        writeln!(w, "{line}").map_err(CliError::io(&path))?;
    }
    w.flush().map_err(CliError::io(&path))?;
    write_json(&dir.join(MANIFEST), manifest)
}

pub fn read(dir: &Path) -> Result<Dataset> {
    let mpath = dir.join(MANIFEST);
    let text = fs::read_to_string(&mpath).map_err(CliError::io(&mpath))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", mpath.display())))?;
    let path = dir.join(DATA);
    let bytes = fs::read(&path).map_err(CliError::io(&path))?;
    let hash = hex::encode(Sha256::digest(&bytes));
    let mut records = Vec::new();
    for (k, line) in BufReader::new(bytes.as_slice()).lines().enumerate() {
        let line = line.map_err(CliError::io(&path))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: Record = serde_json::from_str(&line).map_err(|e| CliError::Config(format!("{} line {}: {e}", path.display(), k + 1)))?;
        records.push(r);
    }
    Ok(Dataset { manifest, records, hash })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = rino::json::to_string(value).map_err(CliError::Datagen)?;
    fs::write(path, text + "\n").map_err(CliError::io(path))
}
