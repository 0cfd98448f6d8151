//! Reference methods for the masked-reconstruction studies: gappy POD on
//! a fixed sensor grid, and fixed or random analytic dictionaries.

use log::debug;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dictionary::{project, AnalyticBasis, BasisFunction, Dictionary, DomainBox, PointCloudSignal};
use crate::error::{Result, RinoError};
use crate::numerics::{dot, svd_thin, DenseMatrix, RngState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpodConfig {
    pub rank: usize,
    /// Refill sweeps allowed at each rank.
    pub max_iters: usize,
    /// Stop a rank once the relative change of the filled matrix drops
    /// below this.
    pub conv_tol: f64,
    /// Ridge on the per-row mode fits.
    pub ridge: f64,
}

impl GpodConfig {
    pub fn new(rank: usize) -> Self {
        Self { rank, max_iters: 500, conv_tol: 1e-12, ridge: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpodResult {
    pub filled: DenseMatrix,
    /// `M × r` orthonormal modes.
    pub modes: DenseMatrix,
    /// Squared error on the observed entries after every sweep.
    pub objective: Vec<f64>,
    pub iterations: usize,
    /// False when the final rank hit `max_iters`.
    pub converged: bool,
}

/// Leading `q` eigenvectors of the PSD matrix `g` (as columns), by
/// subspace iteration started from `start`.
fn top_eigenvectors(g: &DenseMatrix, start: &DenseMatrix) -> Result<DenseMatrix> {
    let (m, q) = start.shape();
    // Rows of `v` are the vectors.
    let mut v = start.transpose();
    orthonormalize_rows(&mut v);
    for _ in 0..1000 {
        let mut w = DenseMatrix::zeros(q, m);
        for k in 0..q {
            let gv = g.matvec(v.row(k))?;
            w.row_mut(k).copy_from_slice(&gv);
        }
        orthonormalize_rows(&mut w);
        let change = (0..q).map(|k| 1.0 - dot(w.row(k), v.row(k)).abs()).fold(0.0, f64::max);
        v = w;
        if change < 1e-15 {
            break;
        }
    }
    // Rayleigh–Ritz rotation so the columns come out ordered.
    let mut b = DenseMatrix::zeros(q, q);
    let gv: Vec<Vec<f64>> = (0..q).map(|k| g.matvec(v.row(k))).collect::<Result<_>>()?;
    for i in 0..q {
        for j in 0..q {
            b[(i, j)] = dot(v.row(i), &gv[j]);
        }
    }
    let rot = svd_thin(&b, q)?.u;
    let mut out = DenseMatrix::zeros(m, q);
    for c in 0..q {
        for r in 0..m {
            out[(r, c)] = (0..q).map(|k| rot[(k, c)] * v[(k, r)]).sum();
        }
    }
    Ok(out)
}

fn orthonormalize_rows(m: &mut DenseMatrix) {
    for _ in 0..2 {
        for i in 0..m.rows() {
            for j in 0..i {
                let c = dot(m.row(i), m.row(j));
                let rj = m.row(j).to_vec();
                m.row_mut(i).iter_mut().zip(&rj).for_each(|(v, w)| *v -= c * w);
            }
            let n = dot(m.row(i), m.row(i)).sqrt();
            if n > 0.0 {
                m.row_mut(i).iter_mut().for_each(|v| *v /= n);
            }
        }
    }
}

/// Least-squares coefficients of one row's observed entries on the modes.
fn fit_row(modes: &DenseMatrix, row: &[f64], observed: &[usize], ridge: f64) -> Result<Vec<f64>> {
    let q = modes.cols();
    let mut psi = DenseMatrix::zeros(q, observed.len());
    for (j, &c) in observed.iter().enumerate() {
        for k in 0..q {
            psi[(k, j)] = modes[(c, k)];
        }
    }
    let vals: Vec<f64> = observed.iter().map(|&c| row[c]).collect();
    crate::dictionary::ridge_coefficients(&psi, &vals, ridge)
}

fn observed_sets(mask: &[Vec<bool>], n: usize, m: usize) -> Result<Vec<Vec<usize>>> {
    if mask.len() != n || mask.iter().any(|r| r.len() != m) {
        return Err(RinoError::ShapeMismatch("mask does not match the data".into()));
    }
    let sets: Vec<Vec<usize>> = mask.iter().map(|r| (0..m).filter(|&j| !r[j]).collect()).collect();
    if let Some(i) = sets.iter().position(|s| s.is_empty()) {
        return Err(RinoError::EmptyRow(i));
    }
    if let Some(j) = (0..m).find(|&j| mask.iter().all(|r| r[j])) {
        return Err(RinoError::EmptyColumn(j));
    }
    Ok(sets)
}

/// Iterative gappy POD. Masked entries (`mask[i][j] == true`) start at
/// their column's observed mean; each sweep extracts modes of the filled
/// matrix, fits every row's observed entries on them and refills the
/// masked entries. The rank grows from 1 to `cfg.rank`.
pub fn gpod_reconstruct(data: &DenseMatrix, mask: &[Vec<bool>], cfg: &GpodConfig) -> Result<GpodResult> {
    let (n, m) = data.shape();
    if cfg.rank == 0 || cfg.rank > n.min(m) || cfg.max_iters == 0 {
        return Err(RinoError::InvalidArgument(format!("rank {} is not usable for {n}x{m} data", cfg.rank)));
    }
    let observed = observed_sets(mask, n, m)?;
    let mut filled = data.clone();
    for j in 0..m {
        let (sum, count) = (0..n).filter(|&i| !mask[i][j]).fold((0.0, 0usize), |(s, c), i| (s + data[(i, j)], c + 1));
        let mean = sum / count as f64;
        for i in 0..n {
            if mask[i][j] {
                filled[(i, j)] = mean;
            }
        }
    }
    let mut objective = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut modes = DenseMatrix::zeros(m, 0);
    for q in 1..=cfg.rank {
        // Seed the new direction deterministically; earlier modes carry over.
        let mut start = DenseMatrix::zeros(m, q);
        for r in 0..m {
            for k in 0..q {
                start[(r, k)] = if k < modes.cols() { modes[(r, k)] } else { ((r + 1) as f64 * (k + 1) as f64).sin() };
            }
        }
        modes = start;
        converged = false;
        for _ in 0..cfg.max_iters {
            iterations += 1;
            let g = filled.transpose().matmul(&filled)?;
            modes = top_eigenvectors(&g, &modes)?;
            let mut obj = 0.0;
            let mut change = 0.0;
            for (i, obs) in observed.iter().enumerate() {
                let c = fit_row(&modes, data.row(i), obs, cfg.ridge)?;
                for &j in obs {
                    let fit: f64 = (0..q).map(|k| modes[(j, k)] * c[k]).sum();
                    obj += (data[(i, j)] - fit).powi(2);
                }
                for j in 0..m {
                    if mask[i][j] {
                        let fit: f64 = (0..q).map(|k| modes[(j, k)] * c[k]).sum();
                        change += (fit - filled[(i, j)]).powi(2);
                        filled[(i, j)] = fit;
                    }
                }
            }
            objective.push(obj);
            let scale = filled.frobenius_norm().powi(2).max(f64::MIN_POSITIVE);
            if change / scale < cfg.conv_tol * cfg.conv_tol {
                converged = true;
                break;
            }
        }
        debug!("gappy POD rank {q}: objective {:.3e} after {iterations} sweeps", objective.last().copied().unwrap_or(f64::NAN));
    }
    Ok(GpodResult { filled, modes, objective, iterations, converged })
}

/// Fills one masked row on fixed modes, keeping the observed entries.
pub fn gpod_fill_row(modes: &DenseMatrix, row: &[f64], mask: &[bool], ridge: f64) -> Result<Vec<f64>> {
    let obs: Vec<usize> = (0..row.len()).filter(|&j| !mask[j]).collect();
    if obs.is_empty() {
        return Err(RinoError::EmptyRow(0));
    }
    let c = fit_row(modes, row, &obs, ridge)?;
    Ok((0..row.len()).map(|j| if mask[j] { (0..modes.cols()).map(|k| modes[(j, k)] * c[k]).sum() } else { row[j] }).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalyticKind {
    RandomCosine,
    RandomRelu,
    Monomial,
    Legendre,
}

const RELU_WIDTH: usize = 20;

/// `q` analytic atoms on `[0, 1]`.
pub fn make_analytic_dictionary(kind: AnalyticKind, q: usize, rng: &RngState) -> Result<Dictionary> {
    if q == 0 {
        return Err(RinoError::InvalidArgument("dictionary needs at least one atom".into()));
    }
    let tau = 2.0 * std::f64::consts::PI;
    let atoms = (0..q)
        .map(|k| {
            let mut g = rng.derive(k as u64).generator();
            let a = match kind {
                AnalyticKind::RandomCosine => {
                    let w: f64 = Normal::new(0.0, tau).expect("positive sd").sample(&mut g);
                    AnalyticBasis::Cosine { frequency: w, phase: g.random_range(0.0..tau) }
                }
                AnalyticKind::RandomRelu => {
                    let normal = Normal::new(0.0, 1.0).expect("unit sd");
                    let hidden_weights = (0..RELU_WIDTH).map(|_| normal.sample(&mut g)).collect();
                    let hidden_biases = (0..RELU_WIDTH).map(|_| g.random_range(-1.0..1.0)).collect();
                    let output_weights = (0..RELU_WIDTH).map(|_| normal.sample(&mut g)).collect();
                    AnalyticBasis::ReluFeature { hidden_weights, hidden_biases, output_weights, output_bias: g.random_range(-1.0..1.0) }
                }
                AnalyticKind::Monomial => AnalyticBasis::Monomial { degree: k },
                AnalyticKind::Legendre => AnalyticBasis::Legendre { degree: k },
            };
            BasisFunction::Analytic(a)
        })
        .collect();
    Dictionary::new(DomainBox::unit(1), atoms)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    /// One coefficient vector per trial.
    pub coeffs: Vec<Vec<f64>>,
    /// Population standard deviation of each coefficient across trials.
    pub std: Vec<f64>,
    /// Largest pairwise distance between trials over the mean
    /// coefficient norm.
    pub rel_max_dev: f64,
}

/// Projects `signal` under `n_trials` random subsets of
/// `round(keep_fraction·M)` points each.
pub fn embedding_consistency_report(
    dict: &Dictionary,
    signal: &PointCloudSignal,
    n_trials: usize,
    keep_fraction: f64,
    lambda: f64,
    rng: &RngState,
) -> Result<ConsistencyReport> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) || n_trials == 0 {
        return Err(RinoError::RangeError(format!("keep fraction {keep_fraction} must lie in (0, 1]")));
    }
    let m = signal.len();
    let keep = ((m as f64 * keep_fraction).round() as usize).clamp(1, m);
    let coeffs: Vec<Vec<f64>> = (0..n_trials)
        .map(|t| {
            let mut idx = sample_indices(&mut rng.derive(t as u64).generator(), m, keep).into_vec();
            idx.sort_unstable();
            let pts: Vec<f64> = idx.iter().flat_map(|&i| signal.points.row(i).to_vec()).collect();
            let sub = PointCloudSignal::new(signal.id, DenseMatrix::new(keep, signal.points.cols(), pts)?, idx.iter().map(|&i| signal.values[i]).collect())?;
            Ok(project(dict, &sub, lambda)?.coeffs)
        })
        .collect::<Result<_>>()?;
    let q = dict.len();
    let nt = n_trials as f64;
    let std = (0..q)
        .map(|k| {
            let mean = coeffs.iter().map(|c| c[k]).sum::<f64>() / nt;
            (coeffs.iter().map(|c| (c[k] - mean).powi(2)).sum::<f64>() / nt).sqrt()
        })
        .collect();
    let mut max_dev = 0.0_f64;
    for a in 0..n_trials {
        for b in (a + 1)..n_trials {
            let d: f64 = coeffs[a].iter().zip(&coeffs[b]).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            max_dev = max_dev.max(d);
        }
    }
    let mean_norm = coeffs.iter().map(|c| dot(c, c).sqrt()).sum::<f64>() / nt;
    let rel_max_dev = if mean_norm > 0.0 { max_dev / mean_norm } else { 0.0 };
    Ok(ConsistencyReport { coeffs, std, rel_max_dev })
}
