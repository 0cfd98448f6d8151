//! Greedy dictionary learning with SIREN atoms.
//!
//! The batch-wise learner grows the dictionary one atom at a time from
//! `{1}`. While an atom trains, every epoch alternates an exact ridge
//! projection of each realization onto the current dictionary (atoms
//! fixed) with one Adam step on the new atom's parameters (coefficients
//! fixed). Earlier atoms are frozen. The sample-wise learner instead walks
//! the realizations in order and fits a fresh atom to the projection
//! residual of any realization the dictionary cannot yet represent.

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ridge_coefficients, residual, BasisFunction, Dictionary, DomainBox, PointCloudSignal};
use crate::error::{Result, RinoError};
use crate::inr::{freeze_scale, init_mlp, mlp_backward, mlp_forward_tape, MlpParams, MlpSpec, Network};
use crate::metrics::residual_error;
use crate::numerics::{AdamState, DenseMatrix, RngState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictLearnConfig {
    /// Ridge penalty of every projection.
    pub lambda: f64,
    /// Target mean relative reconstruction error.
    pub tol: f64,
    /// Cap on `|Ψ|`, the constant atom included for the batch learner.
    pub max_atoms: usize,
    pub epochs_per_atom: usize,
    pub lr: f64,
    pub atom_spec: MlpSpec,
    /// Minimum relative error reduction an added atom must achieve.
    pub min_gain: f64,
    /// Early stop once the best error has improved by less than
    /// `min_improvement` for `patience` consecutive epochs.
    pub patience: usize,
    pub min_improvement: f64,
}

impl DictLearnConfig {
    pub fn new(atom_spec: MlpSpec) -> Self {
        Self {
            lambda: 1e-4,
            tol: 1e-4,
            max_atoms: 12,
            epochs_per_atom: 500,
            lr: 1e-3,
            atom_spec,
            min_gain: 0.02,
            patience: 25,
            min_improvement: 1e-7,
        }
    }

    pub fn validate(&self, domain: &DomainBox) -> Result<()> {
        self.atom_spec.validate()?;
        if self.atom_spec.input_dim != domain.dim() || self.atom_spec.output_dim != 1 {
            return Err(RinoError::InvalidArgument("atom network must map the domain to a scalar".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(RinoError::InvalidArgument("lambda must be non-negative".into()));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(RinoError::InvalidArgument("tol must lie in (0, 1)".into()));
        }
        if self.max_atoms == 0 || !(self.lr > 0.0) {
            return Err(RinoError::InvalidArgument("max_atoms and lr must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ToleranceReached,
    MaxAtoms,
    /// The last atom failed to cut the error by `min_gain`; the dictionary
    /// is returned as it stood.
    NoProgress,
    /// Sample-wise learning visited every realization.
    DataExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// Dictionary size while this epoch ran (new atom included).
    pub atoms: usize,
    pub epoch: usize,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictTrace {
    pub epochs: Vec<EpochRecord>,
    /// Index into `epochs` where each added atom started training.
    pub additions: Vec<usize>,
    /// Mean relative error of the optimal projection, before any atom was
    /// added and after each addition.
    pub errors_after_atom: Vec<f64>,
    pub stop: StopReason,
    /// Epochs whose error rose by more than 1e-6 over the previous one.
    pub monotonicity_warnings: usize,
}

impl DictTrace {
    pub fn final_error(&self) -> f64 {
        *self.errors_after_atom.last().unwrap_or(&f64::NAN)
    }

    pub fn warned_no_progress(&self) -> bool {
        self.stop == StopReason::NoProgress
    }
}

/// All realizations concatenated into one batch.
struct Packed {
    points: DenseMatrix,
    values: Vec<f64>,
    offsets: Vec<usize>,
}

impl Packed {
    fn new(dataset: &[PointCloudSignal], domain: &DomainBox) -> Result<Self> {
        let dim = domain.dim();
        let mut coords = Vec::new();
        let mut values = Vec::new();
        let mut offsets = vec![0];
        for s in dataset {
            domain.check_points(&s.points)?;
            if s.points.cols() != dim || s.is_empty() {
                return Err(RinoError::ShapeMismatch(format!("signal {} does not match the domain", s.id)));
            }
            coords.extend_from_slice(s.points.data());
            values.extend_from_slice(&s.values);
            offsets.push(values.len());
        }
        let points = DenseMatrix::new(values.len(), dim, coords)?;
        Ok(Self { points, values, offsets })
    }

    fn n(&self) -> usize {
        self.offsets.len() - 1
    }

    fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }
}

/// Projection of realization `i` onto the cached atom rows plus an
/// optional trial atom. Returns `(coefficients, residual)`.
fn fit_one(rows: &[Vec<f64>], extra: Option<&[f64]>, data: &Packed, i: usize, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let r = data.range(i);
    let m = r.len();
    let q = rows.len() + usize::from(extra.is_some());
    let mut psi = DenseMatrix::zeros(q, m);
    for (l, row) in rows.iter().enumerate() {
        psi.row_mut(l).copy_from_slice(&row[r.clone()]);
    }
    if let Some(e) = extra {
        psi.row_mut(q - 1).copy_from_slice(&e[r.clone()]);
    }
    let u = &data.values[r];
    let coeffs = ridge_coefficients(&psi, u, lambda)?;
    let res = residual(&psi, u, &coeffs);
    Ok((coeffs, res))
}

fn fit_all(rows: &[Vec<f64>], extra: Option<&[f64]>, data: &Packed, lambda: f64) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    (0..data.n()).into_par_iter().map(|i| fit_one(rows, extra, data, i, lambda)).collect()
}

fn mean_error(data: &Packed, fits: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    let total: f64 = fits.iter().enumerate().map(|(i, (_, r))| residual_error(&data.values[data.range(i)], r)).sum();
    total / data.n() as f64
}

/// Tracks the best iterate and decides early stopping.
struct Progress {
    best: f64,
    best_flat: Vec<f64>,
    stale: usize,
    last: f64,
    warnings: usize,
}

impl Progress {
    fn new(flat: Vec<f64>) -> Self {
        Self { best: f64::INFINITY, best_flat: flat, stale: 0, last: f64::INFINITY, warnings: 0 }
    }

    /// Records an epoch; returns true when training should stop.
    fn record(&mut self, error: f64, flat: &[f64], cfg: &DictLearnConfig) -> bool {
        if error > self.last + 1e-6 {
            self.warnings += 1;
        }
        self.last = error;
        if error < self.best - cfg.min_improvement {
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        if error < self.best {
            self.best = error;
            self.best_flat.copy_from_slice(flat);
        }
        self.stale >= cfg.patience
    }
}

fn freeze(spec: &MlpSpec, params: &MlpParams, domain: &DomainBox) -> Result<BasisFunction> {
    let params = freeze_scale(spec, params, &domain.quadrature_grid())?;
    Ok(BasisFunction::Neural(Network { spec: spec.clone(), params }))
}

/// Batch-wise learner: grow `{1}` until the mean relative reconstruction
/// error drops below `cfg.tol` or the dictionary reaches `cfg.max_atoms`.
pub fn learn_dictionary_batch(
    dataset: &[PointCloudSignal],
    domain: &DomainBox,
    cfg: &DictLearnConfig,
    rng: &RngState,
) -> Result<(Dictionary, DictTrace)> {
    if dataset.is_empty() {
        return Err(RinoError::InvalidArgument("dataset is empty".into()));
    }
    cfg.validate(domain)?;
    let data = Packed::new(dataset, domain)?;
    let total = data.values.len();
    let mut dict = Dictionary::trivial(domain.clone());
    let mut rows: Vec<Vec<f64>> = vec![vec![1.0; total]];
    let mut err = mean_error(&data, &fit_all(&rows, None, &data, cfg.lambda)?);
    let mut trace = DictTrace {
        epochs: Vec::new(),
        additions: Vec::new(),
        errors_after_atom: vec![err],
        stop: StopReason::ToleranceReached,
        monotonicity_warnings: 0,
    };
    info!("dictionary learning: {} realizations, {} points, initial error {err:.3e}", data.n(), total);

    while err >= cfg.tol {
        if dict.len() >= cfg.max_atoms {
            trace.stop = StopReason::MaxAtoms;
            break;
        }
        let atom_index = dict.len();
        let spec = &cfg.atom_spec;
        let mut params = init_mlp(spec, &rng.derive(atom_index as u64))?;
        let mut flat = params.to_flat();
        let mut adam = AdamState::new(flat.len(), cfg.lr);
        let mut progress = Progress::new(flat.clone());
        trace.additions.push(trace.epochs.len());

        for epoch in 0..cfg.epochs_per_atom {
            let (raw, tape) = mlp_forward_tape(spec, &params, &data.points)?;
            let raw = raw.into_data();
            // Batch-statistic normalization of the trial atom.
            let mean_sq = (raw.iter().map(|v| v * v).sum::<f64>() / total as f64).max(1e-300);
            let scale = mean_sq.sqrt();
            let psi_new: Vec<f64> = raw.iter().map(|v| v / scale).collect();

            let fits = fit_all(&rows, Some(&psi_new), &data, cfg.lambda)?;
            let epoch_err = mean_error(&data, &fits);
            trace.epochs.push(EpochRecord { atoms: dict.len() + 1, epoch, error: epoch_err });
            if progress.record(epoch_err, &flat, cfg) {
                break;
            }

            // d/dψ_new of mean_i mean_j r_ij² with coefficients held fixed.
            let n = data.n() as f64;
            let mut g = vec![0.0; total];
            for (i, (coeffs, res)) in fits.iter().enumerate() {
                let a_new = *coeffs.last().expect("trial atom present");
                let rng_i = data.range(i);
                let m = rng_i.len() as f64;
                for (gj, rj) in g[rng_i].iter_mut().zip(res) {
                    *gj = -2.0 * a_new * rj / (n * m);
                }
            }
            // Chain rule through ψ = raw / √(mean raw²).
            let g_dot_raw: f64 = g.iter().zip(&raw).map(|(a, b)| a * b).sum();
            let corr = g_dot_raw / (total as f64 * scale * scale * scale);
            let weights: Vec<f64> = g.iter().zip(&raw).map(|(gj, rj)| gj / scale - rj * corr).collect();
            let grads = mlp_backward(&params, &tape, &DenseMatrix::column_vector(&weights))?;
            adam.step(&mut flat, &grads)?;
            params.set_flat(&flat)?;
        }
        trace.monotonicity_warnings += progress.warnings;
        if progress.warnings > 0 {
            warn!("atom {atom_index}: error rose between epochs {} times", progress.warnings);
        }

        params.set_flat(&progress.best_flat)?;
        let atom = freeze(spec, &params, domain)?;
        let atom_values = atom.evaluate(domain, &data.points)?;
        rows.push(atom_values);
        dict.push(atom)?;
        let new_err = mean_error(&data, &fit_all(&rows, None, &data, cfg.lambda)?);
        info!("atom {atom_index} frozen: error {err:.3e} -> {new_err:.3e}");
        trace.errors_after_atom.push(new_err);
        let gained = err - new_err >= cfg.min_gain * err;
        err = new_err;
        if !gained {
            warn!("atom {atom_index} reduced the error by less than {:.0}%; stopping", cfg.min_gain * 100.0);
            trace.stop = StopReason::NoProgress;
            break;
        }
    }
    if err < cfg.tol {
        trace.stop = StopReason::ToleranceReached;
    }
    Ok((dict, trace))
}

/// Fits a fresh atom to `target` at `points` by least squares and freezes
/// it. Returns the atom and the number of epochs run.
fn fit_residual_atom(
    points: &DenseMatrix,
    target: &[f64],
    domain: &DomainBox,
    cfg: &DictLearnConfig,
    rng: &RngState,
) -> Result<(BasisFunction, Vec<f64>)> {
    let spec = &cfg.atom_spec;
    let mut params = init_mlp(spec, rng)?;
    let mut flat = params.to_flat();
    let mut adam = AdamState::new(flat.len(), cfg.lr);
    let mut progress = Progress::new(flat.clone());
    let m = target.len() as f64;
    let sup2 = target.iter().fold(0.0_f64, |a, v| a.max(v.abs())).powi(2).max(1e-300);
    let mut errors = Vec::new();
    for _ in 0..cfg.epochs_per_atom {
        let (y, tape) = mlp_forward_tape(spec, &params, points)?;
        let diff: Vec<f64> = y.data().iter().zip(target).map(|(a, b)| a - b).collect();
        let err = diff.iter().map(|d| d * d).sum::<f64>() / m / sup2;
        errors.push(err);
        if progress.record(err, &flat, cfg) {
            break;
        }
        let weights: Vec<f64> = diff.iter().map(|d| 2.0 * d / m).collect();
        let grads = mlp_backward(&params, &tape, &DenseMatrix::column_vector(&weights))?;
        adam.step(&mut flat, &grads)?;
        params.set_flat(&flat)?;
    }
    params.set_flat(&progress.best_flat)?;
    Ok((freeze(spec, &params, domain)?, errors))
}

/// Sample-wise learner: visit realizations in order, projecting each onto
/// the current dictionary (initially empty) and fitting a new atom to the
/// residual whenever the relative error exceeds `cfg.tol`.
pub fn learn_dictionary_samplewise(
    dataset: &[PointCloudSignal],
    domain: &DomainBox,
    cfg: &DictLearnConfig,
    rng: &RngState,
) -> Result<(Dictionary, DictTrace)> {
    if dataset.is_empty() {
        return Err(RinoError::InvalidArgument("dataset is empty".into()));
    }
    cfg.validate(domain)?;
    let mut dict = Dictionary::new(domain.clone(), Vec::new())?;
    let mut trace = DictTrace {
        epochs: Vec::new(),
        additions: Vec::new(),
        errors_after_atom: Vec::new(),
        stop: StopReason::DataExhausted,
        monotonicity_warnings: 0,
    };
    for signal in dataset {
        let psi = super::evaluate_dictionary(&dict, &signal.points)?;
        let coeffs = ridge_coefficients(&psi, &signal.values, cfg.lambda)?;
        let r = residual(&psi, &signal.values, &coeffs);
        let err = residual_error(&signal.values, &r);
        if err <= cfg.tol {
            continue;
        }
        if dict.len() >= cfg.max_atoms {
            trace.stop = StopReason::MaxAtoms;
            break;
        }
        let atom_index = dict.len();
        trace.additions.push(trace.epochs.len());
        let (atom, errors) = fit_residual_atom(&signal.points, &r, domain, cfg, &rng.derive(atom_index as u64))?;
        trace.epochs.extend(errors.into_iter().enumerate().map(|(epoch, error)| EpochRecord { atoms: atom_index + 1, epoch, error }));
        dict.push(atom)?;

        let psi = super::evaluate_dictionary(&dict, &signal.points)?;
        let coeffs = ridge_coefficients(&psi, &signal.values, cfg.lambda)?;
        let new_err = residual_error(&signal.values, &residual(&psi, &signal.values, &coeffs));
        info!("realization {}: atom {atom_index} added, error {err:.3e} -> {new_err:.3e}", signal.id);
        trace.errors_after_atom.push(new_err);
        if err - new_err < cfg.min_gain * err {
            warn!("atom {atom_index} reduced the error by less than {:.0}%; stopping", cfg.min_gain * 100.0);
            trace.stop = StopReason::NoProgress;
            break;
        }
    }
    Ok((dict, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::{evaluate_dictionary, project, reconstruct};
    use crate::numerics::{sample_standard_normal, sample_uniform};

    fn small_cfg() -> DictLearnConfig {
        DictLearnConfig { epochs_per_atom: 300, lr: 1e-3, max_atoms: 4, ..DictLearnConfig::new(MlpSpec::siren(1, 1, vec![16, 16], 5.0)) }
    }

    #[test]
    fn constants_need_no_atoms() {
        let coeffs = sample_standard_normal(&RngState::new(1), 10);
        let data: Vec<_> = coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let xs = sample_uniform(&RngState::new(100 + i as u64), 5 + i, 0.0, 1.0);
                PointCloudSignal::from_1d(i, &xs, vec![*c; xs.len()]).unwrap()
            })
            .collect();
        let cfg = DictLearnConfig { tol: 1e-8, lambda: 0.0, ..small_cfg() };
        let (dict, trace) = learn_dictionary_batch(&data, &DomainBox::unit(1), &cfg, &RngState::new(2)).unwrap();
        assert_eq!(dict.len(), 1);
        assert!(trace.final_error() < 1e-20);
        assert!(trace.additions.is_empty());
    }

    #[test]
    fn affine_signals_reach_tolerance() {
        let ab = sample_standard_normal(&RngState::new(3), 100);
        let data: Vec<_> = (0..50)
            .map(|i| {
                let m = 20 + (i * 7) % 21;
                let xs = sample_uniform(&RngState::new(200 + i as u64), m, 0.0, 1.0);
                let u = xs.iter().map(|x| ab[2 * i] + ab[2 * i + 1] * x).collect();
                PointCloudSignal::from_1d(i, &xs, u).unwrap()
            })
            .collect();
        let cfg = DictLearnConfig { lambda: 1e-6, epochs_per_atom: 500, ..small_cfg() };
        let (dict, trace) = learn_dictionary_batch(&data, &DomainBox::unit(1), &cfg, &RngState::new(4)).unwrap();
        assert!(dict.len() - 1 <= 3, "added {} atoms", dict.len() - 1);
        assert!(trace.final_error() <= 1e-4, "error {}", trace.final_error());
        for w in trace.errors_after_atom.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        // Learned dictionary still reproduces a held-out affine signal.
        let xs = sample_uniform(&RngState::new(9), 30, 0.0, 1.0);
        let u: Vec<f64> = xs.iter().map(|x| 0.3 - 1.1 * x).collect();
        let s = PointCloudSignal::from_1d(0, &xs, u.clone()).unwrap();
        let e = project(&dict, &s, 1e-6).unwrap();
        let back = reconstruct(&dict, &e, &s.points).unwrap();
        assert!(crate::metrics::relative_mse(&u, &back).unwrap() < 1e-3);
    }

    #[test]
    fn zero_signals_add_no_samplewise_atoms() {
        let data: Vec<_> = (0..4).map(|i| PointCloudSignal::from_1d(i, &[0.1, 0.5, 0.9], vec![0.0; 3]).unwrap()).collect();
        let (dict, _) = learn_dictionary_samplewise(&data, &DomainBox::unit(1), &small_cfg(), &RngState::new(0)).unwrap();
        assert!(dict.is_empty());
    }

    #[test]
    fn scaled_copies_reuse_the_first_atom() {
        let xs: Vec<f64> = (0..200).map(|j| j as f64 / 199.0).collect();
        let base: Vec<f64> = xs.iter().map(|x| (2.0 * std::f64::consts::PI * x).sin()).collect();
        let data: Vec<_> = [1.0, -2.0, 0.5, 3.0]
            .iter()
            .enumerate()
            .map(|(i, c)| PointCloudSignal::from_1d(i, &xs, base.iter().map(|v| c * v).collect()).unwrap())
            .collect();
        let cfg = DictLearnConfig { epochs_per_atom: 3000, lr: 1e-3, patience: 200, lambda: 1e-8, ..small_cfg() };
        let (dict, trace) = learn_dictionary_samplewise(&data, &DomainBox::unit(1), &cfg, &RngState::new(5)).unwrap();
        assert_eq!(dict.len(), 1, "trace {:?}", trace.errors_after_atom);
        let psi = evaluate_dictionary(&dict, &DenseMatrix::column_vector(&xs)).unwrap();
        let corr = crate::numerics::dot(psi.row(0), &base).abs() / (crate::numerics::norm2(psi.row(0)) * crate::numerics::norm2(&base));
        assert!(corr > 0.9999, "correlation {corr}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = small_cfg();
        assert!(learn_dictionary_batch(&[], &DomainBox::unit(1), &cfg, &RngState::new(0)).is_err());
        let s = PointCloudSignal::from_1d(0, &[2.0], vec![1.0]).unwrap();
        assert!(matches!(
            learn_dictionary_batch(&[s], &DomainBox::unit(1), &cfg, &RngState::new(0)),
            Err(RinoError::DomainViolation { .. })
        ));
    }
}
