use std::collections::HashMap;

use log::{debug, warn};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Branch, DeepOnetModel, MinMax, Trunk};
use crate::dictionary::Embedding;
use crate::error::{Result, RinoError};
use crate::inr::{mlp_backward, mlp_forward_tape, Tape};
use crate::metrics::ZERO_SIGNAL;
use crate::numerics::{AdamState, DenseMatrix, RngState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    /// Realizations per optimizer step; `None` is the full set.
    pub batch_size: Option<usize>,
    /// Weight of the embedding consistency term.
    pub tau: f64,
    pub seed: u64,
    pub normalize_embeddings: bool,
}

impl TrainConfig {
    pub fn new(epochs: usize) -> Self {
        Self { lr: 1e-3, epochs, batch_size: None, tau: 1.0, seed: 0, normalize_embeddings: false }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || !(self.lr > 0.0) || self.batch_size == Some(0) {
            return Err(RinoError::InvalidArgument("epochs, lr and batch size must be positive".into()));
        }
        if !(self.tau >= 0.0) {
            return Err(RinoError::InvalidArgument("tau must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSample {
    pub input_embedding: Embedding,
    /// `K × d_y`.
    pub output_points: DenseMatrix,
    pub output_values: Vec<f64>,
    /// Projection of the output onto the trunk basis.
    pub output_embedding: Option<Embedding>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainTrace {
    /// Mean objective per epoch, consistency term included.
    pub loss: Vec<f64>,
    /// Mean relative MSE of the predictions per epoch.
    pub prediction_loss: Vec<f64>,
    /// Set when training stopped on a non-finite gradient; the returned
    /// model holds the last finite parameters.
    pub aborted: Option<RinoError>,
}

struct Group {
    points: DenseMatrix,
    fixed: Option<DenseMatrix>,
    offset: Option<Vec<f64>>,
}

struct Prepared<'a> {
    inputs: Vec<Vec<f64>>,
    values: Vec<&'a [f64]>,
    /// `1 / (K·max|v|²)`, the relative-MSE weight of each realization.
    weights: Vec<f64>,
    group_of: Vec<usize>,
    groups: Vec<Group>,
    gammas: Option<Vec<&'a [f64]>>,
}

fn prepare<'a>(
    model: &mut DeepOnetModel,
    data: &'a [OperatorSample],
    cfg: &TrainConfig,
    trunk_trainable: bool,
    need_gamma: bool,
) -> Result<Prepared<'a>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(RinoError::InvalidArgument("empty training set".into()));
    }
    for (i, s) in data.iter().enumerate() {
        model.check_embedding(&s.input_embedding)?;
        if s.output_values.is_empty() || s.output_points.rows() != s.output_values.len() {
            return Err(RinoError::ShapeMismatch(format!("sample {i} has {} points and {} values", s.output_points.rows(), s.output_values.len())));
        }
        if need_gamma {
            let g = s.output_embedding.as_ref().ok_or(RinoError::MissingGamma { index: i })?;
            if g.coeffs.len() != model.width {
                return Err(RinoError::ShapeMismatch(format!("sample {i} output embedding has {} coefficients, trunk has {}", g.coeffs.len(), model.width)));
            }
        }
    }
    if cfg.normalize_embeddings {
        model.normalization = Some(MinMax::fit(data.iter().map(|s| s.input_embedding.coeffs.as_slice()))?);
    }
    let inputs = data.iter().map(|s| model.branch_input(&s.input_embedding.coeffs)).collect();
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut groups = Vec::new();
    let mut group_of = Vec::with_capacity(data.len());
    for s in data {
        let key: Vec<u64> = s.output_points.data().iter().map(|v| v.to_bits()).collect();
        let g = match index.get(&key) {
            Some(&g) => g,
            None => {
                let fixed = if trunk_trainable { None } else { Some(model.trunk.values(&s.output_points)?) };
                if trunk_trainable && s.output_points.cols() != model.trunk.input_dim() {
                    return Err(RinoError::ShapeMismatch("output points do not match the trunk".into()));
                }
                let offset = model.trunk.offset(&s.output_points)?;
                groups.push(Group { points: s.output_points.clone(), fixed, offset });
                index.insert(key, groups.len() - 1);
                groups.len() - 1
            }
        };
        group_of.push(g);
    }
    let weights = data
        .iter()
        .map(|s| {
            let sup = s.output_values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let k = s.output_values.len() as f64;
            if sup < ZERO_SIGNAL {
                1.0 / k
            } else {
                1.0 / (k * sup * sup)
            }
        })
        .collect();
    let gammas = need_gamma.then(|| data.iter().map(|s| s.output_embedding.as_ref().expect("checked").coeffs.as_slice()).collect());
    Ok(Prepared { inputs, values: data.iter().map(|s| s.output_values.as_slice()).collect(), weights, group_of, groups, gammas })
}

fn trainable_flat(model: &DeepOnetModel, trunk_trainable: bool) -> Vec<f64> {
    let mut flat = Vec::new();
    if let Branch::Mlp { network } = &model.branch {
        flat.extend(network.params.to_flat());
    }
    if trunk_trainable {
        if let Trunk::Network { network } = &model.trunk {
            flat.extend(network.params.to_flat());
        }
    }
    flat
}

fn set_trainable(model: &mut DeepOnetModel, flat: &[f64], trunk_trainable: bool) -> Result<()> {
    let mut at = 0;
    if let Branch::Mlp { network } = &mut model.branch {
        let n = network.params.n_params();
        network.params.set_flat(&flat[at..at + n])?;
        at += n;
    }
    if trunk_trainable {
        if let Trunk::Network { network } = &mut model.trunk {
            let n = network.params.n_params();
            network.params.set_flat(&flat[at..at + n])?;
        }
    }
    Ok(())
}

struct BatchResult {
    loss: f64,
    prediction: f64,
    grads: Vec<f64>,
}

fn batch_gradient(model: &DeepOnetModel, prep: &Prepared, batch: &[usize], tau: f64, trunk_trainable: bool) -> Result<BatchResult> {
    let b = batch.len();
    let p = model.width;
    let mut x = DenseMatrix::zeros(b, model.input_len);
    for (r, &i) in batch.iter().enumerate() {
        x.row_mut(r).copy_from_slice(&prep.inputs[i]);
    }
    let (bout, btape): (DenseMatrix, Option<Tape>) = match &model.branch {
        Branch::Identity => (x, None),
        Branch::Mlp { network } => {
            let (o, t) = mlp_forward_tape(&network.spec, &network.params, &x)?;
            (o, Some(t))
        }
    };
    let trunk_net = match (&model.trunk, trunk_trainable) {
        (Trunk::Network { network }, true) => Some(network),
        _ => None,
    };
    let mut live: HashMap<usize, (DenseMatrix, Tape, DenseMatrix)> = HashMap::new();
    if let Some(net) = trunk_net {
        for &i in batch {
            let g = prep.group_of[i];
            if let std::collections::hash_map::Entry::Vacant(e) = live.entry(g) {
                let (t, tape) = mlp_forward_tape(&net.spec, &net.params, &prep.groups[g].points)?;
                let k = t.rows();
                e.insert((t, tape, DenseMatrix::zeros(k, p)));
            }
        }
    }
    let mut gb = DenseMatrix::zeros(b, p);
    let (mut pred_total, mut gamma_total) = (0.0, 0.0);
    let scale = 1.0 / b as f64;
    for (r, &i) in batch.iter().enumerate() {
        let g = prep.group_of[i];
        let group = &prep.groups[g];
        let bi = bout.row(r).to_vec();
        let t = match &group.fixed {
            Some(t) => t,
            None => &live[&g].0,
        };
        let mut pred = t.matvec(&bi)?;
        if let Some(off) = &group.offset {
            pred.iter_mut().zip(off).for_each(|(v, m)| *v += m);
        }
        let w = prep.weights[i];
        let mut sq = 0.0;
        let grow = gb.row_mut(r);
        let mut dpred = Vec::with_capacity(pred.len());
        for (j, (&v, &q)) in prep.values[i].iter().zip(&pred).enumerate() {
            let e = v - q;
            sq += e * e;
            let d = -2.0 * w * e * scale;
            dpred.push(d);
            for (gk, &tk) in grow.iter_mut().zip(t.row(j)) {
                *gk += d * tk;
            }
        }
        pred_total += w * sq;
        if let Some((_, _, gt)) = live.get_mut(&g) {
            for (j, &d) in dpred.iter().enumerate() {
                for (gk, &bk) in gt.row_mut(j).iter_mut().zip(&bi) {
                    *gk += d * bk;
                }
            }
        }
        if tau > 0.0 {
            if let Some(gammas) = &prep.gammas {
                let grow = gb.row_mut(r);
                for ((gk, &gam), &bk) in grow.iter_mut().zip(gammas[i]).zip(&bi) {
                    let d = gam - bk;
                    gamma_total += tau * d * d;
                    *gk += -2.0 * tau * d * scale;
                }
            }
        }
    }
    let mut grads = Vec::new();
    if let (Branch::Mlp { network }, Some(tape)) = (&model.branch, &btape) {
        grads.extend(mlp_backward(&network.params, tape, &gb)?);
    }
    if let Some(net) = trunk_net {
        let mut total = vec![0.0; net.params.n_params()];
        let mut keys: Vec<usize> = live.keys().copied().collect();
        keys.sort_unstable();
        for g in keys {
            let (_, tape, gt) = &live[&g];
            for (a, v) in total.iter_mut().zip(mlp_backward(&net.params, tape, gt)?) {
                *a += v;
            }
        }
        grads.extend(total);
    }
    Ok(BatchResult { loss: (pred_total + gamma_total) * scale, prediction: pred_total * scale, grads })
}

fn train_core(
    mut model: DeepOnetModel,
    data: &[OperatorSample],
    cfg: &TrainConfig,
    trunk_trainable: bool,
    need_gamma: bool,
) -> Result<(DeepOnetModel, TrainTrace)> {
    let prep = prepare(&mut model, data, cfg, trunk_trainable, need_gamma)?;
    let tau = if need_gamma { cfg.tau } else { 0.0 };
    let n = data.len();
    let bs = cfg.batch_size.unwrap_or(n).min(n);
    let mut flat = trainable_flat(&model, trunk_trainable);
    let mut adam = AdamState::new(flat.len(), cfg.lr);
    let shuffler = RngState::new(cfg.seed);
    let mut trace = TrainTrace::default();
    let mut order: Vec<usize> = (0..n).collect();
    'epochs: for epoch in 0..cfg.epochs {
        if bs < n {
            order.sort_unstable();
            order.shuffle(&mut shuffler.derive(epoch as u64).generator());
        }
        let (mut loss, mut pred) = (0.0, 0.0);
        for batch in order.chunks(bs) {
            let r = batch_gradient(&model, &prep, batch, tau, trunk_trainable)?;
            loss += r.loss * batch.len() as f64;
            pred += r.prediction * batch.len() as f64;
            if flat.is_empty() {
                continue;
            }
            let mut next = flat.clone();
            match adam.step(&mut next, &r.grads) {
                Ok(()) if next.iter().all(|v| v.is_finite()) => {
                    flat = next;
                    set_trainable(&mut model, &flat, trunk_trainable)?;
                }
                Ok(()) => {
                    trace.aborted = Some(RinoError::NaNGradient { step: adam.step });
                    break 'epochs;
                }
                Err(e) => {
                    trace.aborted = Some(e);
                    break 'epochs;
                }
            }
        }
        trace.loss.push(loss / n as f64);
        trace.prediction_loss.push(pred / n as f64);
        if epoch % 100 == 0 {
            debug!("epoch {epoch}: loss {:.6e}", loss / n as f64);
        }
    }
    if let Some(e) = &trace.aborted {
        warn!("operator training aborted after {} epochs: {e}", trace.loss.len());
    }
    Ok((model, trace))
}

/// Trains branch and trunk jointly on the mean per-realization relative
/// MSE. The trunk must be a network; a fixed trunk belongs to
/// [`train_predefined_trunk`].
pub fn train_unknown_trunk(model: DeepOnetModel, data: &[OperatorSample], cfg: &TrainConfig) -> Result<(DeepOnetModel, TrainTrace)> {
    if !matches!(model.trunk, Trunk::Network { .. }) {
        return Err(RinoError::InvalidArgument("trainable trunk must be a network".into()));
    }
    train_core(model, data, cfg, true, false)
}

/// Trains only the branch against a frozen trunk, adding
/// `τ·‖γ − br(α)‖²` to the prediction loss.
pub fn train_predefined_trunk(model: DeepOnetModel, data: &[OperatorSample], cfg: &TrainConfig) -> Result<(DeepOnetModel, TrainTrace)> {
    train_core(model, data, cfg, false, true)
}
