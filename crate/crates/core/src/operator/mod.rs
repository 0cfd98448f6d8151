//! DeepONet operators whose branch consumes a dictionary embedding of the
//! input function.
//!
//! The prediction at an output point `y` is `Σ_k br_k(α)·tr_k(y)`, plus a
//! stored mean field when the trunk is a centered POD basis.

mod pod;
mod train;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use pod::{pod_modes, PodBasis};
pub use train::{train_predefined_trunk, train_unknown_trunk, OperatorSample, TrainConfig, TrainTrace};

pub use crate::metrics::relative_mse;

use crate::dictionary::{evaluate_dictionary, ridge_coefficients, Dictionary, Embedding};
use crate::error::{Result, RinoError};
use crate::inr::Network;
use crate::numerics::DenseMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Branch {
    /// The embedding itself is the branch output.
    Identity,
    Mlp { network: Network },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trunk {
    /// Trainable network with `P` outputs.
    Network { network: Network },
    /// Fixed modes tabulated on a grid; `modes` is `K × P`.
    Pod { grid: DenseMatrix, modes: DenseMatrix, mean: Option<Vec<f64>> },
    Dictionary { dictionary: Dictionary },
}

/// Per-coordinate affine map of embeddings onto `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl MinMax {
    pub fn fit<'a, I: IntoIterator<Item = &'a [f64]>>(rows: I) -> Result<Self> {
        let mut it = rows.into_iter();
        let first = it.next().ok_or_else(|| RinoError::InvalidArgument("no embeddings to normalize".into()))?;
        let mut lower = first.to_vec();
        let mut upper = first.to_vec();
        for r in it {
            if r.len() != lower.len() {
                return Err(RinoError::ShapeMismatch("embeddings of different lengths".into()));
            }
            for ((lo, hi), &v) in lower.iter_mut().zip(upper.iter_mut()).zip(r) {
                *lo = lo.min(v);
                *hi = hi.max(v);
            }
        }
        Ok(Self { lower, upper })
    }

    /// Constant coordinates are shifted to zero but not scaled.
    pub fn apply(&self, a: &[f64]) -> Vec<f64> {
        a.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&lo, &hi))| if hi > lo { (v - lo) / (hi - lo) } else { v - lo })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepOnetModel {
    pub branch: Branch,
    pub trunk: Trunk,
    pub width: usize,
    /// Fingerprint of the dictionary that produced the input embeddings.
    pub input_fingerprint: String,
    pub input_len: usize,
    /// Fitted on training embeddings; applied before the branch.
    pub normalization: Option<MinMax>,
}

fn grid_key(p: &[f64]) -> Vec<i64> {
    p.iter().map(|v| (v * 1e9).round() as i64).collect()
}

impl Trunk {
    pub fn width(&self) -> usize {
        match self {
            Trunk::Network { network } => network.spec.output_dim,
            Trunk::Pod { modes, .. } => modes.cols(),
            Trunk::Dictionary { dictionary } => dictionary.len(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Trunk::Network { network } => network.spec.input_dim,
            Trunk::Pod { grid, .. } => grid.cols(),
            Trunk::Dictionary { dictionary } => dictionary.domain.dim(),
        }
    }

    /// Rows of the stored grid matching each query point.
    fn grid_rows(grid: &DenseMatrix, y: &DenseMatrix) -> Result<Vec<usize>> {
        let index: HashMap<Vec<i64>, usize> = grid.row_iter().enumerate().map(|(i, p)| (grid_key(p), i)).collect();
        y.row_iter()
            .map(|p| index.get(&grid_key(p)).copied().ok_or_else(|| RinoError::OffGridQuery { point: p.to_vec() }))
            .collect()
    }

    /// Basis values at every query point, `K × P`.
    pub fn values(&self, y: &DenseMatrix) -> Result<DenseMatrix> {
        if y.cols() != self.input_dim() {
            return Err(RinoError::ShapeMismatch(format!(
                "query points have {} coordinates, trunk expects {}",
                y.cols(),
                self.input_dim()
            )));
        }
        match self {
            Trunk::Network { network } => network.forward(y),
            Trunk::Pod { grid, modes, .. } => {
                let rows = Self::grid_rows(grid, y)?;
                let mut out = DenseMatrix::zeros(rows.len(), modes.cols());
                for (j, &r) in rows.iter().enumerate() {
                    out.row_mut(j).copy_from_slice(modes.row(r));
                }
                Ok(out)
            }
            Trunk::Dictionary { dictionary } => Ok(evaluate_dictionary(dictionary, y)?.transpose()),
        }
    }

    /// Additive mean field at the query points, if the trunk carries one.
    pub fn offset(&self, y: &DenseMatrix) -> Result<Option<Vec<f64>>> {
        match self {
            Trunk::Pod { grid, mean: Some(mean), .. } => {
                Ok(Some(Self::grid_rows(grid, y)?.into_iter().map(|r| mean[r]).collect()))
            }
            _ => Ok(None),
        }
    }
}

impl DeepOnetModel {
    pub fn new(branch: Branch, trunk: Trunk, input_fingerprint: impl Into<String>, input_len: usize) -> Result<Self> {
        let width = trunk.width();
        if width == 0 {
            return Err(RinoError::InvalidArgument("trunk has no basis functions".into()));
        }
        match &branch {
            Branch::Identity => {
                if input_len != width {
                    return Err(RinoError::ShapeMismatch(format!(
                        "identity branch needs {width} embedding coefficients, got {input_len}"
                    )));
                }
            }
            Branch::Mlp { network } => {
                network.spec.validate()?;
                if network.spec.input_dim != input_len || network.spec.output_dim != width {
                    return Err(RinoError::ShapeMismatch(format!(
                        "branch maps {} -> {}, model needs {input_len} -> {width}",
                        network.spec.input_dim, network.spec.output_dim
                    )));
                }
            }
        }
        if let Trunk::Network { network } = &trunk {
            network.spec.validate()?;
        }
        if let Trunk::Pod { grid, modes, mean } = &trunk {
            if grid.rows() != modes.rows() || mean.as_ref().is_some_and(|m| m.len() != grid.rows()) {
                return Err(RinoError::ShapeMismatch("POD grid, modes and mean disagree".into()));
            }
        }
        Ok(Self { branch, trunk, width, input_fingerprint: input_fingerprint.into(), input_len, normalization: None })
    }

    fn check_embedding(&self, alpha: &Embedding) -> Result<()> {
        if alpha.dictionary_fingerprint != self.input_fingerprint {
            return Err(RinoError::FingerprintMismatch {
                expected: self.input_fingerprint.clone(),
                found: alpha.dictionary_fingerprint.clone(),
            });
        }
        if alpha.coeffs.len() != self.input_len {
            return Err(RinoError::ShapeMismatch(format!(
                "embedding has {} coefficients, model expects {}",
                alpha.coeffs.len(),
                self.input_len
            )));
        }
        Ok(())
    }

    /// Embedding after the stored normalization.
    pub fn branch_input(&self, coeffs: &[f64]) -> Vec<f64> {
        match &self.normalization {
            Some(n) => n.apply(coeffs),
            None => coeffs.to_vec(),
        }
    }

    /// Branch outputs for a batch of (already normalized) inputs, one per row.
    pub fn branch_values(&self, inputs: &DenseMatrix) -> Result<DenseMatrix> {
        match &self.branch {
            Branch::Identity => Ok(inputs.clone()),
            Branch::Mlp { network } => network.forward(inputs),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        crate::json::to_string(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        Self::new(m.branch.clone(), m.trunk.clone(), m.input_fingerprint.clone(), m.input_len)?;
        Ok(m)
    }
}

/// Operator output at each row of `y`.
pub fn predict(model: &DeepOnetModel, alpha: &Embedding, y: &DenseMatrix) -> Result<Vec<f64>> {
    model.check_embedding(alpha)?;
    let input = DenseMatrix::column_vector(&model.branch_input(&alpha.coeffs)).transpose();
    let b = model.branch_values(&input)?.into_data();
    let t = model.trunk.values(y)?;
    let mut out = t.matvec(&b)?;
    if let Some(offset) = model.trunk.offset(y)? {
        out.iter_mut().zip(offset).for_each(|(o, m)| *o += m);
    }
    Ok(out)
}

/// Ridge coefficients of an output field on the trunk basis, the target
/// `γ` of predefined-trunk training.
pub fn output_embedding(trunk: &Trunk, points: &DenseMatrix, values: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let psi = trunk.values(points)?.transpose();
    match trunk.offset(points)? {
        Some(offset) => {
            let centered: Vec<f64> = values.iter().zip(offset).map(|(v, m)| v - m).collect();
            ridge_coefficients(&psi, &centered, lambda)
        }
        None => ridge_coefficients(&psi, values, lambda),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::{AnalyticBasis, BasisFunction, DomainBox};
    use crate::inr::{Activation, MlpSpec};
    use crate::numerics::{sample_uniform, RngState};

    fn emb(coeffs: Vec<f64>, fp: &str) -> Embedding {
        Embedding { coeffs, dictionary_fingerprint: fp.into(), lambda: 0.0 }
    }

    fn monomial_trunk(p: usize) -> Trunk {
        let atoms = (0..p).map(|d| BasisFunction::Analytic(AnalyticBasis::Monomial { degree: d })).collect();
        Trunk::Dictionary { dictionary: Dictionary::new(DomainBox::unit(1), atoms).unwrap() }
    }

    #[test]
    fn zero_branch_predicts_zero() {
        let model = DeepOnetModel::new(Branch::Identity, monomial_trunk(3), "fp", 3).unwrap();
        let y = DenseMatrix::column_vector(&[0.1, 0.5, 0.9]);
        assert_eq!(predict(&model, &emb(vec![0.0; 3], "fp"), &y).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn unit_branch_with_linear_trunk() {
        let trunk = Trunk::Dictionary {
            dictionary: Dictionary::new(DomainBox::unit(1), vec![BasisFunction::Analytic(AnalyticBasis::Monomial { degree: 1 })]).unwrap(),
        };
        let model = DeepOnetModel::new(Branch::Identity, trunk, "fp", 1).unwrap();
        let ys = [0.0, 0.3, 0.75, 1.0];
        let out = predict(&model, &emb(vec![1.0], "fp"), &DenseMatrix::column_vector(&ys)).unwrap();
        assert_eq!(out, ys.to_vec());
    }

    fn random_model(seed: u64) -> DeepOnetModel {
        let rng = RngState::new(seed);
        let branch = Network::init(MlpSpec::mlp(4, 5, vec![8], Activation::Relu), &rng.derive(0)).unwrap();
        let trunk = Network::init(MlpSpec::siren(1, 5, vec![8, 8], 5.0), &rng.derive(1)).unwrap();
        DeepOnetModel::new(Branch::Mlp { network: branch }, Trunk::Network { network: trunk }, "fp", 4).unwrap()
    }

    #[test]
    fn matches_direct_double_sum() {
        let model = random_model(11);
        let alpha = emb(vec![0.3, -1.2, 0.8, 0.05], "fp");
        let ys = sample_uniform(&RngState::new(5), 7, 0.0, 1.0);
        let y = DenseMatrix::column_vector(&ys);
        let out = predict(&model, &alpha, &y).unwrap();
        let Branch::Mlp { network: br } = &model.branch else { unreachable!() };
        let Trunk::Network { network: tr } = &model.trunk else { unreachable!() };
        let b = br.forward(&DenseMatrix::new(1, 4, alpha.coeffs.clone()).unwrap()).unwrap();
        for (j, &yj) in ys.iter().enumerate() {
            let t = tr.forward(&DenseMatrix::column_vector(&[yj])).unwrap();
            let mut s = 0.0;
            for k in 0..5 {
                s += b[(0, k)] * t[(0, k)];
            }
            assert!((out[j] - s).abs() <= 1e-14 * s.abs().max(1.0));
        }
        let t = model.trunk.values(&y).unwrap();
        let linear = t.matvec(b.data()).unwrap();
        for (a, b) in out.iter().zip(&linear) {
            assert!((a - b).abs() <= 1e-14 * b.abs().max(1.0));
        }
    }

    #[test]
    fn foreign_embedding_is_rejected() {
        let model = random_model(1);
        let y = DenseMatrix::column_vector(&[0.5]);
        assert!(matches!(predict(&model, &emb(vec![0.0; 4], "other"), &y), Err(RinoError::FingerprintMismatch { .. })));
    }

    #[test]
    fn pod_trunk_refuses_off_grid_points() {
        let grid = DenseMatrix::column_vector(&[0.0, 0.5, 1.0]);
        let modes = DenseMatrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let trunk = Trunk::Pod { grid, modes, mean: Some(vec![10.0, 20.0, 30.0]) };
        let model = DeepOnetModel::new(Branch::Identity, trunk, "fp", 1).unwrap();
        let out = predict(&model, &emb(vec![2.0], "fp"), &DenseMatrix::column_vector(&[1.0, 0.0])).unwrap();
        assert_eq!(out, vec![36.0, 12.0]);
        let err = predict(&model, &emb(vec![2.0], "fp"), &DenseMatrix::column_vector(&[0.25])).unwrap_err();
        assert_eq!(err, RinoError::OffGridQuery { point: vec![0.25] });
    }

    #[test]
    fn identity_branch_width_checked() {
        assert!(DeepOnetModel::new(Branch::Identity, monomial_trunk(3), "fp", 2).is_err());
    }

    #[test]
    fn minmax_maps_training_range_to_unit_interval() {
        let rows = [vec![1.0, 5.0, 2.0], vec![3.0, 5.0, -2.0]];
        let n = MinMax::fit(rows.iter().map(|r| r.as_slice())).unwrap();
        assert_eq!(n.apply(&rows[0]), vec![0.0, 0.0, 1.0]);
        assert_eq!(n.apply(&rows[1]), vec![1.0, 0.0, 0.0]);
        assert_eq!(n.apply(&[2.0, 6.0, 0.0]), vec![0.5, 1.0, 0.5]);
    }

    #[test]
    fn model_json_round_trip() {
        let mut model = random_model(3);
        model.normalization = Some(MinMax { lower: vec![0.0; 4], upper: vec![1.0, 2.0, 3.0, 4.0] });
        let text = model.to_json().unwrap();
        assert_eq!(DeepOnetModel::from_json(&text).unwrap(), model);
    }

    #[test]
    fn output_embedding_recovers_trunk_coefficients() {
        let trunk = monomial_trunk(3);
        let xs: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
        let vals: Vec<f64> = xs.iter().map(|x| 1.0 - 2.0 * x + 0.5 * x * x).collect();
        let g = output_embedding(&trunk, &DenseMatrix::column_vector(&xs), &vals, 0.0).unwrap();
        for (a, b) in g.iter().zip([1.0, -2.0, 0.5]) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
