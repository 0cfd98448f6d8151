//! Implicit neural representations: SIREN and plain MLPs with exact
//! reverse-mode parameter gradients.
//!
//! A network maps a batch of points (`batch × input_dim`) to a batch of
//! values (`batch × output_dim`). Hidden layers apply `act(W h + β)`; the
//! last layer is affine. When `output_scale` is set the output is divided
//! by it, which is how a trained basis function is frozen to unit
//! empirical norm.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RinoError};
use crate::numerics::{dot, DenseMatrix, RngState};

/// Mean squares below this mark a basis function as dead.
pub const DEGENERATE_MEAN_SQUARE: f64 = 1e-24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sine,
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    /// Value and derivative at `z`.
    #[inline]
    fn eval(self, z: f64) -> (f64, f64) {
        match self {
            Activation::Sine => z.sin_cos(),
            Activation::Relu => {
                if z > 0.0 {
                    (z, 1.0)
                } else {
                    (0.0, 0.0)
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                (t, 1.0 - t * t)
            }
            Activation::Identity => (z, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub activation: Activation,
    /// First-layer frequency factor; only meaningful for sine networks.
    pub omega0: f64,
}

impl MlpSpec {
    pub fn siren(input_dim: usize, output_dim: usize, hidden_widths: Vec<usize>, omega0: f64) -> Self {
        Self { input_dim, output_dim, hidden_widths, activation: Activation::Sine, omega0 }
    }

    pub fn mlp(input_dim: usize, output_dim: usize, hidden_widths: Vec<usize>, activation: Activation) -> Self {
        Self { input_dim, output_dim, hidden_widths, activation, omega0: 1.0 }
    }

    /// Layer sizes from input to output.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_widths.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_widths);
        dims.push(self.output_dim);
        dims
    }

    pub fn n_params(&self) -> usize {
        self.layer_dims().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_widths.contains(&0) {
            return Err(RinoError::InvalidArgument("network dimensions must be positive".into()));
        }
        if !(self.omega0 > 0.0) || !self.omega0.is_finite() {
            return Err(RinoError::InvalidArgument("omega0 must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `out × in`.
    #[serde(with = "nested_rows")]
    pub weights: DenseMatrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
    /// Frozen normalization divisor applied to the output.
    pub output_scale: Option<f64>,
}

impl MlpParams {
    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.data().len() + l.bias.len()).sum()
    }

    /// Parameters flattened layer by layer: weights (row-major) then bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(l.weights.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(RinoError::ShapeMismatch(format!(
                "{} values for {} parameters",
                flat.len(),
                self.n_params()
            )));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.data().len();
            l.weights.data_mut().copy_from_slice(&flat[off..off + nw]);
            off += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    fn check(&self, spec: &MlpSpec) -> Result<()> {
        let dims = spec.layer_dims();
        if self.layers.len() != dims.len() - 1 {
            return Err(RinoError::ShapeMismatch(format!(
                "{} layers for a spec with {}",
                self.layers.len(),
                dims.len() - 1
            )));
        }
        for (l, w) in self.layers.iter().zip(dims.windows(2)) {
            if l.weights.shape() != (w[1], w[0]) || l.bias.len() != w[1] {
                return Err(RinoError::ShapeMismatch("layer shape does not match spec".into()));
            }
        }
        if let Some(s) = self.output_scale {
            if !(s > 0.0) || !s.is_finite() {
                return Err(RinoError::InvalidArgument("output_scale must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Uniform `±ω·√(6/fan_in)` weights with `ω = omega0` on the first layer of
/// a sine network and `ω = 1` elsewhere; zero biases.
pub fn init_mlp(spec: &MlpSpec, rng: &RngState) -> Result<MlpParams> {
    spec.validate()?;
    let mut g = rng.generator();
    let dims = spec.layer_dims();
    let layers = dims
        .windows(2)
        .enumerate()
        .map(|(m, w)| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let omega = if m == 0 && spec.activation == Activation::Sine { spec.omega0 } else { 1.0 };
            let bound = omega * (6.0 / fan_in as f64).sqrt();
            let data = (0..fan_in * fan_out).map(|_| g.random_range(-bound..=bound)).collect();
            Layer { weights: DenseMatrix::new(fan_out, fan_in, data).expect("sized"), bias: vec![0.0; fan_out] }
        })
        .collect();
    Ok(MlpParams { layers, output_scale: None })
}

/// Intermediate values kept by a forward pass for the backward sweep.
#[derive(Debug, Clone)]
pub struct Tape {
    /// Layer inputs: `inputs[m]` feeds layer `m`.
    inputs: Vec<DenseMatrix>,
    /// Activation derivatives of each hidden layer.
    slopes: Vec<DenseMatrix>,
}

fn affine(h: &DenseMatrix, layer: &Layer) -> DenseMatrix {
    let (batch, out_dim) = (h.rows(), layer.weights.rows());
    let mut z = DenseMatrix::zeros(batch, out_dim);
    for b in 0..batch {
        let hr = h.row(b);
        let zr = z.row_mut(b);
        for (o, zo) in zr.iter_mut().enumerate() {
            *zo = dot(hr, layer.weights.row(o)) + layer.bias[o];
        }
    }
    z
}

fn forward_impl(spec: &MlpSpec, params: &MlpParams, x: &DenseMatrix, keep: bool) -> Result<(DenseMatrix, Option<Tape>)> {
    params.check(spec)?;
    if x.cols() != spec.input_dim {
        return Err(RinoError::ShapeMismatch(format!(
            "points have {} coordinates, network expects {}",
            x.cols(),
            spec.input_dim
        )));
    }
    let n_layers = params.layers.len();
    let mut inputs = Vec::with_capacity(if keep { n_layers } else { 0 });
    let mut slopes = Vec::with_capacity(if keep { n_layers - 1 } else { 0 });
    let mut h = x.clone();
    for (m, layer) in params.layers.iter().enumerate() {
        let mut z = affine(&h, layer);
        if m + 1 < n_layers {
            let mut slope = if keep { DenseMatrix::zeros(z.rows(), z.cols()) } else { DenseMatrix::zeros(0, 0) };
            for (k, zk) in z.data_mut().iter_mut().enumerate() {
                let (a, d) = spec.activation.eval(*zk);
                *zk = a;
                if keep {
                    slope.data_mut()[k] = d;
                }
            }
            if keep {
                slopes.push(slope);
            }
        }
        if keep {
            inputs.push(std::mem::replace(&mut h, z));
        } else {
            h = z;
        }
    }
    if let Some(s) = params.output_scale {
        h.data_mut().iter_mut().for_each(|v| *v /= s);
    }
    Ok((h, keep.then_some(Tape { inputs, slopes })))
}

pub fn mlp_forward(spec: &MlpSpec, params: &MlpParams, x: &DenseMatrix) -> Result<DenseMatrix> {
    Ok(forward_impl(spec, params, x, false)?.0)
}

/// Forward pass that also records what [`mlp_backward`] needs.
pub fn mlp_forward_tape(spec: &MlpSpec, params: &MlpParams, x: &DenseMatrix) -> Result<(DenseMatrix, Tape)> {
    let (y, tape) = forward_impl(spec, params, x, true)?;
    Ok((y, tape.expect("tape requested")))
}

/// Gradient of `Σ_b Σ_o weights[b,o]·output[b,o]` with respect to the flat
/// parameter vector, reusing a recorded forward pass.
pub fn mlp_backward(params: &MlpParams, tape: &Tape, residual_weights: &DenseMatrix) -> Result<Vec<f64>> {
    let n_layers = params.layers.len();
    let last = &params.layers[n_layers - 1];
    let batch = tape.inputs[0].rows();
    if residual_weights.shape() != (batch, last.weights.rows()) {
        return Err(RinoError::ShapeMismatch(format!(
            "weights are {}x{}, outputs are {}x{}",
            residual_weights.rows(),
            residual_weights.cols(),
            batch,
            last.weights.rows()
        )));
    }
    let mut delta = residual_weights.clone();
    if let Some(s) = params.output_scale {
        delta.data_mut().iter_mut().for_each(|v| *v /= s);
    }
    let mut layer_grads: Vec<Vec<f64>> = vec![Vec::new(); n_layers];
    for m in (0..n_layers).rev() {
        let layer = &params.layers[m];
        let h = &tape.inputs[m];
        let (out_dim, in_dim) = layer.weights.shape();
        let mut gw = vec![0.0; out_dim * in_dim];
        let mut gb = vec![0.0; out_dim];
        for b in 0..batch {
            let dr = delta.row(b);
            let hr = h.row(b);
            for (o, &d) in dr.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                for (g, &hv) in gw[o * in_dim..(o + 1) * in_dim].iter_mut().zip(hr) {
                    *g += d * hv;
                }
            }
        }
        if m > 0 {
            let slope = &tape.slopes[m - 1];
            let mut next = DenseMatrix::zeros(batch, in_dim);
            for b in 0..batch {
                let dr = delta.row(b);
                let nr = next.row_mut(b);
                for (o, &d) in dr.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    for (n, &w) in nr.iter_mut().zip(layer.weights.row(o)) {
                        *n += d * w;
                    }
                }
                for (n, &s) in nr.iter_mut().zip(slope.row(b)) {
                    *n *= s;
                }
            }
            delta = next;
        }
        gw.extend_from_slice(&gb);
        layer_grads[m] = gw;
    }
    Ok(layer_grads.concat())
}

/// Exact gradient of `Σ residual_weights ⊙ output` with respect to all
/// parameters, in [`MlpParams::to_flat`] order.
pub fn mlp_param_grads(spec: &MlpSpec, params: &MlpParams, x: &DenseMatrix, residual_weights: &DenseMatrix) -> Result<Vec<f64>> {
    let (_, tape) = mlp_forward_tape(spec, params, x)?;
    mlp_backward(params, &tape, residual_weights)
}

/// Sets `output_scale = √(mean ψ²)` over the quadrature points so the
/// frozen network has unit empirical norm.
pub fn freeze_scale(spec: &MlpSpec, params: &MlpParams, quadrature_points: &DenseMatrix) -> Result<MlpParams> {
    if quadrature_points.rows() == 0 {
        return Err(RinoError::InvalidArgument("empty quadrature".into()));
    }
    let raw = MlpParams { output_scale: None, ..params.clone() };
    let y = mlp_forward(spec, &raw, quadrature_points)?;
    let mean_square = y.data().iter().map(|v| v * v).sum::<f64>() / y.data().len() as f64;
    if !(mean_square >= DEGENERATE_MEAN_SQUARE) {
        return Err(RinoError::DegenerateBasis { mean_square });
    }
    Ok(MlpParams { output_scale: Some(mean_square.sqrt()), ..raw })
}

/// A network specification bundled with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub spec: MlpSpec,
    pub params: MlpParams,
}

impl Network {
    pub fn init(spec: MlpSpec, rng: &RngState) -> Result<Self> {
        let params = init_mlp(&spec, rng)?;
        Ok(Self { spec, params })
    }

    pub fn forward(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        mlp_forward(&self.spec, &self.params, x)
    }
}

/// Serializes a matrix as an array of row arrays.
pub mod nested_rows {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::numerics::DenseMatrix;

    pub fn serialize<S: Serializer>(m: &DenseMatrix, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<&[f64]> = (0..m.rows()).map(|i| m.row(i)).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DenseMatrix, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        DenseMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, sample_standard_normal};

    fn points(vals: &[f64]) -> DenseMatrix {
        DenseMatrix::column_vector(vals)
    }

    #[test]
    fn init_bounds_follow_first_layer_omega() {
        let spec = MlpSpec::siren(1, 1, vec![20], 5.0);
        let p = init_mlp(&spec, &RngState::new(3)).unwrap();
        let b1 = 5.0 * 6.0_f64.sqrt();
        let b2 = (6.0 / 20.0_f64).sqrt();
        assert!((b1 - 12.247).abs() < 1e-3 && (b2 - 0.5477).abs() < 1e-4);
        assert!(p.layers[0].weights.data().iter().all(|w| w.abs() <= b1));
        assert!(p.layers[0].weights.data().iter().any(|w| w.abs() > 2.0));
        assert!(p.layers[1].weights.data().iter().all(|w| w.abs() <= b2));
        for l in &p.layers {
            assert!(l.bias.iter().all(|b| *b == 0.0));
        }
        assert_eq!(p, init_mlp(&spec, &RngState::new(3)).unwrap());
    }

    #[test]
    fn relu_init_ignores_omega() {
        let spec = MlpSpec { omega0: 30.0, ..MlpSpec::mlp(1, 1, vec![4], Activation::Relu) };
        let p = init_mlp(&spec, &RngState::new(1)).unwrap();
        assert!(p.layers[0].weights.data().iter().all(|w| w.abs() <= 6.0_f64.sqrt()));
    }

    #[test]
    fn zero_weights_give_last_bias() {
        let spec = MlpSpec::siren(1, 1, vec![3], 1.0);
        let mut p = init_mlp(&spec, &RngState::new(0)).unwrap();
        let n = p.n_params();
        p.set_flat(&vec![0.0; n]).unwrap();
        p.layers[1].bias[0] = 2.5;
        let y = mlp_forward(&spec, &p, &points(&[-1.0, 0.3, 7.0])).unwrap();
        assert!(y.data().iter().all(|v| *v == 2.5));
    }

    #[test]
    fn single_sine_unit_composition() {
        let spec = MlpSpec::siren(1, 1, vec![1], 1.0);
        let w = 3.0;
        let a = 1.7;
        let p = MlpParams {
            layers: vec![
                Layer { weights: DenseMatrix::new(1, 1, vec![w]).unwrap(), bias: vec![0.0] },
                Layer { weights: DenseMatrix::new(1, 1, vec![a]).unwrap(), bias: vec![0.0] },
            ],
            output_scale: None,
        };
        let x = std::f64::consts::PI / (2.0 * w);
        let y = mlp_forward(&spec, &p, &points(&[0.0, x])).unwrap();
        assert_eq!(y.data()[0], 0.0);
        assert!((y.data()[1] - a).abs() < 1e-15);
    }

    /// Evaluates one point at a time without any shared helpers.
    fn straight_line_eval(spec: &MlpSpec, p: &MlpParams, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for (m, l) in p.layers.iter().enumerate() {
            let mut z = vec![0.0; l.bias.len()];
            for o in 0..z.len() {
                let mut acc = l.bias[o];
                for i in 0..h.len() {
                    acc += l.weights[(o, i)] * h[i];
                }
                z[o] = if m + 1 < p.layers.len() {
                    match spec.activation {
                        Activation::Sine => acc.sin(),
                        Activation::Relu => acc.max(0.0),
                        Activation::Tanh => acc.tanh(),
                        Activation::Identity => acc,
                    }
                } else {
                    acc
                };
            }
            h = z;
        }
        h.iter().map(|v| v / p.output_scale.unwrap_or(1.0)).collect()
    }

    #[test]
    fn forward_matches_straight_line_oracle() {
        let spec = MlpSpec::siren(2, 3, vec![7, 5], 4.0);
        let mut p = init_mlp(&spec, &RngState::new(9)).unwrap();
        let flat: Vec<f64> = p.to_flat().iter().zip(sample_standard_normal(&RngState::new(10), p.n_params())).map(|(w, n)| w + 0.1 * n).collect();
        p.set_flat(&flat).unwrap();
        p.output_scale = Some(1.3);
        let x = DenseMatrix::new(5, 2, sample_standard_normal(&RngState::new(11), 10)).unwrap();
        let y = mlp_forward(&spec, &p, &x).unwrap();
        for b in 0..5 {
            let oracle = straight_line_eval(&spec, &p, x.row(b));
            for (u, v) in y.row(b).iter().zip(&oracle) {
                assert!((u - v).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn zero_residual_weights_zero_gradient() {
        let spec = MlpSpec::siren(1, 1, vec![4, 4], 2.0);
        let p = init_mlp(&spec, &RngState::new(2)).unwrap();
        let x = points(&[0.1, 0.5, 0.9]);
        let g = mlp_param_grads(&spec, &p, &x, &DenseMatrix::zeros(3, 1)).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_layer_gradient_is_outer_product() {
        let spec = MlpSpec::mlp(2, 1, vec![], Activation::Identity);
        let p = MlpParams {
            layers: vec![Layer { weights: DenseMatrix::new(1, 2, vec![0.3, -0.2]).unwrap(), bias: vec![0.0] }],
            output_scale: None,
        };
        let x = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5]]).unwrap();
        let r = DenseMatrix::column_vector(&[2.0, 1.0]);
        let g = mlp_param_grads(&spec, &p, &x, &r).unwrap();
        assert_eq!(g, vec![2.0 * 1.0 + 1.0 * -3.0, 2.0 * 2.0 + 1.0 * 0.5, 3.0]);
    }

    fn check_gradients(spec: MlpSpec, seed: u64) {
        let mut p = init_mlp(&spec, &RngState::new(seed)).unwrap();
        // Non-zero biases so every parameter is exercised.
        let flat: Vec<f64> = p.to_flat().iter().zip(sample_standard_normal(&RngState::new(seed + 1), p.n_params())).map(|(w, n)| w + 0.2 * n).collect();
        p.set_flat(&flat).unwrap();
        p.output_scale = Some(0.8);
        let x = DenseMatrix::new(6, spec.input_dim, sample_standard_normal(&RngState::new(seed + 2), 6 * spec.input_dim)).unwrap();
        let r = DenseMatrix::new(6, spec.output_dim, sample_standard_normal(&RngState::new(seed + 3), 6 * spec.output_dim)).unwrap();
        let grad = mlp_param_grads(&spec, &p, &x, &r).unwrap();
        let objective = |theta: &[f64]| {
            let mut q = p.clone();
            q.set_flat(theta).unwrap();
            let y = mlp_forward(&spec, &q, &x).unwrap();
            y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum::<f64>()
        };
        let fd = finite_diff_grad(objective, &flat, 1e-5);
        let mut checked = 0;
        for (i, (g, f)) in grad.iter().zip(&fd).enumerate() {
            let scale = g.abs().max(f.abs());
            if scale < 1e-6 {
                assert!((g - f).abs() < 1e-8, "param {i}: {g} vs {f}");
                continue;
            }
            assert!((g - f).abs() / scale <= 1e-5, "{:?} param {i}: {g} vs {f}", spec.activation);
            checked += 1;
        }
        assert!(checked >= 12);
    }

    #[test]
    fn gradients_match_central_differences_for_every_activation() {
        check_gradients(MlpSpec::siren(1, 1, vec![5, 4], 5.0), 20);
        check_gradients(MlpSpec::siren(2, 2, vec![6], 3.0), 21);
        check_gradients(MlpSpec::mlp(3, 2, vec![5, 5], Activation::Tanh), 22);
        check_gradients(MlpSpec::mlp(2, 3, vec![6, 4], Activation::Relu), 23);
        check_gradients(MlpSpec::mlp(2, 1, vec![4], Activation::Identity), 24);
    }

    #[test]
    fn freeze_scale_of_constant_and_sine() {
        let spec = MlpSpec::siren(1, 1, vec![1], 1.0);
        let mut p = init_mlp(&spec, &RngState::new(0)).unwrap();
        p.set_flat(&[0.0, 0.0, 0.0, 3.0]).unwrap();
        let q = points(&[0.0, 0.2, 0.7]);
        let frozen = freeze_scale(&spec, &p, &q).unwrap();
        assert!((frozen.output_scale.unwrap() - 3.0).abs() < 1e-15);
        assert!(mlp_forward(&spec, &frozen, &q).unwrap().data().iter().all(|v| (v - 1.0).abs() < 1e-15));

        // ψ(x) = sin(2πx)
        p.set_flat(&[2.0 * std::f64::consts::PI, 0.0, 1.0, 0.0]).unwrap();
        let grid: Vec<f64> = (0..10_000).map(|i| (i as f64 + 0.5) / 10_000.0).collect();
        let grid = points(&grid);
        let frozen = freeze_scale(&spec, &p, &grid).unwrap();
        assert!((frozen.output_scale.unwrap() - 0.5_f64.sqrt()).abs() <= 1e-3);
        let y = mlp_forward(&spec, &frozen, &grid).unwrap();
        let ms = y.data().iter().map(|v| v * v).sum::<f64>() / 10_000.0;
        assert!((ms - 1.0).abs() <= 1e-12);

        p.set_flat(&[0.0; 4]).unwrap();
        assert!(matches!(freeze_scale(&spec, &p, &grid), Err(RinoError::DegenerateBasis { .. })));
    }

    #[test]
    fn frozen_forward_is_unfrozen_over_scale() {
        let spec = MlpSpec::siren(1, 1, vec![8, 8], 5.0);
        let p = init_mlp(&spec, &RngState::new(4)).unwrap();
        let grid = points(&(0..50).map(|i| i as f64 / 49.0).collect::<Vec<_>>());
        let frozen = freeze_scale(&spec, &p, &grid).unwrap();
        let s = frozen.output_scale.unwrap();
        let a = mlp_forward(&spec, &p, &grid).unwrap();
        let b = mlp_forward(&spec, &frozen, &grid).unwrap();
        for (u, v) in a.data().iter().zip(b.data()) {
            assert_eq!(u / s, *v);
        }
    }

    #[test]
    fn outputs_finite_across_init_distribution() {
        let x = points(&(0..20).map(|i| -1.0 + i as f64 / 9.5).collect::<Vec<_>>());
        for seed in 0..1000 {
            let act = [Activation::Sine, Activation::Relu, Activation::Tanh][seed as usize % 3];
            let spec = MlpSpec { omega0: 30.0, ..MlpSpec::mlp(1, 2, vec![16, 16], act) };
            let p = init_mlp(&spec, &RngState::new(seed)).unwrap();
            assert!(mlp_forward(&spec, &p, &x).unwrap().is_finite());
        }
    }

    #[test]
    fn shape_errors() {
        let spec = MlpSpec::siren(2, 1, vec![3], 1.0);
        let p = init_mlp(&spec, &RngState::new(0)).unwrap();
        assert!(matches!(mlp_forward(&spec, &p, &points(&[0.0])), Err(RinoError::ShapeMismatch(_))));
        let x = DenseMatrix::zeros(4, 2);
        assert!(mlp_param_grads(&spec, &p, &x, &DenseMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn json_round_trip_preserves_bits() {
        let net = Network::init(MlpSpec::siren(1, 1, vec![4], 5.0), &RngState::new(5)).unwrap();
        let text = crate::json::to_string(&net).unwrap();
        let back: Network = serde_json::from_str(&text).unwrap();
        assert_eq!(back, net);
        assert!(text.contains("\"hidden_widths\":[4]"));
    }
}
