use serde::{Deserialize, Serialize};

use super::DomainBox;
use crate::error::{Result, RinoError};
use crate::inr::{mlp_forward, Layer, MlpParams, MlpSpec, Network};
use crate::numerics::DenseMatrix;

/// Closed-form basis functions on a one-dimensional domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", content = "parameters", rename_all = "snake_case")]
pub enum AnalyticBasis {
    /// `cos(frequency·x + phase)`.
    Cosine { frequency: f64, phase: f64 },
    /// Shallow ReLU network `Σ_k c_k·max(0, a_k x + b_k) + c₀`.
    ReluFeature { hidden_weights: Vec<f64>, hidden_biases: Vec<f64>, output_weights: Vec<f64>, output_bias: f64 },
    /// `x^degree`.
    Monomial { degree: usize },
    /// Legendre polynomial of the domain mapped onto `[-1, 1]`.
    Legendre { degree: usize },
}

impl AnalyticBasis {
    fn value(&self, x: f64, domain: &DomainBox) -> f64 {
        match self {
            AnalyticBasis::Cosine { frequency, phase } => (frequency * x + phase).cos(),
            AnalyticBasis::ReluFeature { hidden_weights, hidden_biases, output_weights, output_bias } => {
                hidden_weights
                    .iter()
                    .zip(hidden_biases)
                    .zip(output_weights)
                    .map(|((a, b), c)| c * (a * x + b).max(0.0))
                    .sum::<f64>()
                    + output_bias
            }
            AnalyticBasis::Monomial { degree } => x.powi(*degree as i32),
            AnalyticBasis::Legendre { degree } => {
                let xi = 2.0 * (x - domain.lower[0]) / (domain.upper[0] - domain.lower[0]) - 1.0;
                legendre(*degree, xi)
            }
        }
    }
}

/// `P_n(x)` by the three-term recurrence.
pub fn legendre(n: usize, x: f64) -> f64 {
    match n {
        0 => 1.0,
        1 => x,
        _ => {
            let (mut p0, mut p1) = (1.0, x);
            for k in 1..n {
                let kf = k as f64;
                let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
                p0 = p1;
                p1 = p2;
            }
            p1
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BasisFunction {
    ConstantOne,
    /// A trained network with a frozen `output_scale`.
    Neural(Network),
    Analytic(AnalyticBasis),
}

impl BasisFunction {
    pub(crate) fn validate(&self, domain: &DomainBox) -> Result<()> {
        match self {
            BasisFunction::ConstantOne => Ok(()),
            BasisFunction::Neural(net) => {
                net.spec.validate()?;
                if net.spec.input_dim != domain.dim() || net.spec.output_dim != 1 {
                    return Err(RinoError::ShapeMismatch("neural atom must map the domain to a scalar".into()));
                }
                if net.params.output_scale.is_none() {
                    return Err(RinoError::InvalidArgument("neural atom must have a frozen output scale".into()));
                }
                Ok(())
            }
            BasisFunction::Analytic(a) => {
                if domain.dim() != 1 {
                    return Err(RinoError::InvalidArgument("analytic atoms are one-dimensional".into()));
                }
                if let AnalyticBasis::ReluFeature { hidden_weights, hidden_biases, output_weights, .. } = a {
                    if hidden_weights.len() != hidden_biases.len() || hidden_weights.len() != output_weights.len() {
                        return Err(RinoError::ShapeMismatch("relu feature widths differ".into()));
                    }
                }
                Ok(())
            }
        }
    }

    /// Values at every row of `points`; domain membership is the caller's
    /// responsibility.
    pub fn evaluate(&self, domain: &DomainBox, points: &DenseMatrix) -> Result<Vec<f64>> {
        match self {
            BasisFunction::ConstantOne => Ok(vec![1.0; points.rows()]),
            BasisFunction::Neural(net) => Ok(mlp_forward(&net.spec, &net.params, points)?.into_data()),
            BasisFunction::Analytic(a) => Ok(points.row_iter().map(|p| a.value(p[0], domain)).collect()),
        }
    }
}

/// On-disk form of an atom.
#[derive(Serialize, Deserialize)]
struct AtomRecord {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    spec: Option<MlpSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    params: Option<Vec<Layer>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parameters: Option<serde_json::Value>,
}

impl Serialize for BasisFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let record = match self {
            BasisFunction::ConstantOne => AtomRecord { kind: "constant_one".into(), spec: None, params: None, scale: None, tag: None, parameters: None },
            BasisFunction::Neural(net) => AtomRecord {
                kind: "neural".into(),
                spec: Some(net.spec.clone()),
                params: Some(net.params.layers.clone()),
                scale: net.params.output_scale,
                tag: None,
                parameters: None,
            },
            BasisFunction::Analytic(a) => {
                let mut v = serde_json::to_value(a).map_err(serde::ser::Error::custom)?;
                let obj = v.as_object_mut().expect("adjacently tagged enum");
                let tag = obj.remove("tag").and_then(|t| t.as_str().map(String::from));
                let parameters = obj.remove("parameters");
                AtomRecord { kind: "analytic".into(), spec: None, params: None, scale: None, tag, parameters }
            }
        };
        record.serialize(s)
    }
}

impl<'de> Deserialize<'de> for BasisFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let r = AtomRecord::deserialize(d)?;
        match r.kind.as_str() {
            "constant_one" => Ok(BasisFunction::ConstantOne),
            "neural" => {
                let spec = r.spec.ok_or_else(|| D::Error::missing_field("spec"))?;
                let layers = r.params.ok_or_else(|| D::Error::missing_field("params"))?;
                Ok(BasisFunction::Neural(Network { spec, params: MlpParams { layers, output_scale: r.scale } }))
            }
            "analytic" => {
                let tag = r.tag.ok_or_else(|| D::Error::missing_field("tag"))?;
                let parameters = r.parameters.unwrap_or(serde_json::Value::Null);
                let v = serde_json::json!({ "tag": tag, "parameters": parameters });
                Ok(BasisFunction::Analytic(serde_json::from_value(v).map_err(D::Error::custom)?))
            }
            other => Err(D::Error::unknown_variant(other, &["constant_one", "neural", "analytic"])),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_values() {
        assert_eq!(legendre(0, 0.3), 1.0);
        assert_eq!(legendre(1, 0.3), 0.3);
        let x: f64 = 0.4;
        let p6 = (231.0 * x.powi(6) - 315.0 * x.powi(4) + 105.0 * x.powi(2) - 5.0) / 16.0;
        assert!((legendre(6, x) - p6).abs() < 1e-15);
        assert!((legendre(6, 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn analytic_atom_json_shape() {
        let a = BasisFunction::Analytic(AnalyticBasis::Monomial { degree: 2 });
        let text = crate::json::to_string(&a).unwrap();
        assert_eq!(text, r#"{"kind":"analytic","tag":"monomial","parameters":{"degree":2}}"#);
        let back: BasisFunction = serde_json::from_str(&text).unwrap();
        assert_eq!(back, a);
    }
}
