//! Dictionaries of continuous basis functions, ridge projection of
//! point-cloud signals onto them, and reconstruction from coefficients.

mod atoms;
mod learn;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use atoms::{legendre, AnalyticBasis, BasisFunction};
pub use learn::{
    learn_dictionary_batch, learn_dictionary_samplewise, DictLearnConfig, DictTrace, EpochRecord, StopReason,
};

use crate::error::{Result, RinoError};
use crate::numerics::{ridge_lstsq, solve_spd_vec, DenseMatrix};

/// Points may stick out of the box by this much before evaluation refuses.
pub const DOMAIN_TOLERANCE: f64 = 1e-9;

/// Axis-aligned box `[lower, upper]` in `d` dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(RinoError::InvalidArgument("domain bounds must have equal, positive length".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(u > l)) {
            return Err(RinoError::InvalidArgument("domain upper bound must exceed lower bound".into()));
        }
        Ok(Self { lower, upper })
    }

    /// `[0, 1]^d`.
    pub fn unit(dim: usize) -> Self {
        Self { lower: vec![0.0; dim], upper: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (l, u))| *x >= l - DOMAIN_TOLERANCE && *x <= u + DOMAIN_TOLERANCE)
    }

    pub fn check_points(&self, points: &DenseMatrix) -> Result<()> {
        if points.cols() != self.dim() {
            return Err(RinoError::ShapeMismatch(format!(
                "points have {} coordinates, domain has {}",
                points.cols(),
                self.dim()
            )));
        }
        for p in points.row_iter() {
            if !self.contains(p) {
                return Err(RinoError::DomainViolation { point: p.to_vec() });
            }
        }
        Ok(())
    }

    /// Tensor grid with `n` equispaced nodes per axis, endpoints included.
    pub fn grid(&self, n: usize) -> DenseMatrix {
        let d = self.dim();
        let total = n.pow(d as u32);
        let mut data = Vec::with_capacity(total * d);
        for flat in 0..total {
            let mut rem = flat;
            let mut idx = vec![0; d];
            for k in (0..d).rev() {
                idx[k] = rem % n;
                rem /= n;
            }
            for k in 0..d {
                let t = if n > 1 { idx[k] as f64 / (n - 1) as f64 } else { 0.5 };
                data.push(self.lower[k] + t * (self.upper[k] - self.lower[k]));
            }
        }
        DenseMatrix::new(total, d, data).expect("sized")
    }

    /// Grid used to freeze the scale of a learned atom: 10⁴ nodes in 1D,
    /// 128 per axis otherwise.
    pub fn quadrature_grid(&self) -> DenseMatrix {
        match self.dim() {
            1 => self.grid(10_000),
            2 => self.grid(128),
            _ => self.grid(24),
        }
    }
}

/// One function realization sampled at an arbitrary set of points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloudSignal {
    pub id: usize,
    /// `M × d`.
    pub points: DenseMatrix,
    pub values: Vec<f64>,
}

impl PointCloudSignal {
    pub fn new(id: usize, points: DenseMatrix, values: Vec<f64>) -> Result<Self> {
        if points.rows() != values.len() {
            return Err(RinoError::ShapeMismatch(format!(
                "{} points but {} values",
                points.rows(),
                values.len()
            )));
        }
        if values.is_empty() {
            return Err(RinoError::InvalidArgument("a signal needs at least one sample".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RinoError::InvalidArgument("signal values must be finite".into()));
        }
        Ok(Self { id, points, values })
    }

    /// Convenience constructor for 1-D signals.
    pub fn from_1d(id: usize, xs: &[f64], values: Vec<f64>) -> Result<Self> {
        Self::new(id, DenseMatrix::column_vector(xs), values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Coefficients of a signal's projection onto a dictionary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub coeffs: Vec<f64>,
    pub dictionary_fingerprint: String,
    pub lambda: f64,
}

/// An ordered set of basis functions over a common domain.
///
/// An empty dictionary is allowed: it is the starting point of sample-wise
/// learning and projects every signal to a zero-length embedding.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dictionary {
    pub domain: DomainBox,
    atoms: Vec<BasisFunction>,
    fingerprint: String,
}

impl Dictionary {
    pub fn new(domain: DomainBox, atoms: Vec<BasisFunction>) -> Result<Self> {
        for a in &atoms {
            a.validate(&domain)?;
        }
        let fingerprint = fingerprint_atoms(&atoms)?;
        Ok(Self { domain, atoms, fingerprint })
    }

    /// The one-atom dictionary `{1}`.
    pub fn trivial(domain: DomainBox) -> Self {
        Self::new(domain, vec![BasisFunction::ConstantOne]).expect("constant atom is valid")
    }

    pub fn atoms(&self) -> &[BasisFunction] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn push(&mut self, atom: BasisFunction) -> Result<()> {
        atom.validate(&self.domain)?;
        self.atoms.push(atom);
        self.fingerprint = fingerprint_atoms(&self.atoms)?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        crate::json::to_string(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: DictionaryRecord = serde_json::from_str(text)?;
        let dict = Dictionary::new(raw.domain, raw.atoms)?;
        if dict.fingerprint != raw.fingerprint {
            return Err(RinoError::FingerprintMismatch { expected: raw.fingerprint, found: dict.fingerprint });
        }
        Ok(dict)
    }
}

#[derive(Deserialize)]
struct DictionaryRecord {
    domain: DomainBox,
    atoms: Vec<BasisFunction>,
    fingerprint: String,
}

impl<'de> Deserialize<'de> for Dictionary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = DictionaryRecord::deserialize(d)?;
        let dict = Dictionary::new(raw.domain, raw.atoms).map_err(serde::de::Error::custom)?;
        if dict.fingerprint != raw.fingerprint {
            return Err(serde::de::Error::custom("dictionary fingerprint does not match its atoms"));
        }
        Ok(dict)
    }
}

/// SHA-256 of the canonical (17-digit) JSON encoding of the atom list.
pub fn fingerprint_atoms(atoms: &[BasisFunction]) -> Result<String> {
    let canonical = crate::json::to_string(atoms)?;
    Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
}

/// `|Ψ| × M` matrix whose row `l` holds atom `l` at every point.
pub fn evaluate_dictionary(dict: &Dictionary, points: &DenseMatrix) -> Result<DenseMatrix> {
    dict.domain.check_points(points)?;
    let m = points.rows();
    let mut out = DenseMatrix::zeros(dict.len(), m);
    for (l, atom) in dict.atoms.iter().enumerate() {
        let vals = atom.evaluate(&dict.domain, points)?;
        out.row_mut(l).copy_from_slice(&vals);
    }
    Ok(out)
}

/// Ridge coefficients `(ΨΨᵀ + λI)⁻¹ ΨU` for atom values `psi` (`|Ψ| × M`).
///
/// Solved by QR; a numerically rank-deficient system falls back to the
/// jittered normal equations.
pub fn ridge_coefficients(psi: &DenseMatrix, values: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if psi.cols() != values.len() {
        return Err(RinoError::ShapeMismatch(format!(
            "{} atom samples against {} values",
            psi.cols(),
            values.len()
        )));
    }
    if psi.rows() == 0 {
        return Ok(Vec::new());
    }
    if let Some(x) = ridge_lstsq(psi, values, lambda) {
        return Ok(x);
    }
    let mut kernel = psi.gram_rows();
    for i in 0..kernel.rows() {
        kernel[(i, i)] += lambda;
    }
    let rhs = psi.matvec(values)?;
    solve_spd_vec(&kernel, &rhs, 0.0)
}

/// `u − Ψᵀα` on the sample points.
pub fn residual(psi: &DenseMatrix, values: &[f64], coeffs: &[f64]) -> Vec<f64> {
    let mut r = values.to_vec();
    for (row, &a) in psi.row_iter().zip(coeffs) {
        for (rj, p) in r.iter_mut().zip(row) {
            *rj -= a * p;
        }
    }
    r
}

pub fn project(dict: &Dictionary, signal: &PointCloudSignal, lambda: f64) -> Result<Embedding> {
    if lambda < 0.0 {
        return Err(RinoError::InvalidArgument("lambda must be non-negative".into()));
    }
    let psi = evaluate_dictionary(dict, &signal.points)?;
    let coeffs = ridge_coefficients(&psi, &signal.values, lambda)?;
    Ok(Embedding { coeffs, dictionary_fingerprint: dict.fingerprint.clone(), lambda })
}

/// `Σ_l ψ_l(x) γ_l` at every point.
pub fn reconstruct(dict: &Dictionary, emb: &Embedding, points: &DenseMatrix) -> Result<Vec<f64>> {
    if emb.dictionary_fingerprint != dict.fingerprint {
        return Err(RinoError::FingerprintMismatch {
            expected: dict.fingerprint.clone(),
            found: emb.dictionary_fingerprint.clone(),
        });
    }
    if emb.coeffs.len() != dict.len() {
        return Err(RinoError::ShapeMismatch("embedding length differs from dictionary size".into()));
    }
    let psi = evaluate_dictionary(dict, points)?;
    let mut out = vec![0.0; points.rows()];
    for (row, &c) in psi.row_iter().zip(&emb.coeffs) {
        for (o, p) in out.iter_mut().zip(row) {
            *o += c * p;
        }
    }
    Ok(out)
}

/// Normalized inner products `⟨ψ_i,ψ_j⟩ / (‖ψ_i‖‖ψ_j‖)` by equal-weight
/// quadrature over the given points.
pub fn gram_report(dict: &Dictionary, quadrature_points: &DenseMatrix) -> Result<DenseMatrix> {
    let psi = evaluate_dictionary(dict, quadrature_points)?;
    let m = quadrature_points.rows().max(1) as f64;
    let mut g = psi.gram_rows();
    g.data_mut().iter_mut().for_each(|v| *v /= m);
    let norms: Vec<f64> = (0..g.rows()).map(|i| g[(i, i)]).collect();
    if let Some(&ms) = norms.iter().find(|&&n| !(n >= crate::inr::DEGENERATE_MEAN_SQUARE)) {
        return Err(RinoError::DegenerateBasis { mean_square: ms });
    }
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            g[(i, j)] = if i == j { 1.0 } else { g[(i, j)] / (norms[i] * norms[j]).sqrt() };
        }
    }
    Ok(g)
}
