use serde::{Deserialize, Serialize};

use crate::error::{Result, RinoError};
use crate::numerics::{cholesky, sample_standard_normal, DenseMatrix, RngState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrfConfig {
    pub length_scale: f64,
    /// Diagonal shift tried before the numerics escalation ladder.
    pub jitter: f64,
    /// Measure distance around a circle of this circumference instead of
    /// along the line.
    pub period: Option<f64>,
}

impl GrfConfig {
    pub fn new(length_scale: f64) -> Self {
        Self { length_scale, jitter: 1e-10, period: None }
    }

    pub fn periodic(length_scale: f64, period: f64) -> Self {
        Self { period: Some(period), ..Self::new(length_scale) }
    }

    fn validate(&self) -> Result<()> {
        if !(self.length_scale > 0.0) || !(self.jitter >= 0.0) || self.period.is_some_and(|p| !(p > 0.0)) {
            return Err(RinoError::InvalidArgument("length scale and period must be positive".into()));
        }
        Ok(())
    }

    /// Squared distance. The periodic form uses the chord
    /// `(P/π)·sin(π d / P)`, which keeps the kernel positive definite.
    fn distance2(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                let d = x - y;
                match self.period {
                    Some(p) => {
                        let c = p / std::f64::consts::PI * (std::f64::consts::PI * d / p).sin();
                        c * c
                    }
                    None => d * d,
                }
            })
            .sum()
    }

    /// `exp(−‖a − b‖² / (2 l²))`.
    pub fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        (-self.distance2(a, b) / (2.0 * self.length_scale * self.length_scale)).exp()
    }
}

/// A factored covariance over fixed points, reusable across draws.
#[derive(Debug, Clone)]
pub struct GrfSampler {
    /// Points in lexicographic order; `order[r]` is the caller's index of
    /// sorted row `r`.
    order: Vec<usize>,
    factor: DenseMatrix,
}

impl GrfSampler {
    pub fn new(points: &DenseMatrix, cfg: &GrfConfig) -> Result<Self> {
        cfg.validate()?;
        let n = points.rows();
        if n == 0 {
            return Err(RinoError::InvalidArgument("no points to sample at".into()));
        }
        // Factor in a canonical order so the draw does not depend on how
        // the caller listed the points.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            points.row(a).iter().zip(points.row(b)).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut k = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = cfg.kernel(points.row(order[i]), points.row(order[j]));
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        let (factor, _) = cholesky(&k, cfg.jitter)?;
        Ok(Self { order, factor })
    }

    pub fn sample(&self, rng: &RngState) -> Vec<f64> {
        let n = self.order.len();
        let z = sample_standard_normal(rng, n);
        let mut out = vec![0.0; n];
        for i in 0..n {
            let v: f64 = self.factor.row(i)[..=i].iter().zip(&z).map(|(l, z)| l * z).sum();
            out[self.order[i]] = v;
        }
        out
    }
}

/// One zero-mean draw with covariance `K + jitter·I` at the given points.
pub fn sample_grf(points: &DenseMatrix, cfg: &GrfConfig, rng: &RngState) -> Result<Vec<f64>> {
    Ok(GrfSampler::new(points, cfg)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_values() {
        let cfg = GrfConfig::new(0.2);
        assert_eq!(cfg.kernel(&[0.3], &[0.3]), 1.0);
        assert!((cfg.kernel(&[0.1], &[0.3]) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((cfg.kernel(&[0.0, 0.0], &[0.12, 0.16]) - (-0.5f64).exp()).abs() < 1e-15);
        let p = GrfConfig::periodic(0.2, 1.0);
        assert!((p.kernel(&[0.0], &[1.0]) - 1.0).abs() < 1e-15);
        assert!((p.kernel(&[0.05], &[0.95]) - p.kernel(&[0.05], &[0.15])).abs() < 1e-15);
    }

    #[test]
    fn empirical_covariance_matches_kernel() {
        let xs = [0.0, 0.1, 0.25, 0.5, 0.9];
        let pts = DenseMatrix::column_vector(&xs);
        let cfg = GrfConfig::new(0.2);
        let sampler = GrfSampler::new(&pts, &cfg).unwrap();
        let root = RngState::new(21);
        let draws: Vec<Vec<f64>> = (0..10_000).map(|i| sampler.sample(&root.derive(i))).collect();
        for a in 0..5 {
            for b in 0..5 {
                let c = draws.iter().map(|d| d[a] * d[b]).sum::<f64>() / draws.len() as f64;
                assert!((c - cfg.kernel(&[xs[a]], &[xs[b]])).abs() <= 0.05, "cov[{a},{b}] = {c}");
            }
        }
    }

    #[test]
    fn permuted_points_give_permuted_values() {
        let xs: Vec<f64> = (0..30).map(|i| i as f64 / 29.0).collect();
        let mut perm: Vec<usize> = (0..30).collect();
        perm.reverse();
        perm.swap(3, 17);
        let ys: Vec<f64> = perm.iter().map(|&i| xs[i]).collect();
        let cfg = GrfConfig::new(0.2);
        let rng = RngState::new(9);
        let a = sample_grf(&DenseMatrix::column_vector(&xs), &cfg, &rng).unwrap();
        let b = sample_grf(&DenseMatrix::column_vector(&ys), &cfg, &rng).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(b[k], a[i]);
        }
    }

    #[test]
    fn dense_smooth_grid_factors() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let v = sample_grf(&DenseMatrix::column_vector(&xs), &GrfConfig::new(0.2), &RngState::new(1)).unwrap();
        assert!(v.iter().all(|x| x.is_finite()));
    }
}
