//! Synthetic ground truth: Gaussian random fields, PDE solvers, random
//! subsampling of realizations and the three-basis test family.

mod burgers;
mod darcy;
mod grf;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use burgers::{solve_burgers, BurgersConfig};
pub use darcy::{solve_darcy_1d, solve_darcy_2d};
pub use grf::{sample_grf, GrfConfig, GrfSampler};

use crate::dictionary::{legendre, PointCloudSignal};
use crate::error::{Result, RinoError};
use crate::numerics::{sample_standard_normal, DenseMatrix, RngState};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOutput {
    pub points: DenseMatrix,
    pub values: Vec<f64>,
    /// Newton iterations, or time steps for the evolution solver.
    pub iterations: usize,
    /// Residual max-norm after each Newton iterate.
    pub residuals: Vec<f64>,
}

/// Cumulative trapezoid rule with `s(x₀) = 0`.
pub fn solve_antiderivative(x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    if x.len() < 2 || x.len() != u.len() {
        return Err(RinoError::InvalidArgument("antiderivative needs at least two matching samples".into()));
    }
    if x.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(RinoError::UnsortedGrid);
    }
    let mut s = Vec::with_capacity(x.len());
    s.push(0.0);
    for k in 1..x.len() {
        s.push(s[k - 1] + 0.5 * (x[k] - x[k - 1]) * (u[k] + u[k - 1]));
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsampleConfig {
    pub m_min: usize,
    pub m_max: usize,
}

/// Keeps a uniformly drawn number of points in `[m_min, m_max]`, chosen
/// without replacement, in their original order.
pub fn subsample_signal(signal: &PointCloudSignal, cfg: SubsampleConfig, rng: &RngState) -> Result<PointCloudSignal> {
    let m = signal.len();
    if cfg.m_min == 0 || cfg.m_min > cfg.m_max || cfg.m_max > m {
        return Err(RinoError::RangeError(format!("[{}, {}] is not a valid range for {m} points", cfg.m_min, cfg.m_max)));
    }
    let mut g = rng.generator();
    let count = g.random_range(cfg.m_min..=cfg.m_max);
    let mut keep = sample_indices(&mut g, m, count).into_vec();
    keep.sort_unstable();
    let dim = signal.points.cols();
    let mut coords = Vec::with_capacity(count * dim);
    for &i in &keep {
        coords.extend_from_slice(signal.points.row(i));
    }
    PointCloudSignal::new(signal.id, DenseMatrix::new(count, dim, coords)?, keep.iter().map(|&i| signal.values[i]).collect())
}

/// The three generating functions at `x ∈ [0, 1]`, each evaluated on
/// `ξ = 2x − 1`: `P₆(ξ)`, `cos(3.3πξ)` and `2|ξ| − 1`.
pub fn three_basis_functions(x: f64) -> [f64; 3] {
    let xi = 2.0 * x - 1.0;
    [legendre(6, xi), (3.3 * std::f64::consts::PI * xi).cos(), 2.0 * xi.abs() - 1.0]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThreeBasisData {
    /// `M` uniform sensors on `[0, 1]`, endpoints included.
    pub x: Vec<f64>,
    /// `N × M`.
    pub data: DenseMatrix,
    /// `N × 3` standard normal coefficients.
    pub coeffs: DenseMatrix,
}

pub fn make_three_basis_dataset(n: usize, m: usize, rng: &RngState) -> Result<ThreeBasisData> {
    if n == 0 || m == 0 {
        return Err(RinoError::InvalidArgument("need at least one realization and one sensor".into()));
    }
    let x: Vec<f64> = if m == 1 { vec![0.5] } else { (0..m).map(|j| j as f64 / (m - 1) as f64).collect() };
    let basis: Vec<[f64; 3]> = x.iter().map(|&v| three_basis_functions(v)).collect();
    let coeffs = DenseMatrix::new(n, 3, sample_standard_normal(rng, 3 * n))?;
    let mut data = DenseMatrix::zeros(n, m);
    for i in 0..n {
        let a = coeffs.row(i).to_vec();
        for (d, b) in data.row_mut(i).iter_mut().zip(&basis) {
            *d = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        }
    }
    Ok(ThreeBasisData { x, data, coeffs })
}

/// Row-wise random mask; `true` marks a hidden entry. Every row hides
/// exactly `round(M·R/100)` entries.
pub fn mask_matrix(n: usize, m: usize, r_percent: f64, rng: &RngState) -> Result<Vec<Vec<bool>>> {
    if !(0.0..100.0).contains(&r_percent) {
        return Err(RinoError::RangeError(format!("masking {r_percent}% is outside [0, 100)")));
    }
    let hidden = (m as f64 * r_percent / 100.0).round() as usize;
    Ok((0..n)
        .map(|i| {
            let mut row = vec![false; m];
            for j in sample_indices(&mut rng.derive(i as u64).generator(), m, hidden) {
                row[j] = true;
            }
            row
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::svd_thin;
    use std::f64::consts::PI;

    #[test]
    fn antiderivative_exact_for_linear_integrands() {
        let x: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
        let s = solve_antiderivative(&x, &vec![1.0; 11]).unwrap();
        for (a, b) in s.iter().zip(&x) {
            assert!((a - b).abs() < 1e-15);
        }
        let u: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let s = solve_antiderivative(&x, &u).unwrap();
        for (a, b) in s.iter().zip(&x) {
            assert!((a - b * b).abs() < 1e-15);
        }
    }

    #[test]
    fn antiderivative_of_cosine_is_second_order() {
        let x: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let u: Vec<f64> = x.iter().map(|v| (PI * v).cos()).collect();
        let s = solve_antiderivative(&x, &u).unwrap();
        let err = s.iter().zip(&x).map(|(a, v)| (a - (PI * v).sin() / PI).abs()).fold(0.0, f64::max);
        assert!(err <= 5e-4);
    }

    #[test]
    fn antiderivative_rejects_unsorted_grid() {
        assert_eq!(solve_antiderivative(&[0.0, 0.5, 0.4], &[1.0; 3]), Err(RinoError::UnsortedGrid));
    }

    fn signal(m: usize) -> PointCloudSignal {
        let xs: Vec<f64> = (0..m).map(|i| i as f64 / (m - 1) as f64).collect();
        PointCloudSignal::from_1d(0, &xs, xs.iter().map(|x| x * x).collect()).unwrap()
    }

    #[test]
    fn full_range_subsample_is_identity() {
        let s = signal(40);
        let t = subsample_signal(&s, SubsampleConfig { m_min: 40, m_max: 40 }, &RngState::new(3)).unwrap();
        assert_eq!(t, s);
        assert!(subsample_signal(&s, SubsampleConfig { m_min: 10, m_max: 41 }, &RngState::new(3)).is_err());
        assert!(subsample_signal(&s, SubsampleConfig { m_min: 0, m_max: 5 }, &RngState::new(3)).is_err());
    }

    #[test]
    fn subsample_sizes_are_uniform_and_points_unique() {
        let s = signal(100);
        let mut counts = vec![0usize; 51];
        for k in 0..1000 {
            let t = subsample_signal(&s, SubsampleConfig { m_min: 10, m_max: 60 }, &RngState::new(k)).unwrap();
            assert!((10..=60).contains(&t.len()));
            let xs = t.points.column(0);
            assert!(xs.windows(2).all(|w| w[1] > w[0]));
            counts[t.len() - 10] += 1;
        }
        let expect = 1000.0 / 51.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
        // 99th percentile of χ² with 50 degrees of freedom.
        assert!(chi2 < 76.15, "chi2 = {chi2}");
    }

    #[test]
    fn three_basis_values_at_centre() {
        let [p6, c, a] = three_basis_functions(0.5);
        assert!((p6 - (-5.0 / 16.0)).abs() < 1e-15);
        assert_eq!(c, 1.0);
        assert_eq!(a, -1.0);
    }

    #[test]
    fn three_basis_dataset_has_rank_three() {
        let d = make_three_basis_dataset(200, 100, &RngState::new(1)).unwrap();
        let svd = svd_thin(&d.data, 5).unwrap();
        let s = &svd.singular_values;
        assert!(s[2] / s[0] > 1e-3);
        assert!(s[3] / s[0] <= 1e-10);
        assert_eq!(d, make_three_basis_dataset(200, 100, &RngState::new(1)).unwrap());
    }

    #[test]
    fn zero_coefficients_give_zero_row() {
        let d = make_three_basis_dataset(3, 10, &RngState::new(1)).unwrap();
        let basis: Vec<[f64; 3]> = d.x.iter().map(|&x| three_basis_functions(x)).collect();
        let row: Vec<f64> = basis.iter().map(|b| 0.0 * b[0] + 0.0 * b[1] + 0.0 * b[2]).collect();
        assert!(row.iter().all(|&v| v == 0.0));
        for (j, b) in basis.iter().enumerate() {
            let a = d.coeffs.row(1);
            assert!((d.data[(1, j)] - (a[0] * b[0] + a[1] * b[1] + a[2] * b[2])).abs() < 1e-15);
        }
    }

    #[test]
    fn mask_counts_and_determinism() {
        let m0 = mask_matrix(5, 100, 0.0, &RngState::new(2)).unwrap();
        assert!(m0.iter().flatten().all(|&b| !b));
        let m90 = mask_matrix(200, 100, 90.0, &RngState::new(2)).unwrap();
        assert!(m90.iter().all(|r| r.iter().filter(|&&b| b).count() == 90));
        assert_eq!(m90, mask_matrix(200, 100, 90.0, &RngState::new(2)).unwrap());
        assert!(mask_matrix(2, 10, 100.0, &RngState::new(2)).is_err());
    }
}
