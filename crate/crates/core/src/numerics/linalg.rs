//! Small dense factorizations: Cholesky solves with jitter escalation and a
//! one-sided Jacobi thin SVD.

use log::debug;

use super::matrix::{dot, DenseMatrix};
use crate::error::{Result, RinoError};

/// Relative jitter levels tried after the caller's jitter fails, as
/// multiples of the mean diagonal magnitude.
const JITTER_LADDER: [f64; 3] = [1e-12, 1e-11, 1e-10];

const JACOBI_MAX_SWEEPS: usize = 80;

/// Lower-triangular Cholesky factor of `a + shift·I`, or `None` when a
/// pivot is not strictly positive.
fn cholesky_shifted(a: &DenseMatrix, shift: f64) -> Option<DenseMatrix> {
    let n = a.rows();
    let max_diag = (0..n).map(|i| a[(i, i)].abs()).fold(0.0_f64, f64::max);
    let floor = f64::EPSILON * max_diag;
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)] + shift;
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > floor) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

/// Cholesky factor with the jitter escalation used by every SPD solve.
/// Returns the factor and the total diagonal shift that was applied.
pub fn cholesky(a: &DenseMatrix, jitter: f64) -> Result<(DenseMatrix, f64)> {
    if a.rows() != a.cols() {
        return Err(RinoError::ShapeMismatch(format!("{}x{} is not square", a.rows(), a.cols())));
    }
    if jitter < 0.0 {
        return Err(RinoError::InvalidArgument("jitter must be non-negative".into()));
    }
    if let Some(l) = cholesky_shifted(a, jitter) {
        return Ok((l, jitter));
    }
    let n = a.rows().max(1);
    let scale = {
        let s = (0..a.rows()).map(|i| a[(i, i)].abs()).sum::<f64>() / n as f64;
        if s > 0.0 && s.is_finite() {
            s
        } else {
            1.0
        }
    };
    let mut last = jitter;
    for rel in JITTER_LADDER {
        last = jitter + rel * scale;
        if let Some(l) = cholesky_shifted(a, last) {
            debug!("cholesky needed jitter {last:e}");
            return Ok((l, last));
        }
    }
    Err(RinoError::NotPositiveDefinite { jitter: last })
}

/// Solves `L Lᵀ x = b` in place for every column of `b`.
pub fn cholesky_solve_in_place(l: &DenseMatrix, b: &mut DenseMatrix) {
    let n = l.rows();
    for c in 0..b.cols() {
        for i in 0..n {
            let mut s = b[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * b[(k, c)];
            }
            b[(i, c)] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = b[(i, c)];
            for k in (i + 1)..n {
                s -= l[(k, i)] * b[(k, c)];
            }
            b[(i, c)] = s / l[(i, i)];
        }
    }
}

/// Solves `(A + jitter·I) X = B` for symmetric positive definite `A`.
pub fn solve_spd(a: &DenseMatrix, b: &DenseMatrix, jitter: f64) -> Result<DenseMatrix> {
    if b.rows() != a.rows() {
        return Err(RinoError::ShapeMismatch(format!(
            "right-hand side has {} rows, system has {}",
            b.rows(),
            a.rows()
        )));
    }
    let (l, _) = cholesky(a, jitter)?;
    let mut x = b.clone();
    cholesky_solve_in_place(&l, &mut x);
    Ok(x)
}

pub fn solve_spd_vec(a: &DenseMatrix, b: &[f64], jitter: f64) -> Result<Vec<f64>> {
    Ok(solve_spd(a, &DenseMatrix::column_vector(b), jitter)?.into_data())
}

/// Minimizer of `‖Aᵀx − b‖² + λ‖x‖²` for `A` given as `q × m` (one row
/// per unknown), by Householder QR of the stacked matrix `[Aᵀ; √λ I]`.
///
/// Returns `None` when the triangular factor is numerically singular.
pub fn ridge_lstsq(a: &DenseMatrix, b: &[f64], lambda: f64) -> Option<Vec<f64>> {
    let (q, m) = a.shape();
    let n = m + q;
    let root = lambda.sqrt();
    // Columns of the stacked matrix, stored contiguously.
    let mut cols: Vec<Vec<f64>> = (0..q)
        .map(|l| {
            let mut c = Vec::with_capacity(n);
            c.extend_from_slice(a.row(l));
            c.extend((0..q).map(|k| if k == l { root } else { 0.0 }));
            c
        })
        .collect();
    let mut rhs = b.to_vec();
    rhs.resize(n, 0.0);
    let mut diag = vec![0.0; q];
    for k in 0..q {
        let norm = cols[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return None;
        }
        let alpha = if cols[k][k] > 0.0 { -norm } else { norm };
        let mut v = cols[k][k..].to_vec();
        v[0] -= alpha;
        let vv = dot(&v, &v);
        diag[k] = alpha;
        if vv > 0.0 {
            for c in cols.iter_mut().skip(k + 1).chain(std::iter::once(&mut rhs)) {
                let f = 2.0 * dot(&v, &c[k..]) / vv;
                for (ci, vi) in c[k..].iter_mut().zip(&v) {
                    *ci -= f * vi;
                }
            }
        }
    }
    let largest = diag.iter().fold(0.0_f64, |acc, d| acc.max(d.abs()));
    if diag.iter().any(|d| d.abs() <= largest * f64::EPSILON * n as f64) {
        return None;
    }
    let mut x = vec![0.0; q];
    for i in (0..q).rev() {
        let mut s = rhs[i];
        for j in (i + 1)..q {
            s -= cols[j][i] * x[j];
        }
        x[i] = s / diag[i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Truncated singular value decomposition `A ≈ U diag(s) Vᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThinSvd {
    /// rows(A) × rank, orthonormal columns.
    pub u: DenseMatrix,
    /// Non-increasing, non-negative.
    pub singular_values: Vec<f64>,
    /// cols(A) × rank, orthonormal columns.
    pub v: DenseMatrix,
}

impl ThinSvd {
    pub fn reconstruct(&self) -> DenseMatrix {
        let (m, r) = self.u.shape();
        let n = self.v.rows();
        let mut out = DenseMatrix::zeros(m, n);
        for i in 0..m {
            for k in 0..r {
                let a = self.u[(i, k)] * self.singular_values[k];
                if a == 0.0 {
                    continue;
                }
                let row = out.row_mut(i);
                for (j, o) in row.iter_mut().enumerate() {
                    *o += a * self.v[(j, k)];
                }
            }
        }
        out
    }
}

/// Thin SVD truncated to `rank` via one-sided Jacobi rotations on the
/// smaller dimension.
pub fn svd_thin(a: &DenseMatrix, rank: usize) -> Result<ThinSvd> {
    let (m, n) = a.shape();
    if rank > m.min(n) {
        return Err(RinoError::InvalidArgument(format!(
            "rank {rank} exceeds min({m}, {n})"
        )));
    }
    if m < n {
        let t = svd_thin(&a.transpose(), rank)?;
        return Ok(ThinSvd { u: t.v, singular_values: t.singular_values, v: t.u });
    }
    // m >= n: orthogonalize the n columns of A.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let tol = 1e-15;
    let mut converged = false;
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut cols, p, q, c, s);
                rotate_pair(&mut vcols, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(RinoError::ConvergenceFailure { iterations: JACOBI_MAX_SWEEPS });
    }
    let mut order: Vec<(usize, f64)> = cols.iter().map(|c| dot(c, c).sqrt()).enumerate().collect();
    order.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    let sigma_max = order.first().map_or(0.0, |x| x.1);
    let negligible = sigma_max * (m.max(n) as f64) * f64::EPSILON;

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(rank);
    let mut v_cols: Vec<Vec<f64>> = Vec::with_capacity(rank);
    let mut singular_values = Vec::with_capacity(rank);
    for &(j, s) in order.iter().take(rank) {
        v_cols.push(vcols[j].clone());
        if s > negligible && s > 0.0 {
            singular_values.push(s);
            u_cols.push(cols[j].iter().map(|x| x / s).collect());
        } else {
            singular_values.push(if s > 0.0 { s } else { 0.0 });
            u_cols.push(Vec::new());
        }
    }
    // Null directions get an orthonormal completion.
    for k in 0..u_cols.len() {
        if u_cols[k].is_empty() {
            u_cols[k] = complete_orthonormal(&u_cols, m);
        }
    }
    Ok(ThinSvd {
        u: columns_to_matrix(&u_cols, m),
        singular_values,
        v: columns_to_matrix(&v_cols, n),
    })
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let cp = &mut lo[p];
    let cq = &mut hi[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let xq = *y;
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// A unit vector orthogonal to every non-empty column in `existing`.
fn complete_orthonormal(existing: &[Vec<f64>], m: usize) -> Vec<f64> {
    for e in 0..m {
        let mut v = vec![0.0; m];
        v[e] = 1.0;
        for _ in 0..2 {
            for c in existing.iter().filter(|c| !c.is_empty()) {
                let proj = dot(&v, c);
                for (vi, ci) in v.iter_mut().zip(c) {
                    *vi -= proj * ci;
                }
            }
        }
        let nrm = dot(&v, &v).sqrt();
        if nrm > 0.5 {
            return v.into_iter().map(|x| x / nrm).collect();
        }
    }
    vec![0.0; m]
}

fn columns_to_matrix(cols: &[Vec<f64>], rows: usize) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(rows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        for (i, x) in c.iter().enumerate() {
            out[(i, j)] = *x;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::{sample_standard_normal, RngState};
    use nalgebra::DMatrix;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        DenseMatrix::new(rows, cols, sample_standard_normal(&RngState::new(seed), rows * cols)).unwrap()
    }

    fn to_na(a: &DenseMatrix) -> DMatrix<f64> {
        DMatrix::from_row_slice(a.rows(), a.cols(), a.data())
    }

    #[test]
    fn identity_and_diagonal_solves() {
        let x = solve_spd_vec(&DenseMatrix::identity(2), &[3.0, 4.0], 0.0).unwrap();
        assert_eq!(x, vec![3.0, 4.0]);
        let a = DenseMatrix::from_rows(&[vec![4.0, 0.0], vec![0.0, 9.0]]).unwrap();
        let x = solve_spd_vec(&a, &[8.0, 27.0], 0.0).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-15 && (x[1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn random_spd_matches_inverse_oracle() {
        let b = random_matrix(8, 8, 11);
        let mut a = b.matmul(&b.transpose()).unwrap();
        for i in 0..8 {
            a[(i, i)] += 0.5;
        }
        let rhs = sample_standard_normal(&RngState::new(12), 8);
        let x = solve_spd_vec(&a, &rhs, 0.0).unwrap();
        let inv = to_na(&a).try_inverse().unwrap();
        let oracle = inv * nalgebra::DVector::from_vec(rhs.clone());
        let diff: f64 = x.iter().zip(oracle.iter()).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        assert!(diff / oracle.norm() <= 1e-10, "rel diff {}", diff / oracle.norm());
        let back = a.matvec(&x).unwrap();
        let res: f64 = back.iter().zip(&rhs).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        assert!(res <= 1e-9 * rhs.iter().map(|v| v * v).sum::<f64>().sqrt());
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(solve_spd_vec(&a, &[1.0, 1.0], 0.0), Err(RinoError::NotPositiveDefinite { .. })));
    }

    #[test]
    fn singular_psd_matrix_is_rescued_by_jitter() {
        let a = DenseMatrix::from_rows(&[vec![3.0, 3.0], vec![3.0, 3.0]]).unwrap();
        let x = solve_spd_vec(&a, &[3.0, 3.0], 0.0).unwrap();
        assert!(x.iter().all(|v| v.is_finite()));
    }

    fn gram_deviation(q: &DenseMatrix) -> f64 {
        let g = q.transpose().matmul(q).unwrap();
        let mut dev: f64 = 0.0;
        for i in 0..g.rows() {
            for j in 0..g.cols() {
                let target = if i == j { 1.0 } else { 0.0 };
                dev = dev.max((g[(i, j)] - target).abs());
            }
        }
        dev
    }

    #[test]
    fn svd_of_rank_one_outer_product() {
        let a = DenseMatrix::from_rows(&[vec![3.0, 4.0], vec![6.0, 8.0]]).unwrap();
        let svd = svd_thin(&a, 2).unwrap();
        assert!(svd.singular_values[1].abs() < 1e-12);
        assert!(gram_deviation(&svd.u) <= 1e-10);
        let r1 = svd_thin(&a, 1).unwrap().reconstruct();
        assert!(r1.sub(&a).unwrap().frobenius_norm() <= 1e-12);
    }

    #[test]
    fn svd_of_identity() {
        let svd = svd_thin(&DenseMatrix::identity(3), 3).unwrap();
        for s in svd.singular_values {
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn eckart_young_against_full_svd_oracle() {
        let a = random_matrix(10, 6, 3);
        let svd = svd_thin(&a, 4).unwrap();
        let oracle = to_na(&a).svd(false, false).singular_values;
        let mut sigma: Vec<f64> = oracle.iter().copied().collect();
        sigma.sort_by(|x, y| y.total_cmp(x));
        let discarded: f64 = sigma[4..].iter().map(|s| s * s).sum();
        let err = a.sub(&svd.reconstruct()).unwrap().frobenius_norm().powi(2);
        assert!((err - discarded).abs() <= 1e-10, "{err} vs {discarded}");
        for (s, o) in svd.singular_values.iter().zip(&sigma) {
            assert!((s - o).abs() <= 1e-12);
        }
        assert!(gram_deviation(&svd.u) <= 1e-10);
        assert!(gram_deviation(&svd.v) <= 1e-10);
        let wide = svd_thin(&a.transpose(), 4).unwrap();
        assert!(gram_deviation(&wide.u) <= 1e-10 && gram_deviation(&wide.v) <= 1e-10);
    }

    #[test]
    fn reconstruction_error_is_monotone_in_rank() {
        let a = random_matrix(9, 7, 5);
        let mut prev = f64::INFINITY;
        for r in 0..=7 {
            let err = a.sub(&svd_thin(&a, r).unwrap().reconstruct()).unwrap().frobenius_norm();
            assert!(err <= prev + 1e-12);
            prev = err;
        }
        assert!(prev < 1e-12);
    }

    #[test]
    fn ridge_lstsq_matches_svd_oracle_on_ill_conditioned_rows() {
        // Monomials on [0, 1]: the normal equations lose most digits here.
        let m = 40;
        let xs: Vec<f64> = (0..m).map(|j| j as f64 / (m - 1) as f64).collect();
        let rows: Vec<Vec<f64>> = (0..9).map(|p| xs.iter().map(|x| x.powi(p)).collect()).collect();
        let a = DenseMatrix::from_rows(&rows).unwrap();
        let b: Vec<f64> = xs.iter().map(|x| (4.0 * x).sin()).collect();
        let x = ridge_lstsq(&a, &b, 0.0).unwrap();
        let oracle = to_na(&a.transpose()).svd(true, true).solve(&nalgebra::DVector::from_vec(b.clone()), 1e-14).unwrap();
        let fit = |c: &[f64]| -> f64 {
            (0..m).map(|j| (b[j] - (0..9).map(|p| rows[p][j] * c[p]).sum::<f64>()).powi(2)).sum()
        };
        let (ours, best) = (fit(&x), fit(oracle.as_slice()));
        assert!(ours <= best * (1.0 + 1e-6), "{ours:e} vs {best:e}");
    }

    #[test]
    fn ridge_lstsq_agrees_with_normal_equations_when_well_posed() {
        let a = random_matrix(4, 15, 21);
        let b: Vec<f64> = (0..15).map(|j| (j as f64).cos()).collect();
        for lambda in [0.0, 1e-3, 2.0] {
            let mut k = a.gram_rows();
            for i in 0..4 {
                k[(i, i)] += lambda;
            }
            let normal = solve_spd_vec(&k, &a.matvec(&b).unwrap(), 0.0).unwrap();
            let qr = ridge_lstsq(&a, &b, lambda).unwrap();
            for (p, q) in normal.iter().zip(&qr) {
                assert!((p - q).abs() <= 1e-10 * (1.0 + p.abs()));
            }
        }
    }

    #[test]
    fn ridge_lstsq_reports_rank_deficiency() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0]]).unwrap();
        assert!(ridge_lstsq(&a, &[1.0, 0.0, 1.0], 0.0).is_none());
        assert!(ridge_lstsq(&a, &[1.0, 0.0, 1.0], 1e-6).is_some());
    }

    #[test]
    fn svd_is_bitwise_deterministic() {
        let a = random_matrix(12, 5, 8);
        assert_eq!(svd_thin(&a, 3).unwrap(), svd_thin(&a, 3).unwrap());
    }
}
