//! Nonlinear Darcy flow `∇·(−κ(s)∇s) = u`, `κ(s) = 0.2 + s²`, with
//! homogeneous Dirichlet data on the unit interval or square.
//!
//! Conservative finite differences with face permeabilities evaluated at
//! the mean of the two neighbouring nodes, solved by Newton's method.

use super::SolverOutput;
use crate::error::{Result, RinoError};
use crate::numerics::DenseMatrix;

const MAX_NEWTON: usize = 50;

fn kappa(s: f64) -> (f64, f64) {
    (0.2 + s * s, 2.0 * s)
}

/// Flux `κ(m)(b − a)` through the face between nodes `a` and `b`, with
/// its derivatives in `a` and `b`.
#[inline]
fn face(a: f64, b: f64) -> (f64, f64, f64) {
    let (k, dk) = kappa(0.5 * (a + b));
    let d = b - a;
    (k * d, 0.5 * dk * d - k, 0.5 * dk * d + k)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Solves `-(flux_{k+½} - flux_{k-½})/h² = u_k` on `n` uniform nodes of
/// `[0, 1]` (boundary nodes included, held at zero).
pub fn solve_darcy_1d(u: &[f64]) -> Result<SolverOutput> {
    let n = u.len();
    if n < 3 {
        return Err(RinoError::InvalidArgument("1D Darcy needs at least 3 nodes".into()));
    }
    let h = 1.0 / (n - 1) as f64;
    let ih2 = 1.0 / (h * h);
    let m = n - 2;
    let tol = 1e-10 * inf_norm(u).max(1.0);
    let mut s = vec![0.0; n];
    let mut residuals = Vec::new();
    let (mut lower, mut diag, mut upper, mut rhs) = (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    for iter in 0..=MAX_NEWTON {
        for k in 1..=m {
            let (fp, dpa, dpb) = face(s[k], s[k + 1]);
            let (fm, dma, dmb) = face(s[k - 1], s[k]);
            rhs[k - 1] = -(fp - fm) * ih2 - u[k];
            diag[k - 1] = -(dpa - dmb) * ih2;
            upper[k - 1] = -dpb * ih2;
            lower[k - 1] = dma * ih2;
        }
        let r = inf_norm(&rhs);
        residuals.push(r);
        if r <= tol {
            return Ok(SolverOutput { points: DenseMatrix::column_vector(&(0..n).map(|i| i as f64 * h).collect::<Vec<_>>()), values: s, iterations: iter, residuals });
        }
        if iter == MAX_NEWTON || !r.is_finite() {
            break;
        }
        let delta = thomas(&lower, &diag, &upper, &rhs)?;
        for k in 0..m {
            s[k + 1] -= delta[k];
        }
    }
    Err(RinoError::NewtonDiverged { residual: *residuals.last().unwrap_or(&f64::NAN), iterations: residuals.len() - 1 })
}

/// Tridiagonal solve; `lower[0]` and `upper[m-1]` are ignored.
fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let m = diag.len();
    let mut c = vec![0.0; m];
    let mut d = vec![0.0; m];
    let mut piv = diag[0];
    for i in 0..m {
        if i > 0 {
            piv = diag[i] - lower[i] * c[i - 1];
        }
        if piv == 0.0 || !piv.is_finite() {
            return Err(RinoError::NewtonDiverged { residual: f64::NAN, iterations: 0 });
        }
        c[i] = upper[i] / piv;
        d[i] = (rhs[i] - if i > 0 { lower[i] * d[i - 1] } else { 0.0 }) / piv;
    }
    for i in (0..m.saturating_sub(1)).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

/// Solves the 2D problem on an `n × n` node grid of the unit square.
///
/// `u` and the returned values are indexed `i·n + j` for the node at
/// `(x_i, y_j) = (i h, j h)`.
pub fn solve_darcy_2d(u: &[f64], n: usize) -> Result<SolverOutput> {
    if n < 5 || u.len() != n * n {
        return Err(RinoError::InvalidArgument(format!("2D Darcy needs an n×n source with n ≥ 5, got {} values for n = {n}", u.len())));
    }
    let h = 1.0 / (n - 1) as f64;
    let ih2 = 1.0 / (h * h);
    let m = n - 2;
    let unknowns = m * m;
    let idx = |i: usize, j: usize| i * n + j;
    let tol = 1e-9 * inf_norm(u).max(1.0);
    let mut s = vec![0.0; n * n];
    let mut residuals = Vec::new();
    let mut jac = Banded::new(unknowns, m);
    let mut rhs = vec![0.0; unknowns];
    for iter in 0..=MAX_NEWTON {
        jac.clear();
        for i in 1..=m {
            for j in 1..=m {
                let row = (i - 1) * m + (j - 1);
                let c = s[idx(i, j)];
                let (fe, dec, den) = face(c, s[idx(i + 1, j)]);
                let (fw, dww, dwc) = face(s[idx(i - 1, j)], c);
                let (fn_, dnc, dnn) = face(c, s[idx(i, j + 1)]);
                let (fs, dss, dsc) = face(s[idx(i, j - 1)], c);
                rhs[row] = -(fe - fw + fn_ - fs) * ih2 - u[idx(i, j)];
                jac.set(row, row, -(dec - dwc + dnc - dsc) * ih2);
                if i < m {
                    jac.set(row, row + m, -den * ih2);
                }
                if i > 1 {
                    jac.set(row, row - m, dww * ih2);
                }
                if j < m {
                    jac.set(row, row + 1, -dnn * ih2);
                }
                if j > 1 {
                    jac.set(row, row - 1, dss * ih2);
                }
            }
        }
        let r = inf_norm(&rhs);
        residuals.push(r);
        if r <= tol {
            let mut pts = Vec::with_capacity(2 * n * n);
            for i in 0..n {
                for j in 0..n {
                    pts.push(i as f64 * h);
                    pts.push(j as f64 * h);
                }
            }
            return Ok(SolverOutput { points: DenseMatrix::new(n * n, 2, pts)?, values: s, iterations: iter, residuals });
        }
        if iter == MAX_NEWTON || !r.is_finite() {
            break;
        }
        let delta = jac.solve(&rhs)?;
        for i in 1..=m {
            for j in 1..=m {
                s[idx(i, j)] -= delta[(i - 1) * m + (j - 1)];
            }
        }
    }
    Err(RinoError::NewtonDiverged { residual: *residuals.last().unwrap_or(&f64::NAN), iterations: residuals.len() - 1 })
}

/// Square band matrix with equal lower and upper bandwidth, stored by
/// rows of width `2·bw + 1`.
struct Banded {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl Banded {
    fn new(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![0.0; n * (2 * bw + 1)] }
    }

    fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.at(i, j);
        self.data[k] = v;
    }

    /// Gaussian elimination without pivoting; the Newton Jacobians here
    /// are diagonally dominant near the solution.
    fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let (n, bw) = (self.n, self.bw);
        let mut a = self.data.clone();
        let mut b = rhs.to_vec();
        let w = 2 * bw + 1;
        for k in 0..n {
            let piv = a[k * w + bw];
            if piv == 0.0 || !piv.is_finite() {
                return Err(RinoError::NewtonDiverged { residual: f64::NAN, iterations: 0 });
            }
            let last = (k + bw).min(n - 1);
            for i in (k + 1)..=last {
                let f = a[i * w + (k + bw - i)] / piv;
                if f == 0.0 {
                    continue;
                }
                for j in k..=(k + bw).min(n - 1) {
                    a[i * w + (j + bw - i)] -= f * a[k * w + (j + bw - k)];
                }
                b[i] -= f * b[k];
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in (k + 1)..=(k + bw).min(n - 1) {
                s -= a[k * w + (j + bw - k)] * b[j];
            }
            b[k] = s / a[k * w + bw];
        }
        Ok(b)
    }
}
