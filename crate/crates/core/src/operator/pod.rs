use crate::error::{Result, RinoError};
use crate::numerics::{dot, sample_standard_normal, svd_thin, DenseMatrix, RngState};

/// Above this many snapshots and grid points the modes come from a
/// randomized subspace iteration instead of a full Jacobi SVD.
const DIRECT_LIMIT: usize = 400;
const OVERSAMPLE: usize = 12;
const POWER_ITERATIONS: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    /// `K × P`, orthonormal columns.
    pub modes: DenseMatrix,
    pub singular_values: Vec<f64>,
    /// Column mean of the snapshots when centering was requested.
    pub mean: Option<Vec<f64>>,
}

/// Leading `p` right singular vectors of the `N × K` snapshot matrix.
///
/// Each mode is signed so that its largest-magnitude entry is positive.
pub fn pod_modes(snapshots: &DenseMatrix, p: usize, center: bool) -> Result<PodBasis> {
    let (n, k) = snapshots.shape();
    if p == 0 || p > n.min(k) {
        return Err(RinoError::InvalidArgument(format!("cannot extract {p} modes from {n}x{k} snapshots")));
    }
    let mut a = snapshots.clone();
    let mean = center.then(|| {
        let mut m = vec![0.0; k];
        for r in a.row_iter() {
            m.iter_mut().zip(r).for_each(|(s, v)| *s += v);
        }
        m.iter_mut().for_each(|s| *s /= n as f64);
        for i in 0..n {
            a.row_mut(i).iter_mut().zip(&m).for_each(|(v, mu)| *v -= mu);
        }
        m
    });
    let (mut modes, sv) = if n.min(k) <= DIRECT_LIMIT {
        let svd = svd_thin(&a, n.min(k))?;
        (svd.v, svd.singular_values)
    } else {
        randomized_right_vectors(&a, p)?
    };
    let tol = sv.first().copied().unwrap_or(0.0) * n.max(k) as f64 * f64::EPSILON;
    let rank = sv.iter().filter(|&&s| s > tol).count();
    if rank < p {
        return Err(RinoError::RankDeficient { requested: p, rank });
    }
    modes = modes.leading_columns(p);
    for c in 0..p {
        let col = modes.column(c);
        let big = col.iter().fold(0.0_f64, |b, &v| if v.abs() > b.abs() { v } else { b });
        if big < 0.0 {
            for r in 0..k {
                modes[(r, c)] = -modes[(r, c)];
            }
        }
    }
    Ok(PodBasis { modes, singular_values: sv.into_iter().take(p).collect(), mean })
}

/// `a · bᵀ`.
fn mul_abt(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(a.rows(), b.rows());
    for i in 0..a.rows() {
        for j in 0..b.rows() {
            out[(i, j)] = dot(a.row(i), b.row(j));
        }
    }
    out
}

/// Modified Gram–Schmidt over rows, applied twice.
fn orthonormalize_rows(m: &mut DenseMatrix) {
    for _ in 0..2 {
        for i in 0..m.rows() {
            for j in 0..i {
                let c = dot(m.row(i), m.row(j));
                let rj = m.row(j).to_vec();
                m.row_mut(i).iter_mut().zip(&rj).for_each(|(v, w)| *v -= c * w);
            }
            let nrm = dot(m.row(i), m.row(i)).sqrt();
            let row = m.row_mut(i);
            if nrm > 0.0 {
                row.iter_mut().for_each(|v| *v /= nrm);
            }
        }
    }
}

fn randomized_right_vectors(a: &DenseMatrix, p: usize) -> Result<(DenseMatrix, Vec<f64>)> {
    let (n, _) = a.shape();
    let l = (p + OVERSAMPLE).min(n);
    let omega = DenseMatrix::new(l, n, sample_standard_normal(&RngState::new(0x9d0d), l * n))?;
    let mut z = omega.matmul(a)?;
    orthonormalize_rows(&mut z);
    for _ in 0..POWER_ITERATIONS {
        let mut w = mul_abt(&z, a);
        orthonormalize_rows(&mut w);
        z = w.matmul(a)?;
        orthonormalize_rows(&mut z);
    }
    // A ≈ (A Zᵀ) Z, so the right vectors of A are Zᵀ times those of A Zᵀ.
    let c = mul_abt(a, &z);
    let svd = svd_thin(&c, l)?;
    let v = z.transpose().matmul(&svd.v)?;
    Ok((v, svd.singular_values))
}
