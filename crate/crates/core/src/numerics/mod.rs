//! Dense linear algebra, sampling and optimizer primitives.

mod adam;
mod diff;
mod linalg;
mod matrix;
mod rng;

pub use adam::{adam_step, AdamState};
pub use diff::finite_diff_grad;
pub use linalg::{cholesky, cholesky_solve_in_place, ridge_lstsq, solve_spd, solve_spd_vec, svd_thin, ThinSvd};
pub use matrix::{dot, norm2, DenseMatrix};
pub use rng::{sample_standard_normal, sample_uniform, RngState};
