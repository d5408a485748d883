//! Dense linear algebra kernels: matrices, Jacobi SVD, PCA, proximal
//! operators and seeded Gaussian sampling. Everything runs in `f64`.

mod matrix;
mod pca;
mod prox;
mod random;
mod svd;

pub use matrix::Matrix;
pub use pca::{pca_fit, pca_project, Pca};
pub(crate) use prox::shrink;
pub use prox::{soft_threshold, sv_threshold, sv_threshold_with_rank};
pub use random::{fill_normal, randn, rng, Rng};
pub use svd::{svd, SvdResult, OFF_DIAGONAL_TOL};
