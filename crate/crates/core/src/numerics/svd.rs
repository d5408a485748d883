//! Thin singular value decomposition by one-sided (Hestenes) Jacobi rotations.
//!
//! Columns of the working matrix are rotated pairwise until every pair is
//! orthogonal to within [`OFF_DIAGONAL_TOL`] relative to the column norms.
//! The column norms are then the singular values, the normalized columns the
//! left singular vectors, and the accumulated rotations the right singular
//! vectors. Wide inputs are handled by decomposing the transpose.

use super::Matrix;
use crate::error::{Error, Result};

/// Relative off-diagonal mass below which a column pair counts as orthogonal.
pub const OFF_DIAGONAL_TOL: f64 = 1e-12;

const MAX_SWEEPS: usize = 80;

/// `m = u · diag(sigma) · vt` with `r = min(rows, cols)`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// `rows × r`, orthonormal columns.
    pub u: Matrix,
    /// Nonincreasing, nonnegative.
    pub sigma: Vec<f64>,
    /// `r × cols`, orthonormal rows.
    pub vt: Matrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Matrix {
        let (m, r) = self.u.shape();
        let n = self.vt.cols();
        let mut out = Matrix::zeros(m, n);
        for k in 0..r {
            let s = self.sigma[k];
            if s == 0.0 {
                continue;
            }
            let vrow = self.vt.row(k);
            for i in 0..m {
                let a = self.u[(i, k)] * s;
                if a == 0.0 {
                    continue;
                }
                for (o, &v) in out.row_mut(i).iter_mut().zip(vrow) {
                    *o += a * v;
                }
            }
        }
        out
    }

    /// Largest singular value (spectral norm of the input).
    pub fn spectral_norm(&self) -> f64 {
        self.sigma.first().copied().unwrap_or(0.0)
    }

    pub fn nuclear_norm(&self) -> f64 {
        self.sigma.iter().sum()
    }
}

pub fn svd(m: &Matrix) -> Result<SvdResult> {
    if !m.is_finite() {
        return Err(Error::NonFinite("svd input"));
    }
    if m.rows() >= m.cols() {
        Ok(jacobi_tall(m))
    } else {
        let t = jacobi_tall(&m.transpose());
        Ok(SvdResult {
            u: t.vt.transpose(),
            sigma: t.sigma,
            vt: t.u.transpose(),
        })
    }
}

/// Jacobi SVD for `rows >= cols`.
fn jacobi_tall(a: &Matrix) -> SvdResult {
    let (m, n) = a.shape();
    // Column-major working copy so that column rotations touch contiguous memory.
    let mut g = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            g[j * m + i] = a[(i, j)];
        }
    }
    let mut v = vec![0.0; n * n];
    for j in 0..n {
        v[j * n + j] = 1.0;
    }
    let mut norms: Vec<f64> = (0..n).map(|j| dot(col(&g, m, j), col(&g, m, j))).collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = dot(col(&g, m, p), col(&g, m, q));
                if gamma.abs() <= OFF_DIAGONAL_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut g, m, p, q, c, s);
                rotate_columns(&mut v, n, p, q, c, s);
                norms[p] = dot(col(&g, m, p), col(&g, m, p));
                norms[q] = dot(col(&g, m, q), col(&g, m, q));
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let sig: Vec<f64> = norms.iter().map(|v| v.sqrt()).collect();
    order.sort_by(|&i, &j| sig[j].total_cmp(&sig[i]).then(i.cmp(&j)));

    let smax = sig[order[0]];
    let negligible = smax * f64::EPSILON * (m as f64);
    let mut u = Matrix::zeros(m, n);
    let mut vt = Matrix::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    let mut deficient = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        let s = sig[j];
        sigma.push(s);
        if s > negligible && s > 0.0 {
            for i in 0..m {
                u[(i, k)] = g[j * m + i] / s;
            }
        } else {
            deficient.push(k);
        }
        for i in 0..n {
            vt[(k, i)] = v[j * n + i];
        }
    }
    complete_basis(&mut u, &deficient);
    SvdResult { u, sigma, vt }
}

/// Fills the listed columns of `u` with unit vectors orthogonal to all others.
fn complete_basis(u: &mut Matrix, missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let (m, r) = u.shape();
    let mut filled: Vec<bool> = (0..r).map(|k| !missing.contains(&k)).collect();
    let mut candidate = 0;
    for &k in missing {
        while candidate < m {
            let mut w = vec![0.0; m];
            w[candidate] = 1.0;
            candidate += 1;
            // Two rounds of Gram-Schmidt against every filled column.
            for _ in 0..2 {
                for (c, _) in filled.iter().enumerate().filter(|(_, f)| **f) {
                    let proj: f64 = (0..m).map(|i| u[(i, c)] * w[i]).sum();
                    for (i, wi) in w.iter_mut().enumerate() {
                        *wi -= proj * u[(i, c)];
                    }
                }
            }
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.5 {
                for (i, wi) in w.iter().enumerate() {
                    u[(i, k)] = wi / norm;
                }
                filled[k] = true;
                break;
            }
        }
    }
}

#[inline]
fn col(g: &[f64], m: usize, j: usize) -> &[f64] {
    &g[j * m..(j + 1) * m]
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rotate_columns(g: &mut [f64], m: usize, p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = g.split_at_mut(q * m);
    let gp = &mut lo[p * m..(p + 1) * m];
    let gq = &mut hi[..m];
    for (x, y) in gp.iter_mut().zip(gq.iter_mut()) {
        let a = *x;
        let b = *y;
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::randn;

    fn assert_orthonormal_columns(u: &Matrix, tol: f64) {
        let gram = u.transpose().matmul(u).unwrap();
        let eye = Matrix::identity(u.cols());
        assert!(gram.sub(&eye).unwrap().max_abs() < tol, "{gram:?}");
    }

    fn check(m: &Matrix) -> SvdResult {
        let r = svd(m).unwrap();
        let k = m.rows().min(m.cols());
        assert_eq!(r.u.shape(), (m.rows(), k));
        assert_eq!(r.vt.shape(), (k, m.cols()));
        assert!(r.sigma.windows(2).all(|w| w[0] >= w[1]));
        assert!(r.sigma.iter().all(|&s| s >= 0.0));
        assert_orthonormal_columns(&r.u, 1e-8);
        assert_orthonormal_columns(&r.vt.transpose(), 1e-8);
        let err = r.reconstruct().sub(m).unwrap().frobenius_norm();
        let norm = m.frobenius_norm().max(f64::MIN_POSITIVE);
        assert!(err / norm <= 1e-8 || err < 1e-12, "reconstruction {err}");
        r
    }

    #[test]
    fn identity_and_diagonal() {
        let r = check(&Matrix::identity(3));
        assert_eq!(r.sigma, vec![1.0, 1.0, 1.0]);
        let r = check(&Matrix::diag(&[1.0, 3.0, 2.0]));
        assert_eq!(r.sigma, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn wide_tall_and_rank_deficient() {
        check(&randn(7, 4, 1));
        check(&randn(4, 9, 2));
        let rank1 = Matrix::from_fn(6, 5, |i, j| (i + 1) as f64 * (j as f64 - 2.0));
        let r = check(&rank1);
        assert!(r.sigma[1] < 1e-10 * r.sigma[0]);
        check(&Matrix::zeros(3, 2));
    }

    #[test]
    fn rejects_non_finite() {
        let mut m = Matrix::zeros(2, 2);
        m[(0, 1)] = f64::NAN;
        assert!(matches!(svd(&m), Err(Error::NonFinite(_))));
    }

    #[test]
    fn deterministic() {
        let m = randn(12, 9, 7);
        let a = svd(&m).unwrap();
        let b = svd(&m).unwrap();
        assert_eq!(a.sigma, b.sigma);
        assert_eq!(a.u, b.u);
    }

    #[test]
    fn large_random_reconstruction() {
        for (rows, cols, seed) in [(512, 512, 11), (300, 64, 12)] {
            let m = randn(rows, cols, seed);
            let r = svd(&m).unwrap();
            let err = r.reconstruct().sub(&m).unwrap().frobenius_norm() / m.frobenius_norm();
            assert!(err <= 1e-8, "{rows}x{cols}: {err}");
        }
    }
}
