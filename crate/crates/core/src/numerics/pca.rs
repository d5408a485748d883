use super::{svd, Matrix};
use crate::error::{Error, Result};

/// Centers `x` (`n × d`) and projects it onto its top `k` principal axes.
///
/// Each axis is oriented so that its largest-magnitude loading is positive.
pub fn pca_project(x: &Matrix, k: usize) -> Result<Matrix> {
    Ok(pca_fit(x, k)?.project(x))
}

/// Principal axes fitted on a data matrix.
#[derive(Debug, Clone)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `k × d`, one unit-norm axis per row.
    pub axes: Matrix,
    /// Variance along each axis (denominator `n − 1`).
    pub variances: Vec<f64>,
}

impl Pca {
    pub fn project(&self, x: &Matrix) -> Matrix {
        let (n, d) = x.shape();
        let k = self.axes.rows();
        let mut out = Matrix::zeros(n, k);
        for i in 0..n {
            let row = x.row(i);
            for c in 0..k {
                let axis = self.axes.row(c);
                out[(i, c)] = (0..d).map(|j| (row[j] - self.mean[j]) * axis[j]).sum();
            }
        }
        out
    }
}

pub fn pca_fit(x: &Matrix, k: usize) -> Result<Pca> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "PCA needs at least 2 rows, got {n}"
        )));
    }
    if k > d {
        return Err(Error::InvalidArgument(format!(
            "cannot keep {k} components of {d}-dimensional data"
        )));
    }
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = Matrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    // Tall inputs go through the d × d covariance, whose singular vectors
    // are the principal axes and whose singular values are the variances.
    let (vt, variances_all) = if n > 2 * d {
        let cov = centered.transpose().matmul(&centered)?.scale(1.0 / (n as f64 - 1.0));
        let s = svd(&cov)?;
        (s.vt, s.sigma)
    } else {
        let s = svd(&centered)?;
        let v = s.sigma.iter().map(|sv| sv * sv / (n as f64 - 1.0)).collect();
        (s.vt, v)
    };
    let mut axes = Matrix::zeros(k, d);
    for c in 0..k {
        let row = vt.row(c);
        let pivot = row
            .iter()
            .copied()
            .fold(0.0_f64, |best, v| if v.abs() > best.abs() { v } else { best });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for (a, &v) in axes.row_mut(c).iter_mut().zip(row) {
            *a = sign * v;
        }
    }
    let variances = variances_all[..k].to_vec();
    Ok(Pca {
        mean,
        axes,
        variances,
    })
}
