//! Proximal operators of the nuclear norm and the elementwise ℓ1 norm.

use super::{svd, Matrix};
use crate::error::{Error, Result};

fn check_tau(tau: f64) -> Result<()> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "threshold must be finite and nonnegative, got {tau}"
        )));
    }
    Ok(())
}

/// Singular value thresholding: `U · diag(max(σ − τ, 0)) · Vᵗ`.
pub fn sv_threshold(m: &Matrix, tau: f64) -> Result<Matrix> {
    Ok(sv_threshold_with_rank(m, tau)?.0)
}

/// As [`sv_threshold`], also returning how many singular values survived.
pub fn sv_threshold_with_rank(m: &Matrix, tau: f64) -> Result<(Matrix, usize)> {
    check_tau(tau)?;
    let mut s = svd(m)?;
    let mut rank = 0;
    for v in s.sigma.iter_mut() {
        *v = (*v - tau).max(0.0);
        if *v > 0.0 {
            rank += 1;
        }
    }
    Ok((s.reconstruct(), rank))
}

/// Elementwise shrinkage `sign(x) · max(|x| − τ, 0)`.
pub fn soft_threshold(m: &Matrix, tau: f64) -> Result<Matrix> {
    check_tau(tau)?;
    Ok(m.map(|x| shrink(x, tau)))
}

#[inline]
pub(crate) fn shrink(x: f64, tau: f64) -> f64 {
    if x > tau {
        x - tau
    } else if x < -tau {
        x + tau
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::randn;
    use proptest::prelude::*;

    #[test]
    fn svt_on_diagonal() {
        let out = sv_threshold(&Matrix::diag(&[3.0, 1.0]), 2.0).unwrap();
        let want = Matrix::diag(&[1.0, 0.0]);
        assert!(out.sub(&want).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn svt_zero_tau_is_identity() {
        let m = randn(6, 4, 3);
        let out = sv_threshold(&m, 0.0).unwrap();
        assert!(out.sub(&m).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn svt_kills_rank_one_at_its_singular_value() {
        let u = [0.6, 0.8];
        let v = [1.0, 0.0, 0.0];
        let m = Matrix::from_fn(2, 3, |i, j| 5.0 * u[i] * v[j]);
        let (out, rank) = sv_threshold_with_rank(&m, 5.0).unwrap();
        assert_eq!(rank, 0);
        assert!(out.max_abs() < 1e-12);
    }

    #[test]
    fn soft_threshold_values() {
        let m = Matrix::from_rows(&[vec![3.0, -0.5, -4.0]]).unwrap();
        let out = soft_threshold(&m, 2.0).unwrap();
        assert_eq!(out.as_slice(), &[1.0, 0.0, -2.0]);
        assert_eq!(soft_threshold(&m, 0.0).unwrap(), m);
    }

    #[test]
    fn negative_tau_rejected() {
        let m = Matrix::zeros(2, 2);
        assert!(soft_threshold(&m, -1.0).is_err());
        assert!(sv_threshold(&m, -1e-9).is_err());
        assert!(soft_threshold(&m, f64::NAN).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn prox_operators_are_nonexpansive(seed_a in 0u64..1000, seed_b in 1000u64..2000, tau in 0.0f64..3.0) {
            let a = randn(5, 4, seed_a);
            let b = randn(5, 4, seed_b);
            let dist = a.sub(&b).unwrap().frobenius_norm();
            let soft = soft_threshold(&a, tau).unwrap().sub(&soft_threshold(&b, tau).unwrap()).unwrap();
            prop_assert!(soft.frobenius_norm() <= dist + 1e-12);
            let svt = sv_threshold(&a, tau).unwrap().sub(&sv_threshold(&b, tau).unwrap()).unwrap();
            prop_assert!(svt.frobenius_norm() <= dist + 1e-9);
        }
    }
}
