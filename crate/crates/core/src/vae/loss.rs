use serde::{Deserialize, Serialize};

use super::latent::LatentPosterior;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// `KL(N(μ, e^{logvar}) ‖ N(0, 1))` summed over the given elements.
pub fn kl_gaussian_standard(mu: &[f64], logvar: &[f64]) -> f64 {
    mu.iter()
        .zip(logvar)
        .map(|(m, lv)| 0.5 * (m * m + lv.exp() - 1.0 - lv))
        .sum()
}

/// Loss of one evaluation.
///
/// `mse` is the squared error summed over bins and averaged over frames;
/// `kl` is the KL divergence summed over latent dimensions and averaged over
/// nodes and frames. `total = mse + kl_weight · kl`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElboLoss {
    pub total: f64,
    pub mse: f64,
    pub kl: f64,
}

/// Unnormalized loss sums, accumulated over the sequences of a batch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossSums {
    pub squared_error: f64,
    pub kl: f64,
    pub frames: usize,
    pub nodes: usize,
}

impl LossSums {
    pub fn of(x: &Matrix, reconstruction: &Matrix, post: &LatentPosterior) -> Result<Self> {
        x.check_same_shape(reconstruction)?;
        if post.frames() != x.rows() {
            return Err(Error::ShapeMismatch(format!(
                "posterior covers {} frames, input has {}",
                post.frames(),
                x.rows()
            )));
        }
        let squared_error = x
            .as_slice()
            .iter()
            .zip(reconstruction.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(Self {
            squared_error,
            kl: kl_gaussian_standard(&post.mu.data, &post.logvar.data),
            frames: x.rows(),
            nodes: post.nodes(),
        })
    }

    pub fn merge(&mut self, other: &LossSums) {
        self.squared_error += other.squared_error;
        self.kl += other.kl;
        self.frames += other.frames;
        self.nodes = self.nodes.max(other.nodes);
    }

    pub fn finish(&self, kl_weight: f64) -> ElboLoss {
        let frames = self.frames.max(1) as f64;
        let mse = self.squared_error / frames;
        let kl = self.kl / (frames * self.nodes.max(1) as f64);
        ElboLoss {
            total: mse + kl_weight * kl,
            mse,
            kl,
        }
    }
}

pub(crate) fn check_weight(kl_weight: f64) -> Result<()> {
    if !(kl_weight >= 0.0) || !kl_weight.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "kl_weight must be finite and nonnegative, got {kl_weight}"
        )));
    }
    Ok(())
}

pub fn elbo_loss(
    x: &Matrix,
    reconstruction: &Matrix,
    post: &LatentPosterior,
    kl_weight: f64,
) -> Result<ElboLoss> {
    check_weight(kl_weight)?;
    Ok(LossSums::of(x, reconstruction, post)?.finish(kl_weight))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{randn, rng};
    use crate::vae::LatentTensor;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn kl_closed_forms() {
        assert_eq!(kl_gaussian_standard(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!((kl_gaussian_standard(&[1.0], &[0.0]) - 0.5).abs() < 1e-15);
        let v = kl_gaussian_standard(&[0.0], &[4f64.ln()]);
        assert!((v - 0.5 * (4.0 - 1.0 - 4f64.ln())).abs() < 1e-15);
        assert!((v - 0.80685).abs() < 1e-5);
    }

    #[test]
    fn kl_matches_monte_carlo() {
        // E_q[log q(z) − log p(z)] with q = N(0, 4), p = N(0, 1).
        let q = Normal::new(0.0, 2.0).unwrap();
        let mut g = rng(5);
        let n = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let z: f64 = q.sample(&mut g);
            let log_q = -0.5 * (z * z / 4.0) - 0.5 * (2.0 * std::f64::consts::PI * 4.0).ln();
            let log_p = -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln();
            acc += log_q - log_p;
        }
        let mc = acc / n as f64;
        let exact = kl_gaussian_standard(&[0.0], &[4f64.ln()]);
        assert!((mc - exact).abs() < 1e-2, "mc {mc} exact {exact}");
    }

    #[test]
    fn elbo_conventions() {
        let x = randn(5, 512, 1);
        let post = LatentPosterior::prior(5, 3, 4);
        let l = elbo_loss(&x, &x, &post, 0.7).unwrap();
        assert_eq!((l.total, l.mse, l.kl), (0.0, 0.0, 0.0));

        let shifted = x.map(|v| v + 1.0);
        let l = elbo_loss(&x, &shifted, &post, 1.0).unwrap();
        assert!((l.mse - 512.0).abs() < 1e-9);

        let mut post = post;
        post.mu = LatentTensor::from_vec(5, 3, 4, vec![1.0; 60]).unwrap();
        let l = elbo_loss(&x, &shifted, &post, 0.0).unwrap();
        assert_eq!(l.total, l.mse);
        // 4 latent dims × 0.5 per dim, averaged over nodes and frames
        assert!((l.kl - 2.0).abs() < 1e-12);
        assert!(elbo_loss(&x, &x, &post, -1.0).is_err());
    }

    #[test]
    fn kl_nonnegative_and_zero_only_at_prior() {
        let mu = randn(1, 200, 3).into_vec();
        let lv = randn(1, 200, 4).into_vec();
        for (m, l) in mu.iter().zip(&lv) {
            let v = kl_gaussian_standard(&[*m], &[*l]);
            assert!(v > 0.0);
        }
    }
}
