//! Low-rank plus sparse decomposition of a magnitude spectrogram and the
//! sigmoid mask built from it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{shrink, sv_threshold, svd, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RpcaConfig {
    /// λ = lambda_scale / √max(n₁, n₂).
    pub lambda_scale: f64,
    pub max_iter: usize,
    /// Stop once ‖M − L − S‖_F / ‖M‖_F falls below this.
    pub tol: f64,
    /// Initial penalty is `mu_factor / ‖M‖₂`.
    pub mu_factor: f64,
    /// Penalty growth per iteration.
    pub rho: f64,
}

impl Default for RpcaConfig {
    fn default() -> Self {
        Self {
            lambda_scale: 0.3,
            max_iter: 500,
            tol: 1e-7,
            mu_factor: 1.25,
            rho: 1.5,
        }
    }
}

impl RpcaConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda_scale > 0.0
            && self.lambda_scale.is_finite()
            && self.tol > 0.0
            && self.mu_factor > 0.0
            && self.rho >= 1.0
            && self.max_iter >= 1;
        if !ok {
            return Err(Error::InvalidConfig(format!("invalid rpca settings {self:?}")));
        }
        Ok(())
    }

    pub fn lambda(&self, rows: usize, cols: usize) -> f64 {
        self.lambda_scale / (rows.max(cols) as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RpcaDecomposition {
    pub l: Matrix,
    pub s: Matrix,
    pub iterations: usize,
    /// ‖M − L − S‖_F / ‖M‖_F of the returned pair.
    pub residual: f64,
    pub converged: bool,
    pub lambda: f64,
}

impl RpcaDecomposition {
    /// ‖L‖_* + λ‖S‖₁.
    pub fn objective(&self) -> Result<f64> {
        rpca_objective(&self.l, &self.s, self.lambda)
    }
}

pub fn rpca_objective(l: &Matrix, s: &Matrix, lambda: f64) -> Result<f64> {
    Ok(svd(l)?.nuclear_norm() + lambda * s.l1_norm())
}

/// Inexact augmented Lagrangian iteration for
/// `min ‖L‖_* + λ‖S‖₁  s.t.  M = L + S`.
///
/// If `max_iter` runs out first, the iterate with the smallest constraint
/// residual is returned with `converged = false`.
pub fn rpca(m: &Matrix, cfg: &RpcaConfig) -> Result<RpcaDecomposition> {
    cfg.validate()?;
    if !m.is_finite() {
        return Err(Error::NonFinite("rpca input"));
    }
    let (rows, cols) = m.shape();
    let lambda = cfg.lambda(rows, cols);
    let norm_fro = m.frobenius_norm();
    if norm_fro == 0.0 {
        return Ok(RpcaDecomposition {
            l: Matrix::zeros(rows, cols),
            s: Matrix::zeros(rows, cols),
            iterations: 0,
            residual: 0.0,
            converged: true,
            lambda,
        });
    }
    let norm_two = svd(m)?.spectral_norm();
    let dual_norm = norm_two.max(m.max_abs() / lambda);
    let mut y = m.scale(1.0 / dual_norm);
    let mut mu = cfg.mu_factor / norm_two;
    let mu_max = mu * 1e7;
    let mut s = Matrix::zeros(rows, cols);
    let mut best: Option<(f64, Matrix, Matrix, usize)> = None;

    for it in 1..=cfg.max_iter {
        let inv_mu = 1.0 / mu;
        let l_arg = m.zip_map(&s, |a, b| a - b)?.zip_map(&y, |a, b| a + inv_mu * b)?;
        let l = sv_threshold(&l_arg, inv_mu)?;
        let s_arg = m.zip_map(&l, |a, b| a - b)?.zip_map(&y, |a, b| a + inv_mu * b)?;
        s = s_arg.map(|x| shrink(x, lambda * inv_mu));
        let z = m.sub(&l)?.sub(&s)?;
        let residual = z.frobenius_norm() / norm_fro;
        if !residual.is_finite() {
            return Err(Error::NonFinite("rpca iterate"));
        }
        y = y.zip_map(&z, |a, b| a + mu * b)?;
        mu = (mu * cfg.rho).min(mu_max);

        if residual < cfg.tol {
            return Ok(RpcaDecomposition {
                l,
                s,
                iterations: it,
                residual,
                converged: true,
                lambda,
            });
        }
        if best.as_ref().map_or(true, |b| residual < b.0) {
            best = Some((residual, l, s.clone(), it));
        }
    }
    let (residual, l, s, _) = best.expect("at least one iteration ran");
    log::warn!(
        "rpca stopped after {} iterations at residual {residual:.3e}",
        cfg.max_iter
    );
    Ok(RpcaDecomposition {
        l,
        s,
        iterations: cfg.max_iter,
        residual,
        converged: false,
        lambda,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskConfig {
    /// Required loudness ratio of the sparse part over the low-rank part.
    pub gain: f64,
    /// Sigmoid slope.
    pub alpha: f64,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            gain: 1.0,
            alpha: 20.0,
        }
    }
}

impl MaskConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gain >= 0.0) || !self.gain.is_finite() || !(self.alpha > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "mask needs gain >= 0 and alpha > 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Ratio threshold `√(g² / (1 + g²))`.
///
/// `|S| > g|L|` together with `|M|² = |S|² + |L|²` is equivalent to
/// `|S|/|M|` exceeding this value.
pub fn mask_threshold(gain: f64) -> Result<f64> {
    if !(gain >= 0.0) {
        return Err(Error::InvalidArgument(format!("gain must be >= 0, got {gain}")));
    }
    if gain.is_infinite() {
        return Ok(1.0);
    }
    let g2 = gain * gain;
    Ok((g2 / (1.0 + g2)).sqrt())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `W = σ(α (|S|/|M| − threshold(g)))`, with the ratio taken as 0 where M is 0.
pub fn soft_mask(s: &Matrix, m: &Matrix, cfg: &MaskConfig) -> Result<Matrix> {
    cfg.validate()?;
    let thr = mask_threshold(cfg.gain)?;
    s.zip_map(m, |sv, mv| {
        let ratio = if mv == 0.0 { 0.0 } else { sv.abs() / mv.abs() };
        sigmoid(cfg.alpha * (ratio - thr))
    })
}

pub fn apply_mask(w: &Matrix, m: &Matrix) -> Result<Matrix> {
    w.zip_map(m, |a, b| a * b)
}

/// Full enhancement stage: decompose, mask, and apply the mask to `m`.
pub fn enhance(m: &Matrix, rpca_cfg: &RpcaConfig, mask_cfg: &MaskConfig) -> Result<(Matrix, RpcaDecomposition)> {
    let dec = rpca(m, rpca_cfg)?;
    let w = soft_mask(&dec.s, m, mask_cfg)?;
    Ok((apply_mask(&w, m)?, dec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{randn, rng};
    use proptest::prelude::*;
    use rand::Rng as _;

    fn planted(seed: u64) -> (Matrix, Matrix, Matrix) {
        let mut g = rng(seed);
        let mut unit = |n: usize| {
            let v: Vec<f64> = (0..n).map(|_| g.random_range(0.2..1.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect::<Vec<_>>()
        };
        let (u, v) = (unit(50), unit(50));
        let l = Matrix::from_fn(50, 50, |i, j| 10.0 * u[i] * v[j]);
        let mut s = Matrix::zeros(50, 50);
        for (i, j) in [(3, 7), (11, 40), (25, 25), (33, 2), (47, 19)] {
            s.as_mut_slice()[i * 50 + j] = 25.0;
        }
        (l.add(&s).unwrap(), l, s)
    }

    #[test]
    fn recovers_planted_rank_one_plus_spikes() {
        let (m, l, s) = planted(7);
        let cfg = RpcaConfig::default();
        let dec = rpca(&m, &cfg).unwrap();
        assert!(dec.converged);
        assert!(dec.iterations <= 500);
        let err_l = dec.l.sub(&l).unwrap().frobenius_norm() / l.frobenius_norm();
        let err_s = dec.s.sub(&s).unwrap().frobenius_norm() / s.frobenius_norm();
        assert!(err_l <= 1e-3, "{err_l}");
        assert!(err_s <= 1e-3, "{err_s}");
        assert!(dec.residual <= cfg.tol);
    }

    #[test]
    fn zero_matrix() {
        let dec = rpca(&Matrix::zeros(4, 6), &RpcaConfig::default()).unwrap();
        assert_eq!(dec.l, Matrix::zeros(4, 6));
        assert_eq!(dec.s, Matrix::zeros(4, 6));
        assert_eq!(dec.iterations, 0);
    }

    #[test]
    fn lambda_formula() {
        let cfg = RpcaConfig::default();
        assert_eq!(cfg.lambda(513, 100), 0.3 / 513f64.sqrt());
        assert!((cfg.lambda(100, 513) - 0.013245).abs() < 5e-7);
    }

    #[test]
    fn iteration_cap_returns_flagged_iterate() {
        let (m, _, _) = planted(1);
        let cfg = RpcaConfig {
            max_iter: 3,
            ..RpcaConfig::default()
        };
        let dec = rpca(&m, &cfg).unwrap();
        assert!(!dec.converged);
        assert_eq!(dec.iterations, 3);
        assert!(dec.residual > cfg.tol);
    }

    #[test]
    fn solution_beats_feasible_alternatives() {
        // Slow penalty growth drives the iteration to the optimum; the
        // default schedule reaches feasibility sooner and lands close to it.
        let m = randn(20, 12, 5).map(f64::abs);
        let exact = RpcaConfig {
            rho: 1.05,
            tol: 1e-9,
            max_iter: 2000,
            ..RpcaConfig::default()
        };
        let dec = rpca(&m, &exact).unwrap();
        assert!(dec.converged);
        let obj = dec.objective().unwrap();
        let lam = dec.lambda;
        let zero = Matrix::zeros(20, 12);
        assert!(obj <= rpca_objective(&m, &zero, lam).unwrap() + 1e-6);
        assert!(obj <= rpca_objective(&zero, &m, lam).unwrap() + 1e-6);
        for seed in 0..5 {
            let d = randn(20, 12, 100 + seed).scale(1e-2);
            let l = dec.l.add(&d).unwrap();
            let s = dec.s.sub(&d).unwrap();
            assert!(obj <= rpca_objective(&l, &s, lam).unwrap() + 1e-6);
        }
        let fast = rpca(&m, &RpcaConfig::default()).unwrap();
        assert!(fast.converged);
        assert!(fast.objective().unwrap() <= obj * 1.01);
    }

    #[test]
    fn homogeneous_in_scale() {
        let m = randn(15, 10, 2).map(f64::abs);
        let a = rpca(&m, &RpcaConfig::default()).unwrap();
        let b = rpca(&m.scale(7.0), &RpcaConfig::default()).unwrap();
        let err = b.l.sub(&a.l.scale(7.0)).unwrap().frobenius_norm() / b.l.frobenius_norm();
        assert!(err < 1e-6, "{err}");
        let mask = MaskConfig::default();
        let wa = soft_mask(&a.s, &m, &mask).unwrap();
        let wb = soft_mask(&b.s, &m.scale(7.0), &mask).unwrap();
        assert!(wa.sub(&wb).unwrap().max_abs() < 1e-6);
    }

    #[test]
    fn threshold_values() {
        assert!((mask_threshold(1.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(mask_threshold(0.0).unwrap(), 0.0);
        assert!((mask_threshold(2.0).unwrap() - 0.8f64.sqrt()).abs() < 1e-12);
        assert!((mask_threshold(2.0).unwrap() - 0.89443).abs() < 1e-5);
        assert!(mask_threshold(-0.1).is_err());
        let mut prev = -1.0;
        for i in 0..200 {
            let t = mask_threshold(i as f64 * 0.25).unwrap();
            assert!(t > prev && t < 1.0);
            prev = t;
        }
    }

    #[test]
    fn mask_values() {
        let cfg = MaskConfig::default();
        let thr = mask_threshold(1.0).unwrap();
        let m = Matrix::from_rows(&[vec![2.0, 1.0, 0.0]]).unwrap();
        let s = Matrix::from_rows(&[vec![2.0 * thr, 0.9, 0.0]]).unwrap();
        let w = soft_mask(&s, &m, &cfg).unwrap();
        assert_eq!(w[(0, 0)], 0.5);
        assert!((w[(0, 1)] - 0.97932).abs() < 5e-6, "{}", w[(0, 1)]);
        let independent = 1.0 / (1.0 + (-20.0 * (0.9 - 0.5f64.sqrt())).exp());
        assert!((w[(0, 1)] - independent).abs() < 1e-15);
        assert!((w[(0, 2)] - 1.0 / (1.0 + (20.0 * thr).exp())).abs() < 1e-15);
        assert!(soft_mask(&s, &Matrix::zeros(2, 2), &cfg).is_err());
    }

    #[test]
    fn steep_mask_matches_hard_mask() {
        // Build |M|² = |S|² + |L|² so the hard rule |S| > g|L| is the oracle.
        let g = 1.0;
        let ls = randn(40, 40, 3).map(f64::abs);
        let ss = randn(40, 40, 4).map(f64::abs);
        let m = ls.zip_map(&ss, |a, b| a.hypot(b)).unwrap();
        let w = soft_mask(&ss, &m, &MaskConfig { gain: g, alpha: 1e4 }).unwrap();
        let thr = mask_threshold(g).unwrap();
        let (mut checked, mut agree) = (0, 0);
        for i in 0..40 {
            for j in 0..40 {
                let ratio = ss[(i, j)] / m[(i, j)];
                if (ratio - thr).abs() < 1e-3 {
                    continue;
                }
                checked += 1;
                let hard = if ss[(i, j)] > g * ls[(i, j)] { 1.0 } else { 0.0 };
                if (w[(i, j)] - hard).abs() < 1e-3 {
                    agree += 1;
                }
            }
        }
        assert!(agree as f64 >= 0.999 * checked as f64, "{agree}/{checked}");
    }

    #[test]
    fn mask_application() {
        let m = randn(5, 4, 9).map(f64::abs);
        let ones = Matrix::from_fn(5, 4, |_, _| 1.0);
        assert_eq!(apply_mask(&ones, &m).unwrap(), m);
        assert_eq!(apply_mask(&Matrix::zeros(5, 4), &m).unwrap(), Matrix::zeros(5, 4));
        let dec = rpca(&m, &RpcaConfig::default()).unwrap();
        let w = soft_mask(&dec.s, &m, &MaskConfig::default()).unwrap();
        let out = apply_mask(&w, &m).unwrap();
        for (o, x) in out.as_slice().iter().zip(m.as_slice()) {
            assert!(*o >= 0.0 && o <= x);
        }
    }

    proptest! {
        #[test]
        fn mask_is_monotone_and_open(
            r1 in 0.0..1.0f64, r2 in 0.0..1.0f64,
            g in 0.0..5.0f64, dg in 0.0..2.0f64, alpha in 0.1..50.0f64,
        ) {
            let m = Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
            let s = Matrix::from_rows(&[vec![r1.min(r2), r1.max(r2)]]).unwrap();
            let w = soft_mask(&s, &m, &MaskConfig { gain: g, alpha }).unwrap();
            prop_assert!(w[(0, 0)] <= w[(0, 1)]);
            // Strictly inside (0, 1) until the sigmoid saturates in f64.
            let thr = mask_threshold(g).unwrap();
            for (k, r) in [r1.min(r2), r1.max(r2)].into_iter().enumerate() {
                let v = w[(0, k)];
                prop_assert!((0.0..=1.0).contains(&v));
                if alpha * (r - thr).abs() < 30.0 {
                    prop_assert!(v > 0.0 && v < 1.0);
                }
            }
            let w2 = soft_mask(&s, &m, &MaskConfig { gain: g + dg, alpha }).unwrap();
            prop_assert!(w2[(0, 0)] <= w[(0, 0)]);
        }
    }
}
