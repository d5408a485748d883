use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub kl_weight_start: f64,
    pub kl_weight_end: f64,
    /// Segments per optimizer step.
    pub batch_size: usize,
    /// Frames per training segment; the last segment of an utterance may be shorter.
    pub segment_frames: usize,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            kl_weight_start: 1e-4,
            kl_weight_end: 1.0,
            batch_size: 16,
            segment_frames: 100,
            clip_norm: Some(5.0),
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Plain autoencoder training: the KL term is recorded but never penalized.
    pub fn without_kl(mut self) -> Self {
        self.kl_weight_start = 0.0;
        self.kl_weight_end = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("adam betas must lie in [0, 1)".into());
        }
        if !(self.eps > 0.0) {
            return bad("adam eps must be positive".into());
        }
        let (s, e) = (self.kl_weight_start, self.kl_weight_end);
        let disabled = s == 0.0 && e == 0.0;
        if !disabled && !(s > 0.0 && s <= e && e.is_finite()) {
            return bad(format!(
                "kl weights need 0 < start <= end (or both 0), got {s} -> {e}"
            ));
        }
        if self.batch_size == 0 || self.segment_frames == 0 {
            return bad("batch_size and segment_frames must be at least 1".into());
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return bad(format!("clip_norm must be positive, got {c}"));
            }
        }
        Ok(())
    }
}

/// KL weight at `epoch`, growing geometrically from `kl_weight_start` at
/// epoch 0 to `kl_weight_end` at the last epoch. Every node shares it.
pub fn anneal_weight(epoch: usize, cfg: &TrainConfig) -> Result<f64> {
    if epoch >= cfg.epochs {
        return Err(Error::InvalidArgument(format!(
            "epoch {epoch} out of range for {} epochs",
            cfg.epochs
        )));
    }
    let (start, end) = (cfg.kl_weight_start, cfg.kl_weight_end);
    if cfg.epochs == 1 || start == end {
        return Ok(start);
    }
    let frac = epoch as f64 / (cfg.epochs - 1) as f64;
    Ok(start * (end / start).powf(frac))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_midpoint() {
        let cfg = TrainConfig::default();
        assert_eq!(anneal_weight(0, &cfg).unwrap(), 1e-4);
        assert!((anneal_weight(49, &cfg).unwrap() - 1.0).abs() < 1e-15);
        let mid = anneal_weight(24, &cfg).unwrap();
        let expected = 1e-4 * 1e4f64.powf(24.0 / 49.0);
        assert!((mid - expected).abs() < 1e-15);
        assert!((mid - 9.103e-3).abs() < 1e-6, "{mid}");
        assert!(anneal_weight(50, &cfg).is_err());
    }

    #[test]
    fn strictly_increasing() {
        let cfg = TrainConfig::default();
        let w: Vec<f64> = (0..cfg.epochs).map(|e| anneal_weight(e, &cfg).unwrap()).collect();
        assert!(w.windows(2).all(|p| p[1] > p[0]));
    }

    #[test]
    fn validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig::default().without_kl().validate().is_ok());
        let bad = TrainConfig {
            kl_weight_start: 2.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let cfg = TrainConfig::default().without_kl();
        assert_eq!(anneal_weight(10, &cfg).unwrap(), 0.0);
    }
}
