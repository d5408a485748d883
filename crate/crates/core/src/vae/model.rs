use std::ops::Range;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::rng;

/// Architecture hyperparameters of the multinode VAE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    /// Width of each encoder direction.
    pub enc_hidden: usize,
    pub dec_hidden: usize,
    /// Size of each latent node.
    pub latent_dim: usize,
    pub num_nodes: usize,
    /// Size of the decoder context fed back from the previous step.
    pub context_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_dim: 512,
            enc_hidden: 512,
            dec_hidden: 512,
            latent_dim: 64,
            num_nodes: 1,
            context_dim: 64,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("input_dim", self.input_dim),
            ("enc_hidden", self.enc_hidden),
            ("dec_hidden", self.dec_hidden),
            ("latent_dim", self.latent_dim),
            ("num_nodes", self.num_nodes),
            ("context_dim", self.context_dim),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    /// Total latent width per frame, `num_nodes · latent_dim`.
    pub fn latent_width(&self) -> usize {
        self.num_nodes * self.latent_dim
    }

    pub fn decoder_input(&self) -> usize {
        self.context_dim + self.latent_width()
    }
}

/// A named tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
    /// Fan-in used for initialization.
    pub fan_in: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LstmSlots {
    pub w_ih: usize,
    pub w_hh: usize,
    pub bias: usize,
    pub input: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct AffineSlots {
    pub weight: usize,
    pub bias: usize,
    pub input: usize,
    pub output: usize,
}

/// Offsets of every tensor in the flat parameter vector.
///
/// Order (also the checkpoint order): forward encoder LSTM (`w_ih`, `w_hh`,
/// `bias`), backward encoder LSTM, then per node `mu.weight`, `mu.bias`,
/// `logvar.weight`, `logvar.bias`, then the decoder LSTM, the context head,
/// the output head, `init_hidden` and `init_cell`. LSTM gate rows are stacked
/// as input, forget, candidate, output.
#[derive(Debug, Clone)]
pub struct ParamLayout {
    tensors: Vec<TensorSpec>,
    total: usize,
    pub(crate) enc_fwd: LstmSlots,
    pub(crate) enc_bwd: LstmSlots,
    pub(crate) mu: Vec<AffineSlots>,
    pub(crate) logvar: Vec<AffineSlots>,
    pub(crate) dec: LstmSlots,
    pub(crate) context: AffineSlots,
    pub(crate) output: AffineSlots,
    pub(crate) init_hidden: usize,
    pub(crate) init_cell: usize,
}

struct Builder {
    tensors: Vec<TensorSpec>,
    total: usize,
}

impl Builder {
    fn push(&mut self, name: String, rows: usize, cols: usize, fan_in: usize) -> usize {
        let offset = self.total;
        self.tensors.push(TensorSpec {
            name,
            rows,
            cols,
            offset,
            fan_in,
        });
        self.total += rows * cols;
        offset
    }

    fn lstm(&mut self, prefix: &str, input: usize, hidden: usize) -> LstmSlots {
        LstmSlots {
            w_ih: self.push(format!("{prefix}.w_ih"), 4 * hidden, input, input),
            w_hh: self.push(format!("{prefix}.w_hh"), 4 * hidden, hidden, hidden),
            bias: self.push(format!("{prefix}.bias"), 4 * hidden, 1, hidden),
            input,
            hidden,
        }
    }

    fn affine(&mut self, prefix: &str, input: usize, output: usize) -> AffineSlots {
        AffineSlots {
            weight: self.push(format!("{prefix}.weight"), output, input, input),
            bias: self.push(format!("{prefix}.bias"), output, 1, input),
            input,
            output,
        }
    }
}

impl ParamLayout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let mut b = Builder {
            tensors: Vec::new(),
            total: 0,
        };
        let enc_fwd = b.lstm("encoder.fwd", cfg.input_dim, cfg.enc_hidden);
        let enc_bwd = b.lstm("encoder.bwd", cfg.input_dim, cfg.enc_hidden);
        let mut mu = Vec::with_capacity(cfg.num_nodes);
        let mut logvar = Vec::with_capacity(cfg.num_nodes);
        for k in 0..cfg.num_nodes {
            mu.push(b.affine(&format!("node{k}.mu"), 2 * cfg.enc_hidden, cfg.latent_dim));
            logvar.push(b.affine(&format!("node{k}.logvar"), 2 * cfg.enc_hidden, cfg.latent_dim));
        }
        let dec = b.lstm("decoder", cfg.decoder_input(), cfg.dec_hidden);
        let context = b.affine("context", cfg.dec_hidden, cfg.context_dim);
        let output = b.affine("output", cfg.dec_hidden, cfg.input_dim);
        let init_hidden = b.push("init_hidden".into(), cfg.dec_hidden, 1, 0);
        let init_cell = b.push("init_cell".into(), cfg.dec_hidden, 1, 0);
        ParamLayout {
            tensors: b.tensors,
            total: b.total,
            enc_fwd,
            enc_bwd,
            mu,
            logvar,
            dec,
            context,
            output,
            init_hidden,
            init_cell,
        }
    }

    pub fn tensors(&self) -> &[TensorSpec] {
        &self.tensors
    }

    pub fn total(&self) -> usize {
        self.total
    }
}

/// All trainable parameters, stored flat according to a [`ParamLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    config: ModelConfig,
    params: Vec<f64>,
}

impl VaeModel {
    /// Random initialization: every tensor uniform in `±1/√fan_in`, the
    /// forget-gate biases shifted by +1, decoder initial states zero.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        let mut g = rng(seed);
        let mut params = vec![0.0; layout.total()];
        for t in layout.tensors() {
            if t.fan_in == 0 {
                continue;
            }
            let bound = 1.0 / (t.fan_in as f64).sqrt();
            for p in &mut params[t.range()] {
                *p = g.random_range(-bound..bound);
            }
        }
        for slots in [layout.enc_fwd, layout.enc_bwd, layout.dec] {
            let h = slots.hidden;
            for p in &mut params[slots.bias + h..slots.bias + 2 * h] {
                *p += 1.0;
            }
        }
        Ok(Self { config, params })
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let n = ParamLayout::new(&config).total();
        Ok(Self {
            config,
            params: vec![0.0; n],
        })
    }

    pub fn from_params(config: ModelConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let n = ParamLayout::new(&config).total();
        if params.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "model needs {n} parameters, got {}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(&self.config)
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Cheap position-weighted checksum used to detect stale traces.
    pub(crate) fn fingerprint(&self) -> f64 {
        self.params
            .iter()
            .enumerate()
            .map(|(i, p)| p * (1 + i % 7) as f64)
            .sum()
    }
}

/// Gradient of the loss with respect to every parameter, same layout as the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<f64>);

impl Gradients {
    pub fn zeros_like(model: &VaeModel) -> Self {
        Gradients(vec![0.0; model.num_params()])
    }

    pub fn global_norm(&self) -> f64 {
        self.0.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, c: f64) {
        self.0.iter_mut().for_each(|g| *g *= c);
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|g| g.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_contiguous_and_named() {
        let cfg = ModelConfig {
            input_dim: 6,
            enc_hidden: 5,
            dec_hidden: 4,
            latent_dim: 3,
            num_nodes: 2,
            context_dim: 2,
        };
        let layout = ParamLayout::new(&cfg);
        let mut next = 0;
        for t in layout.tensors() {
            assert_eq!(t.offset, next);
            next += t.len();
        }
        assert_eq!(next, layout.total());
        let names: Vec<&str> = layout.tensors().iter().map(|t| t.name.as_str()).collect();
        assert_eq!(names[0], "encoder.fwd.w_ih");
        assert!(names.contains(&"node1.logvar.bias"));
        assert_eq!(*names.last().unwrap(), "init_cell");
        // decoder input is context + K·latent
        let dec = layout.tensors().iter().find(|t| t.name == "decoder.w_ih").unwrap();
        assert_eq!((dec.rows, dec.cols), (16, 8));
    }

    #[test]
    fn init_is_bounded_and_seeded() {
        let cfg = ModelConfig {
            input_dim: 8,
            enc_hidden: 4,
            dec_hidden: 4,
            latent_dim: 2,
            num_nodes: 1,
            context_dim: 2,
        };
        let a = VaeModel::new(cfg, 1).unwrap();
        let b = VaeModel::new(cfg, 1).unwrap();
        let c = VaeModel::new(cfg, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let layout = a.layout();
        let w = &layout.tensors()[0];
        let bound = 1.0 / (w.fan_in as f64).sqrt();
        assert!(a.params()[w.range()].iter().all(|p| p.abs() <= bound));
        let forget = &a.params()[layout.enc_fwd.bias + 4..layout.enc_fwd.bias + 8];
        assert!(forget.iter().all(|&p| p > 0.0));
        assert!(VaeModel::new(ModelConfig { num_nodes: 0, ..cfg }, 0).is_err());
    }
}
