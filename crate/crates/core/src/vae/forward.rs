//! Forward computation of the multinode VAE.
//!
//! Encoder: forward and backward LSTMs over the input frames, concatenated
//! per frame and mapped by one (μ, logvar) affine pair per node. Decoder: a
//! unidirectional LSTM whose step `t` consumes `[φᵗ; z₁ᵗ; …; z_Kᵗ]` with
//! `φᵗ = context(h^{t−1})`, starting from the learned initial states; each
//! hidden state is mapped to a reconstructed frame by the output head.

use super::kernels::{Affine, Lstm};
use super::latent::{sample_latent, LatentPosterior, LatentTensor, LOGVAR_CLAMP};
use super::model::{LstmSlots, ModelConfig, VaeModel};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Activations of one LSTM over a sequence, indexed by time.
#[derive(Debug, Clone)]
pub struct SequenceTrace {
    pub hidden: usize,
    /// `T × 4H`, activated gates `[i, f, g, o]`.
    pub gates: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

impl SequenceTrace {
    fn new(frames: usize, hidden: usize) -> Self {
        Self {
            hidden,
            gates: vec![0.0; frames * 4 * hidden],
            c: vec![0.0; frames * hidden],
            tanh_c: vec![0.0; frames * hidden],
            h: vec![0.0; frames * hidden],
        }
    }

    pub fn h_at(&self, t: usize) -> &[f64] {
        &self.h[t * self.hidden..(t + 1) * self.hidden]
    }

    pub fn c_at(&self, t: usize) -> &[f64] {
        &self.c[t * self.hidden..(t + 1) * self.hidden]
    }

    pub fn tanh_c_at(&self, t: usize) -> &[f64] {
        &self.tanh_c[t * self.hidden..(t + 1) * self.hidden]
    }

    pub fn gates_at(&self, t: usize) -> &[f64] {
        let w = 4 * self.hidden;
        &self.gates[t * w..(t + 1) * w]
    }

    fn step(&mut self, lstm: &Lstm<'_>, t: usize, x: &[f64], h_prev: &[f64], c_prev: &[f64]) {
        let hd = self.hidden;
        let gates = &mut self.gates[t * 4 * hd..(t + 1) * 4 * hd];
        let c = &mut self.c[t * hd..(t + 1) * hd];
        let tanh_c = &mut self.tanh_c[t * hd..(t + 1) * hd];
        let h = &mut self.h[t * hd..(t + 1) * hd];
        lstm.step(x, h_prev, c_prev, gates, c, tanh_c, h);
    }
}

/// Everything the encoder computed for one sequence.
#[derive(Debug, Clone)]
pub struct EncoderTrace {
    pub forward: SequenceTrace,
    /// Stored by time index; step `t` consumed the state of `t + 1`.
    pub backward: SequenceTrace,
    /// `T × 2H`, `[h_fwd; h_bwd]` per frame.
    pub states: Matrix,
    /// Log-variances before clamping.
    pub logvar_raw: LatentTensor,
}

/// Everything the decoder computed for one sequence.
#[derive(Debug, Clone)]
pub struct DecoderTrace {
    pub lstm: SequenceTrace,
    /// `T × (context + K·latent)` step inputs.
    pub inputs: Matrix,
    pub reconstruction: Matrix,
}

/// Full record of a training-mode forward pass, sufficient for exact BPTT.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub(crate) config: ModelConfig,
    pub(crate) fingerprint: f64,
    pub input: Matrix,
    pub encoder: EncoderTrace,
    pub posterior: LatentPosterior,
    pub noise: LatentTensor,
    pub z: LatentTensor,
    pub decoder: DecoderTrace,
}

impl ForwardTrace {
    pub fn reconstruction(&self) -> &Matrix {
        &self.decoder.reconstruction
    }

    pub fn frames(&self) -> usize {
        self.input.rows()
    }
}

fn check_input(cfg: &ModelConfig, x: &Matrix) -> Result<()> {
    if x.cols() != cfg.input_dim {
        return Err(Error::ShapeMismatch(format!(
            "input has {} bins, model expects {}",
            x.cols(),
            cfg.input_dim
        )));
    }
    if x.rows() == 0 {
        return Err(Error::ShapeMismatch("input has no frames".into()));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("model input"));
    }
    Ok(())
}

fn run_direction(
    params: &[f64],
    slots: &LstmSlots,
    x: &Matrix,
    reverse: bool,
) -> SequenceTrace {
    let frames = x.rows();
    let hd = slots.hidden;
    let lstm = Lstm::view(params, slots);
    let mut trace = SequenceTrace::new(frames, hd);
    let zeros = vec![0.0; hd];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..frames).rev())
    } else {
        Box::new(0..frames)
    };
    let mut prev: Option<usize> = None;
    for t in order {
        let (h_prev, c_prev) = match prev {
            Some(p) => (trace.h_at(p).to_vec(), trace.c_at(p).to_vec()),
            None => (zeros.clone(), zeros.clone()),
        };
        trace.step(&lstm, t, x.row(t), &h_prev, &c_prev);
        prev = Some(t);
    }
    trace
}

/// Runs the bidirectional encoder and the per-node latent heads.
pub fn encode(model: &VaeModel, x: &Matrix) -> Result<(LatentPosterior, EncoderTrace)> {
    let cfg = *model.config();
    check_input(&cfg, x)?;
    let layout = model.layout();
    let params = model.params();
    let frames = x.rows();
    let he = cfg.enc_hidden;

    let forward = run_direction(params, &layout.enc_fwd, x, false);
    let backward = run_direction(params, &layout.enc_bwd, x, true);
    let mut states = Matrix::zeros(frames, 2 * he);
    for t in 0..frames {
        let row = states.row_mut(t);
        row[..he].copy_from_slice(forward.h_at(t));
        row[he..].copy_from_slice(backward.h_at(t));
    }

    let (k_nodes, zd) = (cfg.num_nodes, cfg.latent_dim);
    let mut mu = LatentTensor::zeros(frames, k_nodes, zd);
    let mut logvar = LatentTensor::zeros(frames, k_nodes, zd);
    let mut logvar_raw = LatentTensor::zeros(frames, k_nodes, zd);
    for t in 0..frames {
        let h = states.row(t);
        for k in 0..k_nodes {
            let off = (t * k_nodes + k) * zd;
            Affine::view(params, &layout.mu[k]).apply(h, &mut mu.data[off..off + zd]);
            Affine::view(params, &layout.logvar[k]).apply(h, &mut logvar_raw.data[off..off + zd]);
            for j in off..off + zd {
                logvar.data[j] = logvar_raw.data[j].clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP);
            }
        }
    }
    Ok((
        LatentPosterior { mu, logvar },
        EncoderTrace {
            forward,
            backward,
            states,
            logvar_raw,
        },
    ))
}

fn check_latent(cfg: &ModelConfig, z: &LatentTensor, frames: usize) -> Result<()> {
    if z.nodes != cfg.num_nodes || z.dim != cfg.latent_dim || z.frames < frames {
        return Err(Error::ShapeMismatch(format!(
            "latent {:?} cannot drive {frames} frames of a {}-node, {}-dim model",
            z.shape(),
            cfg.num_nodes,
            cfg.latent_dim
        )));
    }
    Ok(())
}

/// Autoregressive decoder; returns the full decoder trace.
pub fn decode_traced(model: &VaeModel, z: &LatentTensor, frames: usize) -> Result<DecoderTrace> {
    let cfg = *model.config();
    check_latent(&cfg, z, frames)?;
    let layout = model.layout();
    let params = model.params();
    let hd = cfg.dec_hidden;
    let cdim = cfg.context_dim;
    let lstm = Lstm::view(params, &layout.dec);
    let context = Affine::view(params, &layout.context);
    let output = Affine::view(params, &layout.output);

    let mut trace = SequenceTrace::new(frames, hd);
    let mut inputs = Matrix::zeros(frames, cfg.decoder_input());
    let mut reconstruction = Matrix::zeros(frames, cfg.input_dim);
    let init_h = &params[layout.init_hidden..layout.init_hidden + hd];
    let init_c = &params[layout.init_cell..layout.init_cell + hd];
    for t in 0..frames {
        let (h_prev, c_prev) = if t == 0 {
            (init_h.to_vec(), init_c.to_vec())
        } else {
            (trace.h_at(t - 1).to_vec(), trace.c_at(t - 1).to_vec())
        };
        {
            let u = inputs.row_mut(t);
            context.apply(&h_prev, &mut u[..cdim]);
            u[cdim..].copy_from_slice(z.frame(t));
        }
        trace.step(&lstm, t, inputs.row(t), &h_prev, &c_prev);
        output.apply(trace.h_at(t), reconstruction.row_mut(t));
    }
    Ok(DecoderTrace {
        lstm: trace,
        inputs,
        reconstruction,
    })
}

/// Reconstruction `frames × input_dim` from latent values.
pub fn decode(model: &VaeModel, z: &LatentTensor, frames: usize) -> Result<Matrix> {
    Ok(decode_traced(model, z, frames)?.reconstruction)
}

/// Training-mode forward pass with an explicit noise tensor.
pub fn forward(model: &VaeModel, x: &Matrix, noise: &LatentTensor) -> Result<ForwardTrace> {
    let (posterior, encoder) = encode(model, x)?;
    let z = sample_latent(&posterior, noise)?;
    let decoder = decode_traced(model, &z, x.rows())?;
    Ok(ForwardTrace {
        config: *model.config(),
        fingerprint: model.fingerprint(),
        input: x.clone(),
        encoder,
        posterior,
        noise: noise.clone(),
        z,
        decoder,
    })
}

/// Inference-mode reconstruction: decodes the posterior means.
pub fn reconstruct(model: &VaeModel, x: &Matrix) -> Result<Matrix> {
    let (posterior, _) = encode(model, x)?;
    decode(model, &posterior.mu, x.rows())
}
