//! Exact reverse-mode gradient of the multinode ELBO through both
//! recurrences, the reparameterized sampling and the context feedback path.

use super::forward::{ForwardTrace, SequenceTrace};
use super::kernels::{affine_backward, lstm_step_backward, LstmStepGrad};
use super::latent::LOGVAR_CLAMP;
use super::loss::check_weight;
use super::model::{Gradients, LstmSlots, VaeModel};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Normalizers of a batch loss: MSE is divided by `frames`, KL by
/// `frames · nodes`.
#[derive(Debug, Clone, Copy)]
pub struct LossScale {
    pub frames: usize,
    pub nodes: usize,
}

/// Gradient of the single-sequence ELBO total for the trace's input.
pub fn backward(
    model: &VaeModel,
    trace: &ForwardTrace,
    x: &Matrix,
    kl_weight: f64,
) -> Result<Gradients> {
    let scale = LossScale {
        frames: trace.frames(),
        nodes: model.config().num_nodes,
    };
    let mut grads = Gradients::zeros_like(model);
    backward_into(model, trace, x, kl_weight, scale, &mut grads)?;
    Ok(grads)
}

/// Accumulates this sequence's share of a batch-normalized ELBO gradient.
pub fn backward_into(
    model: &VaeModel,
    trace: &ForwardTrace,
    x: &Matrix,
    kl_weight: f64,
    scale: LossScale,
    grads: &mut Gradients,
) -> Result<()> {
    check_weight(kl_weight)?;
    if trace.config != *model.config() || trace.fingerprint != model.fingerprint() {
        return Err(Error::StaleTrace(
            "trace was produced by different parameters".into(),
        ));
    }
    if *x != trace.input {
        return Err(Error::StaleTrace("trace was produced for a different input".into()));
    }
    if grads.0.len() != model.num_params() {
        return Err(Error::ShapeMismatch("gradient buffer size".into()));
    }
    let frames = x.rows();
    let xr = trace.reconstruction();
    let mse_coef = 2.0 / scale.frames as f64;
    let d_xr = Matrix::from_fn(frames, x.cols(), |t, j| mse_coef * (xr[(t, j)] - x[(t, j)]));

    let kl_coef = kl_weight / (scale.frames * scale.nodes) as f64;
    let post = &trace.posterior;
    let d_mu: Vec<f64> = post.mu.data.iter().map(|m| kl_coef * m).collect();
    let d_lv: Vec<f64> = post
        .logvar
        .data
        .iter()
        .map(|lv| kl_coef * 0.5 * (lv.exp() - 1.0))
        .collect();
    backward_from(model, trace, &d_xr, d_mu, d_lv, grads);
    Ok(())
}

/// Backpropagates given upstream gradients on the reconstruction and on the
/// (clamped) posterior parameters.
pub(crate) fn backward_from(
    model: &VaeModel,
    trace: &ForwardTrace,
    d_xr: &Matrix,
    mut d_mu: Vec<f64>,
    mut d_lv: Vec<f64>,
    grads: &mut Gradients,
) {
    let cfg = *model.config();
    let layout = model.layout();
    let params = model.params();
    let g = &mut grads.0;
    let frames = trace.frames();
    let hd = cfg.dec_hidden;
    let cdim = cfg.context_dim;
    let width = cfg.latent_width();

    // Decoder, newest step first.
    let dec = &trace.decoder;
    let init_h = &params[layout.init_hidden..layout.init_hidden + hd];
    let init_c = &params[layout.init_cell..layout.init_cell + hd];
    let mut dh_carry = vec![0.0; hd];
    let mut dc = vec![0.0; hd];
    let mut dz = vec![0.0; frames * width];
    let mut da = vec![0.0; 4 * hd];
    let mut du = vec![0.0; cfg.decoder_input()];
    for t in (0..frames).rev() {
        let mut dh = dh_carry.clone();
        affine_backward(params, g, &layout.output, dec.lstm.h_at(t), d_xr.row(t), &mut dh);
        let (h_prev, c_prev) = if t == 0 {
            (init_h, init_c)
        } else {
            (dec.lstm.h_at(t - 1), dec.lstm.c_at(t - 1))
        };
        let step = LstmStepGrad {
            x: dec.inputs.row(t),
            h_prev,
            c_prev,
            gates: dec.lstm.gates_at(t),
            tanh_c: dec.lstm.tanh_c_at(t),
        };
        let mut dh_prev = vec![0.0; hd];
        du.iter_mut().for_each(|v| *v = 0.0);
        lstm_step_backward(
            params,
            g,
            &layout.dec,
            &step,
            &dh,
            &mut dc,
            &mut dh_prev,
            Some(&mut du),
            &mut da,
        );
        affine_backward(params, g, &layout.context, h_prev, &du[..cdim], &mut dh_prev);
        dz[t * width..(t + 1) * width].copy_from_slice(&du[cdim..]);
        dh_carry = dh_prev;
    }
    for (gi, d) in g[layout.init_hidden..layout.init_hidden + hd].iter_mut().zip(&dh_carry) {
        *gi += d;
    }
    for (gi, d) in g[layout.init_cell..layout.init_cell + hd].iter_mut().zip(&dc) {
        *gi += d;
    }

    // Reparameterization and logvar clamp.
    let post = &trace.posterior;
    for j in 0..dz.len() {
        let lv = post.logvar.data[j];
        d_mu[j] += dz[j];
        d_lv[j] += dz[j] * trace.noise.data[j] * 0.5 * (0.5 * lv).exp();
        let raw = trace.encoder.logvar_raw.data[j];
        if raw <= -LOGVAR_CLAMP || raw >= LOGVAR_CLAMP {
            d_lv[j] = 0.0;
        }
    }

    // Latent heads.
    let he = cfg.enc_hidden;
    let zd = cfg.latent_dim;
    let mut d_states = Matrix::zeros(frames, 2 * he);
    for t in 0..frames {
        let h = trace.encoder.states.row(t);
        let ds = d_states.row_mut(t);
        for k in 0..cfg.num_nodes {
            let off = (t * cfg.num_nodes + k) * zd;
            affine_backward(params, g, &layout.mu[k], h, &d_mu[off..off + zd], ds);
            affine_backward(params, g, &layout.logvar[k], h, &d_lv[off..off + zd], ds);
        }
    }

    // Encoder directions.
    let x = &trace.input;
    encoder_direction_backward(
        params,
        g,
        &layout.enc_fwd,
        &trace.encoder.forward,
        x,
        &d_states,
        0,
        false,
    );
    encoder_direction_backward(
        params,
        g,
        &layout.enc_bwd,
        &trace.encoder.backward,
        x,
        &d_states,
        he,
        true,
    );
}

#[allow(clippy::too_many_arguments)]
fn encoder_direction_backward(
    params: &[f64],
    g: &mut [f64],
    slots: &LstmSlots,
    seq: &SequenceTrace,
    x: &Matrix,
    d_states: &Matrix,
    offset: usize,
    reverse: bool,
) {
    let frames = x.rows();
    let hd = slots.hidden;
    let zeros = vec![0.0; hd];
    let mut dh_carry = vec![0.0; hd];
    let mut dc = vec![0.0; hd];
    let mut da = vec![0.0; 4 * hd];
    // Visit steps in the opposite order to the forward processing.
    let order: Vec<usize> = if reverse {
        (0..frames).collect()
    } else {
        (0..frames).rev().collect()
    };
    for t in order {
        let prev = if reverse {
            (t + 1 < frames).then_some(t + 1)
        } else {
            t.checked_sub(1)
        };
        let (h_prev, c_prev) = match prev {
            Some(p) => (seq.h_at(p), seq.c_at(p)),
            None => (zeros.as_slice(), zeros.as_slice()),
        };
        let dh: Vec<f64> = d_states.row(t)[offset..offset + hd]
            .iter()
            .zip(&dh_carry)
            .map(|(a, b)| a + b)
            .collect();
        let step = LstmStepGrad {
            x: x.row(t),
            h_prev,
            c_prev,
            gates: seq.gates_at(t),
            tanh_c: seq.tanh_c_at(t),
        };
        let mut dh_prev = vec![0.0; hd];
        lstm_step_backward(params, g, slots, &step, &dh, &mut dc, &mut dh_prev, None, &mut da);
        dh_carry = dh_prev;
    }
}
