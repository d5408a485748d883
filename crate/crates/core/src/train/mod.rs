//! Training loop: seeded segment shuffling, Adam, exponential KL annealing,
//! per-epoch loss records and checkpoints.

mod adam;
mod checkpoint;
mod config;
mod trace;

pub use adam::{adam_step, adam_update, AdamParams, AdamState};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, write_atomic,
    CHECKPOINT_MAGIC,
};
pub use config::{anneal_weight, TrainConfig};
pub use trace::{EpochRecord, LossTrace, LOSS_CSV_HEADER};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::numerics::{fill_normal, rng, Matrix};
use crate::vae::{backward_into, forward, Gradients, LatentTensor, LossScale, LossSums, VaeModel};

impl TrainConfig {
    pub fn adam(&self) -> AdamParams {
        AdamParams {
            lr: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

/// Cuts each utterance (frames × bins) into consecutive segments of at most
/// `segment_frames` frames. The tail of an utterance becomes a shorter segment.
pub fn segment(utterances: &[Matrix], segment_frames: usize) -> Result<Vec<Matrix>> {
    if segment_frames == 0 {
        return Err(Error::InvalidArgument("segment_frames must be at least 1".into()));
    }
    let mut out = Vec::new();
    for u in utterances {
        let mut start = 0;
        while start < u.rows() {
            let end = (start + segment_frames).min(u.rows());
            let rows = (start..end).map(|t| u.row(t).to_vec()).collect::<Vec<_>>();
            out.push(Matrix::from_rows(&rows)?);
            start = end;
        }
    }
    Ok(out)
}

/// State handed to the per-epoch callback after the epoch's last update.
pub struct EpochEnd<'a> {
    pub record: EpochRecord,
    pub model: &'a VaeModel,
    pub optimizer: &'a AdamState,
}

/// Trains `model` on magnitude spectrograms (frames × bins), calling `on_epoch`
/// once per completed epoch. Returns the final model, optimizer and trace.
pub fn train_with<F>(
    mut model: VaeModel,
    data: &[Matrix],
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<(VaeModel, AdamState, LossTrace)>
where
    F: FnMut(EpochEnd<'_>) -> Result<()>,
{
    cfg.validate()?;
    let bins = model.config().input_dim;
    for (i, u) in data.iter().enumerate() {
        if u.cols() != bins {
            return Err(Error::ShapeMismatch(format!(
                "utterance {i} has {} bins, model expects {bins}",
                u.cols()
            )));
        }
        if !u.is_finite() {
            return Err(Error::NonFinite("training data"));
        }
    }
    let segments = segment(data, cfg.segment_frames)?;
    if segments.is_empty() {
        return Err(Error::InsufficientData("training set has no frames".into()));
    }

    let nodes = model.config().num_nodes;
    let dim = model.config().latent_dim;
    let hp = cfg.adam();
    let mut g = rng(cfg.seed);
    let mut state = AdamState::for_model(&model);
    let mut trace = LossTrace::default();
    let mut order: Vec<usize> = (0..segments.len()).collect();
    let mut grads = Gradients::zeros_like(&model);

    for epoch in 0..cfg.epochs {
        let kl_weight = anneal_weight(epoch, cfg)?;
        order.shuffle(&mut g);
        let mut epoch_sums = LossSums::default();

        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let scale = LossScale {
                frames: idx.iter().map(|&i| segments[i].rows()).sum(),
                nodes,
            };
            grads.0.iter_mut().for_each(|v| *v = 0.0);
            let mut batch_sums = LossSums::default();
            for &i in idx {
                let x = &segments[i];
                let noise = LatentTensor::from_vec(
                    x.rows(),
                    nodes,
                    dim,
                    fill_normal(&mut g, x.rows() * nodes * dim),
                )?;
                let fwd = forward(&model, x, &noise)?;
                batch_sums.merge(&LossSums::of(x, fwd.reconstruction(), &fwd.posterior)?);
                backward_into(&model, &fwd, x, kl_weight, scale, &mut grads)?;
            }
            let loss = batch_sums.finish(kl_weight);
            if !loss.total.is_finite() || !grads.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch,
                    mse: loss.mse,
                    kl: loss.kl,
                });
            }
            if let Some(clip) = cfg.clip_norm {
                let norm = grads.global_norm();
                if norm > clip {
                    grads.scale(clip / norm);
                }
            }
            adam_step(&mut model, &grads, &mut state, hp)?;
            epoch_sums.merge(&batch_sums);
        }

        let loss = epoch_sums.finish(kl_weight);
        let record = EpochRecord {
            epoch,
            mse: loss.mse,
            kl: loss.kl,
            kl_weight,
        };
        log::info!(
            "epoch {epoch}: mse {:.4} kl {:.4} weight {:.3e}",
            record.mse,
            record.kl,
            kl_weight
        );
        trace.records.push(record);
        on_epoch(EpochEnd {
            record,
            model: &model,
            optimizer: &state,
        })?;
    }
    Ok((model, state, trace))
}

/// Result of [`train`]: one model snapshot per epoch plus the loss trace.
pub struct TrainOutput {
    pub checkpoints: Vec<VaeModel>,
    pub trace: LossTrace,
    pub optimizer: AdamState,
}

/// Trains and keeps every per-epoch model in memory.
pub fn train(model: VaeModel, data: &[Matrix], cfg: &TrainConfig) -> Result<TrainOutput> {
    let mut checkpoints = Vec::with_capacity(cfg.epochs);
    let (_, optimizer, trace) = train_with(model, data, cfg, |end| {
        checkpoints.push(end.model.clone());
        Ok(())
    })?;
    Ok(TrainOutput {
        checkpoints,
        trace,
        optimizer,
    })
}
