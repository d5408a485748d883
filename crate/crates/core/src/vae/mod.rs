//! The multinode variational autoencoder: bidirectional LSTM encoder, one
//! Gaussian head pair per latent node, reparameterized sampling, an
//! autoregressive LSTM decoder with context feedback, the multinode ELBO and
//! its exact gradient.

mod backward;
mod forward;
mod kernels;
mod latent;
mod loss;
mod model;

pub use backward::{backward, backward_into, LossScale};
pub use forward::{
    decode, decode_traced, encode, forward, reconstruct, DecoderTrace, EncoderTrace, ForwardTrace,
    SequenceTrace,
};
pub use latent::{sample_latent, LatentPosterior, LatentTensor, LOGVAR_CLAMP};
pub use loss::{elbo_loss, kl_gaussian_standard, ElboLoss, LossSums};
pub use model::{Gradients, ModelConfig, ParamLayout, TensorSpec, VaeModel};
