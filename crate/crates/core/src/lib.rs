//! Speech and background-music separation with a multinode recurrent VAE
//! followed by robust PCA masking.
//!
//! [`signal`] handles WAV and STFT, [`numerics`] the dense linear algebra,
//! [`vae`] the model and its gradients, and [`train`] the optimization loop.
//! [`window`] picks the separation epochs from the loss trace, [`nodes`]
//! estimates how many latent nodes the data calls for, and [`rpca`] turns a
//! model output into a soft mask. [`pipeline`] wires them into the commands
//! of the `unmix` binary; [`synth`] and [`eval`] provide test corpora and
//! SI-SDR scoring.

pub mod error;
pub mod eval;
pub mod nodes;
pub mod numerics;
pub mod pipeline;
pub mod rpca;
pub mod signal;
pub mod synth;
pub mod train;
pub mod vae;
pub mod window;

pub use error::{Error, Result};
