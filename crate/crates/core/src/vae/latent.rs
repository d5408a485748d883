use crate::error::{Error, Result};

/// Per-frame, per-node latent values laid out `[frames][nodes][latent_dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTensor {
    pub frames: usize,
    pub nodes: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl LatentTensor {
    pub fn zeros(frames: usize, nodes: usize, dim: usize) -> Self {
        Self {
            frames,
            nodes,
            dim,
            data: vec![0.0; frames * nodes * dim],
        }
    }

    pub fn from_vec(frames: usize, nodes: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != frames * nodes * dim {
            return Err(Error::ShapeMismatch(format!(
                "latent tensor {frames}x{nodes}x{dim} needs {} values, got {}",
                frames * nodes * dim,
                data.len()
            )));
        }
        Ok(Self {
            frames,
            nodes,
            dim,
            data,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.frames, self.nodes, self.dim)
    }

    /// All nodes of frame `t`, concatenated.
    pub fn frame(&self, t: usize) -> &[f64] {
        let w = self.nodes * self.dim;
        &self.data[t * w..(t + 1) * w]
    }

    pub fn node(&self, t: usize, k: usize) -> &[f64] {
        let start = (t * self.nodes + k) * self.dim;
        &self.data[start..start + self.dim]
    }
}

/// Diagonal Gaussian posterior `q(zₖ|x) = N(μₖ, exp(logvarₖ))` for each node and frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPosterior {
    pub mu: LatentTensor,
    /// Clamped to `[-LOGVAR_CLAMP, LOGVAR_CLAMP]`.
    pub logvar: LatentTensor,
}

/// Symmetric bound applied to every log-variance.
pub const LOGVAR_CLAMP: f64 = 10.0;

impl LatentPosterior {
    pub fn frames(&self) -> usize {
        self.mu.frames
    }

    pub fn nodes(&self) -> usize {
        self.mu.nodes
    }

    /// Posterior equal to the prior everywhere.
    pub fn prior(frames: usize, nodes: usize, dim: usize) -> Self {
        Self {
            mu: LatentTensor::zeros(frames, nodes, dim),
            logvar: LatentTensor::zeros(frames, nodes, dim),
        }
    }
}

/// Reparameterized draw `z = μ + exp(logvar/2) ⊙ ε`.
pub fn sample_latent(post: &LatentPosterior, noise: &LatentTensor) -> Result<LatentTensor> {
    if noise.shape() != post.mu.shape() || post.logvar.shape() != post.mu.shape() {
        return Err(Error::ShapeMismatch(format!(
            "noise {:?} vs posterior {:?}",
            noise.shape(),
            post.mu.shape()
        )));
    }
    let data = post
        .mu
        .data
        .iter()
        .zip(&post.logvar.data)
        .zip(&noise.data)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect();
    LatentTensor::from_vec(noise.frames, noise.nodes, noise.dim, data)
}
