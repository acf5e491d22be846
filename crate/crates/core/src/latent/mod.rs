//! Latent-space surrogate: a fixed injective encoder over Dubins states,
//! oracle sessions that expose only latents, and the trainable failure projector.

mod encoder;
mod pairs;
mod projector;
mod session;

pub use encoder::{Encoder, EncoderConfig};
pub use pairs::PairSampler;
pub use projector::{
    heading_invariance, latent_margin, train_projector, train_projector_on_states,
    FailureProjector, ProjectorReport, ProjectorTrainConfig, SimilarityModel, PROJECTED_DIM,
};
pub use session::LatentSession;

/// Encoder output; every component lies in `(−1, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVec(pub Vec<f32>);

/// Projector output.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedVec(pub Vec<f32>);

impl LatentVec {
    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl ProjectedVec {
    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }
}
