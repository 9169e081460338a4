//! Palette-invariant thermal embedding, gated RGB fusion and the composite
//! detection loss, at a scale small enough to verify every gradient.

mod detector;
mod encoder;
pub mod gradcheck;
mod losses;
mod model;
pub mod suite;

pub use detector::{Blob, Detection, Detector, DetectorConfig, DetectorInput, LogisticScore, ThresholdDetector};
pub use encoder::{encode, encode_with_cache, EncoderCache, ToyEncoderParams};
pub use gradcheck::gradient_check;
pub use suite::{loss_identities, run_gradient_suite, GradTerm, SuiteConfig, TermReport, SUITE_TOLERANCE};
pub use losses::{
    focal_loss, focal_loss_logit, gated_fuse, gated_fuse_backward, giou_loss, giou_loss_grad, palette_invariance_loss,
    palette_invariance_loss_grad, sigmoid, total_loss, BoundingBox, GateGrad, GateOutput, LossWeights,
    PaletteEmbeddingSet, PROB_EPS,
};
pub use model::{
    render_palette_inputs, synthetic_crops, train_toy, FusionModel, GATE_BIAS_INIT, LossBreakdown, ModelShape, Sample, TrainConfig,
    TrainReport,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("palette set needs at least 2 members, got {0}")]
    TooFewMembers(usize),
    #[error("degenerate bounding box {0:?}")]
    DegenerateBox([f64; 4]),
    #[error("invalid loss weights {0:?}")]
    Weights(LossWeights),
    #[error("loss became non-finite at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("non-finite loss during gradient check")]
    NonFiniteLoss,
    #[error("invalid argument: {0}")]
    Invalid(String),
}

/// Latent feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn distance(&self, other: &Embedding) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }
}

/// Linear gating layer: weight is `D x 2D` row-major, bias has length `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct GateParams {
    dim: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

impl GateParams {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            weight: vec![0.0; dim * 2 * dim],
            bias: vec![0.0; dim],
        }
    }

    pub fn from_parts(dim: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self, FusionError> {
        if weight.len() != dim * 2 * dim || bias.len() != dim {
            return Err(FusionError::Shape(format!(
                "gate of dimension {dim} needs {} weights and {dim} biases",
                2 * dim * dim
            )));
        }
        Ok(Self { dim, weight, bias })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn weight_row(&self, i: usize) -> &[f64] {
        &self.weight[i * 2 * self.dim..(i + 1) * 2 * self.dim]
    }

    pub fn weight_row_mut(&mut self, i: usize) -> &mut [f64] {
        let n = 2 * self.dim;
        &mut self.weight[i * n..(i + 1) * n]
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub(crate) fn flat_iter(&self) -> impl Iterator<Item = &f64> {
        self.weight.iter().chain(self.bias.iter())
    }

    pub(crate) fn flat_iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weight.iter_mut().chain(self.bias.iter_mut())
    }
}
