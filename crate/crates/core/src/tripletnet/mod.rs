//! Feature-extraction stage: backbone, triplet distances, losses, sampling and training.
//!
//! For an anchor `x`, a same-class positive `x+` and an other-class negative `x-`, the
//! triplet network outputs `(|Net(x) - Net(x-)|, |Net(x) - Net(x+)|)`.

mod backbone;
mod checkpoint;
mod loss;
mod sampling;
mod train;

pub use backbone::{Backbone, BackboneSpec, XceptionWidths};
pub use checkpoint::{BackboneCheckpoint, BACKBONE_FORMAT};
pub use loss::{
    distances, loss, loss_distance_grad, loss_gradient, loss_margin, loss_softmax_ratio,
    TripletDistances, TripletGradient,
};
pub use sampling::{sample_triplet_indices, sample_triplets, Triplet, TripletIndex, TripletSampler};
pub use train::{steps_per_epoch, train_embedding, TrainedEmbedding};
pub(crate) use train::load_sample;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::Tensor;

/// A point in the embedding space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingPoint {
    pub coords: Vec<f64>,
}

impl EmbeddingPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        EmbeddingPoint { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|v| v.is_finite())
    }
}

/// Anchor, positive and negative images of one triplet.
#[derive(Debug, Clone, Copy)]
pub struct TripletImages<'a> {
    pub anchor: &'a Tensor,
    pub positive: &'a Tensor,
    pub negative: &'a Tensor,
}

pub fn embed(backbone: &Backbone, image: &Tensor) -> Result<EmbeddingPoint> {
    backbone.embed(image)
}

/// Evaluation-mode triplet forward pass returning `(d_neg, d_pos)`.
pub fn triplet_forward(backbone: &Backbone, images: TripletImages<'_>) -> Result<TripletDistances> {
    let a = backbone.embed(images.anchor)?;
    let p = backbone.embed(images.positive)?;
    let n = backbone.embed(images.negative)?;
    Ok(distances(&a, &p, &n))
}
