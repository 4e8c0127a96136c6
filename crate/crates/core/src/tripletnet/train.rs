use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::backbone::Backbone;
use super::loss::loss_gradient;
use super::sampling::{TripletIndex, TripletSampler};
use super::EmbeddingPoint;
use crate::config::RunConfig;
use crate::data::load_image;
use crate::error::Result;
use crate::manifest::Manifest;
use crate::nn::{accumulate, Grads, Mode, Sgd, Tensor};

/// Stream offsets keeping triplet sampling and dropout masks on independent RNG streams.
const DROPOUT_STREAM_BASE: u64 = 1 << 40;

#[derive(Debug, Clone)]
pub struct TrainedEmbedding {
    pub backbone: Backbone,
    /// Mean triplet loss per epoch.
    pub history: Vec<f64>,
}

/// Number of optimizer steps per epoch: one anchor per TRAIN sample on average.
pub fn steps_per_epoch(train_len: usize, batch: usize) -> usize {
    train_len.div_ceil(batch).max(1)
}

pub(crate) fn load_sample(manifest: &Manifest, index: usize, size: usize) -> Result<Tensor> {
    load_image(&manifest.resolve(&manifest.samples[index]), size)
}

fn triplet_step(
    backbone: &Backbone,
    manifest: &Manifest,
    config: &RunConfig,
    triplet: TripletIndex,
    dropout_stream: u64,
) -> Result<(f64, Grads)> {
    let size = backbone.spec.input_size;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(DROPOUT_STREAM_BASE + dropout_stream);

    let mut forward = |index: usize| -> Result<_> {
        let x = load_sample(manifest, index, size)?;
        backbone.check_input(&x)?;
        Ok(backbone.net.forward(&x, &mut Mode::Train(&mut rng)))
    };
    let (ya, ca) = forward(triplet.anchor)?;
    let (yp, cp) = forward(triplet.positive)?;
    let (yn, cn) = forward(triplet.negative)?;

    let g = loss_gradient(
        config.loss_kind,
        config.margin,
        &EmbeddingPoint::new(ya.data),
        &EmbeddingPoint::new(yp.data),
        &EmbeddingPoint::new(yn.data),
    );
    let mut grads = backbone.net.zero_grads();
    for (cache, grad) in [(&ca, g.anchor), (&cp, g.positive), (&cn, g.negative)] {
        backbone
            .net
            .backward(cache, &Tensor::vector(grad), &mut grads);
    }
    Ok((g.loss, grads))
}

/// Stochastic gradient descent on freshly sampled triplet batches.
///
/// Each epoch runs `steps_per_epoch(n_train, stage1_batch)` steps; a step draws
/// `stage1_batch` triplets, averages their loss gradients and applies one SGD update.
/// Per-triplet work runs in parallel and is reduced in batch order, so results are
/// bit-reproducible for a given seed.
pub fn train_embedding(
    manifest: &Manifest,
    backbone: Backbone,
    config: &RunConfig,
) -> Result<TrainedEmbedding> {
    config.validate()?;
    let mut backbone = backbone;
    let mut history = Vec::with_capacity(config.stage1_epochs);
    if config.stage1_epochs == 0 {
        return Ok(TrainedEmbedding { backbone, history });
    }

    let sampler = TripletSampler::new(manifest)?;
    let steps = steps_per_epoch(sampler.train_len(), config.stage1_batch);
    let mut triplet_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = Sgd::new(config.stage1_lr, config.stage1_momentum);
    let mut drawn: u64 = 0;

    for _epoch in 0..config.stage1_epochs {
        let mut epoch_loss = 0.0;
        for _ in 0..steps {
            let batch: Vec<(TripletIndex, u64)> = (0..config.stage1_batch)
                .map(|_| {
                    drawn += 1;
                    (sampler.draw(manifest, &mut triplet_rng), drawn)
                })
                .collect();
            let results = batch
                .par_iter()
                .map(|&(t, stream)| triplet_step(&backbone, manifest, config, t, stream))
                .collect::<Result<Vec<_>>>()?;

            let mut grads = backbone.net.zero_grads();
            let mut batch_loss = 0.0;
            for (loss, g) in &results {
                batch_loss += loss;
                accumulate(&mut grads, g);
            }
            let scale = 1.0 / results.len() as f64;
            for g in grads.iter_mut().flatten() {
                *g *= scale;
            }
            opt.step(&mut backbone.net, &grads);
            epoch_loss += batch_loss * scale;
        }
        history.push(epoch_loss / steps as f64);
    }
    Ok(TrainedEmbedding { backbone, history })
}
