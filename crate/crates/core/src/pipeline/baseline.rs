use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::classifier::{cross_entropy, fake_probability};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::manifest::{Label, Manifest, Split};
use crate::nn::{accumulate, Grads, Mode, Sgd, Tensor};
use crate::tripletnet::{load_sample, Backbone, BackboneSpec};

const SHUFFLE_STREAM: u64 = 3;
const DROPOUT_STREAM_BASE: u64 = 1 << 41;

#[derive(Debug, Clone)]
pub struct TrainedBaseline {
    /// Backbone whose two outputs are the real/fake logits.
    pub backbone: Backbone,
    /// Mean cross-entropy per epoch.
    pub history: Vec<f64>,
}

/// Backbone with a two-logit head, initialized from `config.seed`.
pub fn baseline_backbone(config: &RunConfig) -> Result<Backbone> {
    let spec = BackboneSpec {
        embedding_dim: 2,
        ..BackboneSpec::from_config(config)
    };
    Backbone::init(spec, config.seed)
}

/// Fake-probability of one image under a two-logit backbone.
pub fn baseline_score(backbone: &Backbone, image: &Tensor) -> Result<f64> {
    let logits = backbone.embed(image)?.coords;
    Ok(fake_probability([logits[0], logits[1]]))
}

/// Cross-entropy training of the two-logit backbone with the stage-1 schedule: every
/// epoch visits the shuffled TRAIN split once in minibatches of `stage1_batch` images.
pub fn train_backbone_only(manifest: &Manifest, config: &RunConfig) -> Result<TrainedBaseline> {
    config.validate()?;
    let mut backbone = baseline_backbone(config)?;
    let mut history = Vec::with_capacity(config.stage1_epochs);
    if config.stage1_epochs == 0 {
        return Ok(TrainedBaseline { backbone, history });
    }
    let mut train: Vec<usize> = manifest
        .samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.split == Split::Train)
        .map(|(i, _)| i)
        .collect();
    for label in Label::ALL {
        if !train.iter().any(|&i| manifest.samples[i].label == label) {
            return Err(Error::SingleClass(format!(
                "baseline training needs {} samples in the training split",
                label.name()
            )));
        }
    }

    let size = backbone.spec.input_size;
    let mut shuffle = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle.set_stream(SHUFFLE_STREAM);
    let mut opt = Sgd::new(config.stage1_lr, config.stage1_momentum);
    let mut visited: u64 = 0;

    for _ in 0..config.stage1_epochs {
        train.shuffle(&mut shuffle);
        let mut total = 0.0;
        for chunk in train.chunks(config.stage1_batch) {
            let jobs: Vec<(usize, u64)> = chunk
                .iter()
                .map(|&i| {
                    visited += 1;
                    (i, visited)
                })
                .collect();
            let results = jobs
                .par_iter()
                .map(|&(i, stream)| -> Result<(f64, Grads)> {
                    let x = load_sample(manifest, i, size)?;
                    backbone.check_input(&x)?;
                    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                    rng.set_stream(DROPOUT_STREAM_BASE + stream);
                    let (y, caches) = backbone.net.forward(&x, &mut Mode::Train(&mut rng));
                    let (loss, g) = cross_entropy([y.data[0], y.data[1]], manifest.samples[i].label);
                    let mut grads = backbone.net.zero_grads();
                    backbone
                        .net
                        .backward(&caches, &Tensor::vector(g.to_vec()), &mut grads);
                    Ok((loss, grads))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut grads = backbone.net.zero_grads();
            for (loss, g) in &results {
                total += loss;
                accumulate(&mut grads, g);
            }
            let scale = 1.0 / results.len() as f64;
            for g in grads.iter_mut().flatten() {
                *g *= scale;
            }
            opt.step(&mut backbone.net, &grads);
        }
        history.push(total / train.len() as f64);
    }
    Ok(TrainedBaseline { backbone, history })
}
