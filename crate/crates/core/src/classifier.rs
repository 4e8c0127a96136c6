//! The linear classification network mapping embedding points to a real/fake decision.
//!
//! Layer list (output widths): Linear(2), ReLU, Linear(128), Linear(256), ReLU,
//! Linear(128), ReLU, Linear(2), LeakyReLU.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::manifest::Label;
use crate::nn::{accumulate, init_uniform, Layer, Sequential, Sgd, Tensor};
use crate::tripletnet::EmbeddingPoint;

pub const CLASSIFIER_FORMAT: &str = "facemanip-classifier/1";

/// Output width of every layer in order.
pub const LAYER_WIDTHS: [usize; 9] = [2, 2, 128, 256, 256, 128, 128, 2, 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub input_dim: usize,
    pub leaky_slope: f64,
}

impl ClassifierSpec {
    pub fn layers(&self) -> Vec<Layer> {
        vec![
            Layer::linear(self.input_dim, 2),
            Layer::Relu,
            Layer::linear(2, 128),
            Layer::linear(128, 256),
            Layer::Relu,
            Layer::linear(256, 128),
            Layer::Relu,
            Layer::linear(128, 2),
            Layer::LeakyRelu {
                slope: self.leaky_slope,
            },
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub spec: ClassifierSpec,
    pub net: Sequential,
}

/// Numerically stable `softmax(logits)[1]`.
pub fn fake_probability(logits: [f64; 2]) -> f64 {
    let z = logits[1] - logits[0];
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Label by argmax (exact ties go to REAL) and the softmax fake-score.
pub fn decide(logits: [f64; 2]) -> (Label, f64) {
    let label = if logits[1] > logits[0] {
        Label::Fake
    } else {
        Label::Real
    };
    (label, fake_probability(logits))
}

impl Classifier {
    pub fn zeroed(spec: ClassifierSpec) -> Self {
        Classifier {
            net: Sequential::new(spec.layers()),
            spec,
        }
    }

    /// Uniform fan-in initialization drawn from `seed`.
    pub fn init(spec: ClassifierSpec, seed: u64) -> Self {
        let mut c = Classifier::zeroed(spec);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        init_uniform(&mut c.net.layers, 6f64.sqrt(), &mut rng);
        c
    }

    /// [`Classifier::init`] followed by rescaling of the first and last linear layers
    /// to the training features. This is the starting point of [`train_classifier`].
    pub fn init_for(spec: ClassifierSpec, seed: u64, features: &[(EmbeddingPoint, Label)]) -> Self {
        let mut c = Classifier::init(spec, seed);
        if !features.is_empty() {
            fit_first_layer(&mut c, features);
            lift_logits(&mut c, features);
        }
        c
    }

    fn check(&self, point: &EmbeddingPoint) -> Result<()> {
        if point.dim() != self.spec.input_dim {
            return Err(Error::ShapeMismatch {
                expected: format!("{}-dimensional point", self.spec.input_dim),
                actual: format!("{}-dimensional point", point.dim()),
            });
        }
        Ok(())
    }

    pub fn forward(&self, point: &EmbeddingPoint) -> Result<[f64; 2]> {
        self.check(point)?;
        let y = self.net.infer(&Tensor::vector(point.coords.clone()));
        Ok([y.data[0], y.data[1]])
    }

    pub fn predict(&self, point: &EmbeddingPoint) -> Result<(Label, f64)> {
        Ok(decide(self.forward(point)?))
    }

    /// Output width after each of the nine layers.
    pub fn layer_widths(&self, point: &EmbeddingPoint) -> Result<Vec<usize>> {
        self.check(point)?;
        Ok(self
            .net
            .trace_shapes(&Tensor::vector(point.coords.clone()))
            .into_iter()
            .map(|s| s.iter().product())
            .collect())
    }
}

pub fn classifier_forward(params: &Classifier, point: &EmbeddingPoint) -> Result<[f64; 2]> {
    params.forward(point)
}

pub fn predict(params: &Classifier, point: &EmbeddingPoint) -> Result<(Label, f64)> {
    params.predict(point)
}

/// Cross-entropy of softmax(logits) against `label`, and its gradient w.r.t. the logits.
pub fn cross_entropy(logits: [f64; 2], label: Label) -> (f64, [f64; 2]) {
    let p_fake = fake_probability(logits);
    let probs = [1.0 - p_fake, p_fake];
    let t = label as usize;
    // log-softmax computed from the logit gap for stability
    let z = logits[1] - logits[0];
    let softplus = |v: f64| if v > 0.0 { v + (-v).exp().ln_1p() } else { v.exp().ln_1p() };
    let loss = if t == 1 { softplus(-z) } else { softplus(z) };
    let mut grad = probs;
    grad[t] -= 1.0;
    (loss, grad)
}

/// Rescales the first linear layer to the feature statistics so that each unit's
/// hyperplane passes through the feature mean at unit spread. Embeddings often sit in a
/// small cluster away from the origin, where a blind init can leave both units of the
/// width-2 ReLU bottleneck inactive for every sample.
fn fit_first_layer(classifier: &mut Classifier, features: &[(EmbeddingPoint, Label)]) {
    let n = features.len() as f64;
    let dim = classifier.spec.input_dim;
    let mean: Vec<f64> = (0..dim)
        .map(|k| features.iter().map(|(p, _)| p.coords[k]).sum::<f64>() / n)
        .collect();
    let spread: Vec<f64> = (0..dim)
        .map(|k| {
            let var = features
                .iter()
                .map(|(p, _)| (p.coords[k] - mean[k]).powi(2))
                .sum::<f64>()
                / n;
            if var > 1e-24 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let Some(Layer::Linear(first)) = classifier.net.layers.first_mut() else {
        return;
    };
    for o in 0..first.out_features {
        let row = &mut first.weight[o * dim..(o + 1) * dim];
        let mut offset = 0.0;
        for k in 0..dim {
            row[k] /= spread[k];
            offset += row[k] * mean[k];
        }
        first.bias[o] = -offset;
    }
}

/// Shifts the last linear layer's biases until every training logit starts positive.
/// A logit that is negative on all samples only receives the LeakyReLU slope as
/// gradient and barely moves.
fn lift_logits(classifier: &mut Classifier, features: &[(EmbeddingPoint, Label)]) {
    let n_layers = classifier.net.layers.len();
    let body = Sequential::new(classifier.net.layers[..n_layers - 1].to_vec());
    let mut lowest = [f64::INFINITY; 2];
    for (p, _) in features {
        let z = body.infer(&Tensor::vector(p.coords.clone()));
        for o in 0..2 {
            lowest[o] = lowest[o].min(z.data[o]);
        }
    }
    let Some(Layer::Linear(last)) = classifier.net.layers.get_mut(n_layers - 2) else {
        return;
    };
    for o in 0..2 {
        last.bias[o] += (0.5 - lowest[o]).max(0.0);
    }
}

#[derive(Debug, Clone)]
pub struct TrainedClassifier {
    pub classifier: Classifier,
    /// Mean cross-entropy per epoch.
    pub history: Vec<f64>,
}

/// Minibatch SGD with momentum on cross-entropy; the example order is reshuffled every
/// epoch from the seeded generator.
pub fn train_classifier(
    features: &[(EmbeddingPoint, Label)],
    config: &RunConfig,
) -> Result<TrainedClassifier> {
    config.validate()?;
    for label in Label::ALL {
        if !features.iter().any(|(_, l)| *l == label) {
            return Err(Error::SingleClass(format!(
                "classifier training needs {} examples",
                label.name()
            )));
        }
    }
    let dim = features[0].0.dim();
    if let Some((p, _)) = features.iter().find(|(p, _)| p.dim() != dim) {
        return Err(Error::ShapeMismatch {
            expected: format!("{dim}-dimensional features"),
            actual: format!("{}-dimensional feature", p.dim()),
        });
    }

    let spec = ClassifierSpec {
        input_dim: dim,
        leaky_slope: config.leaky_slope,
    };
    let mut classifier = Classifier::init_for(spec, config.seed, features);
    let mut opt = Sgd::new(config.stage2_lr, config.stage2_momentum);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut history = Vec::with_capacity(config.stage2_epochs);

    for _ in 0..config.stage2_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.stage2_batch) {
            let mut grads = classifier.net.zero_grads();
            for &i in chunk {
                let (point, label) = &features[i];
                let x = Tensor::vector(point.coords.clone());
                let (y, caches) = classifier.net.forward(&x, &mut crate::nn::Mode::Eval);
                let (loss, g) = cross_entropy([y.data[0], y.data[1]], *label);
                total += loss;
                let mut sample_grads = classifier.net.zero_grads();
                classifier
                    .net
                    .backward(&caches, &Tensor::vector(g.to_vec()), &mut sample_grads);
                accumulate(&mut grads, &sample_grads);
            }
            let scale = 1.0 / chunk.len() as f64;
            for g in grads.iter_mut().flatten() {
                *g *= scale;
            }
            opt.step(&mut classifier.net, &grads);
        }
        history.push(total / features.len() as f64);
    }
    Ok(TrainedClassifier {
        classifier,
        history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierCheckpoint {
    pub format: String,
    pub classifier: Classifier,
    pub config: RunConfig,
    pub seed: u64,
    pub history: Vec<f64>,
}

impl ClassifierCheckpoint {
    pub fn new(classifier: Classifier, config: &RunConfig, history: Vec<f64>) -> Self {
        ClassifierCheckpoint {
            format: CLASSIFIER_FORMAT.into(),
            classifier,
            config: config.clone(),
            seed: config.seed,
            history,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: ClassifierCheckpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if ckpt.format != CLASSIFIER_FORMAT {
            return Err(Error::Checkpoint(format!(
                "{}: expected format `{CLASSIFIER_FORMAT}`, found `{}`",
                path.display(),
                ckpt.format
            )));
        }
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x: f64, y: f64) -> EmbeddingPoint {
        EmbeddingPoint::new(vec![x, y])
    }

    fn spec() -> ClassifierSpec {
        ClassifierSpec {
            input_dim: 2,
            leaky_slope: 0.01,
        }
    }

    #[test]
    fn zero_network_gives_zero_logits_and_real_on_tie() {
        let c = Classifier::zeroed(spec());
        assert_eq!(c.forward(&pt(3.0, -2.0)).unwrap(), [0.0, 0.0]);
        assert_eq!(c.predict(&pt(3.0, -2.0)).unwrap(), (Label::Real, 0.5));
    }

    #[test]
    fn final_bias_passes_through_leaky_relu() {
        let mut c = Classifier::zeroed(spec());
        match &mut c.net.layers[7] {
            Layer::Linear(l) => l.bias = vec![1.0, -1.0],
            _ => unreachable!(),
        }
        assert_eq!(c.forward(&pt(0.3, 0.4)).unwrap(), [1.0, -0.01]);
    }

    #[test]
    fn hand_set_single_path_matches_layer_by_layer_composition() {
        // One active unit per layer: x -> L1 -> relu -> L2 -> L3 -> relu -> L4 -> relu -> L5 -> leaky.
        let mut c = Classifier::zeroed(spec());
        let set = |layer: &mut Layer, f: &dyn Fn(&mut crate::nn::Linear)| match layer {
            Layer::Linear(l) => f(l),
            _ => unreachable!(),
        };
        set(&mut c.net.layers[0], &|l| {
            l.weight[0] = 2.0; // h0 = 2 x0 - 1 x1 + 0.5
            l.weight[1] = -1.0;
            l.bias[0] = 0.5;
        });
        set(&mut c.net.layers[2], &|l| {
            l.weight[0] = 3.0; // unit 0 of 128 reads h0
            l.bias[0] = -1.0;
        });
        set(&mut c.net.layers[3], &|l| {
            l.weight[0] = -0.5; // unit 0 of 256, no activation before it
            l.bias[0] = 4.0;
        });
        set(&mut c.net.layers[5], &|l| {
            l.weight[0] = 1.5;
        });
        set(&mut c.net.layers[7], &|l| {
            l.weight[0] = 1.0; // logit 0 = u
            l.weight[128] = -2.0; // logit 1 = -2u + 0.25
            l.bias[1] = 0.25;
        });

        let (x0, x1) = (0.7, 0.2);
        let relu = |v: f64| v.max(0.0);
        let leaky = |v: f64| if v > 0.0 { v } else { 0.01 * v };
        let h1 = relu(2.0 * x0 - x1 + 0.5);
        let h2 = 3.0 * h1 - 1.0;
        let h3 = relu(-0.5 * h2 + 4.0);
        let h4 = relu(1.5 * h3);
        let expected = [leaky(h4), leaky(-2.0 * h4 + 0.25)];
        let got = c.forward(&pt(x0, x1)).unwrap();
        for i in 0..2 {
            assert!((got[i] - expected[i]).abs() < 1e-12, "{got:?} vs {expected:?}");
        }
    }

    #[test]
    fn layer_widths_follow_the_list() {
        let c = Classifier::init(spec(), 1);
        assert_eq!(c.layer_widths(&pt(0.1, 0.2)).unwrap(), LAYER_WIDTHS.to_vec());
    }

    #[test]
    fn strongly_fake_logits() {
        let (label, score) = decide([-5.0, 5.0]);
        assert_eq!(label, Label::Fake);
        // 1 / (1 + e^-10)
        assert!((score - 0.999_954_602_131_297_6).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        let c = Classifier::init(spec(), 1);
        assert!(matches!(
            c.forward(&EmbeddingPoint::new(vec![1.0, 2.0, 3.0])),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        for label in Label::ALL {
            let logits = [0.3, -1.2];
            let (_, g) = cross_entropy(logits, label);
            for i in 0..2 {
                let mut up = logits;
                up[i] += 1e-6;
                let mut down = logits;
                down[i] -= 1e-6;
                let fd = (cross_entropy(up, label).0 - cross_entropy(down, label).0) / 2e-6;
                assert!((fd - g[i]).abs() < 1e-8);
            }
        }
    }

    fn clusters() -> Vec<(EmbeddingPoint, Label)> {
        // 50 points around each of (+2, +2) and (-2, -2)
        (0..100)
            .map(|i| {
                let jitter = ((i * 37 % 11) as f64 - 5.0) * 0.05;
                if i % 2 == 0 {
                    (pt(2.0 + jitter, 2.0 - jitter), Label::Fake)
                } else {
                    (pt(-2.0 - jitter, -2.0 + jitter), Label::Real)
                }
            })
            .collect()
    }

    #[test]
    fn separated_clusters_reach_full_training_accuracy() {
        let config = RunConfig::default();
        let out = train_classifier(&clusters(), &config).unwrap();
        assert_eq!(out.history.len(), 50);
        let correct = clusters()
            .iter()
            .filter(|(p, l)| out.classifier.predict(p).unwrap().0 == *l)
            .count();
        assert_eq!(correct, 100);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let config = RunConfig {
            stage2_epochs: 0,
            seed: 5,
            ..RunConfig::default()
        };
        let out = train_classifier(&clusters(), &config).unwrap();
        assert_eq!(out.classifier, Classifier::init_for(spec(), 5, &clusters()));
        assert_ne!(out.classifier, Classifier::init(spec(), 5));
        assert!(out.history.is_empty());
    }

    #[test]
    fn training_is_bitwise_reproducible() {
        let config = RunConfig {
            stage2_epochs: 5,
            ..RunConfig::default()
        };
        let a = train_classifier(&clusters(), &config).unwrap();
        let b = train_classifier(&clusters(), &config).unwrap();
        assert_eq!(a.classifier, b.classifier);
        assert_eq!(
            a.history.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.history.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn single_class_input_is_rejected() {
        let only_fake: Vec<_> = clusters()
            .into_iter()
            .filter(|(_, l)| *l == Label::Fake)
            .collect();
        assert!(matches!(
            train_classifier(&only_fake, &RunConfig::default()),
            Err(Error::SingleClass(_))
        ));
    }
}
