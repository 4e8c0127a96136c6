//! Feature-extraction backbones mapping `[3, S, S]` images to `E`-dimensional points.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EmbeddingPoint;
use crate::config::{BackboneKind, RunConfig};
use crate::error::{Error, Result};
use crate::nn::{init_uniform, Layer, Sequential, Tensor};

/// Channel widths of the depthwise-separable backbone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct XceptionWidths {
    /// Two plain 3x3 convolutions; the first has stride 2.
    pub stem: [usize; 2],
    /// Downsampling residual blocks (separable convs + max pool, strided 1x1 shortcut).
    pub entry: Vec<usize>,
    /// Identity-shortcut residual blocks at the last entry width.
    pub middle_blocks: usize,
    /// Width of the final separable convolution before global pooling.
    pub exit: usize,
}

impl XceptionWidths {
    /// Scaled-down configuration suitable for CPU runs.
    pub fn desk() -> Self {
        XceptionWidths {
            stem: [8, 16],
            entry: vec![32, 64],
            middle_blocks: 1,
            exit: 96,
        }
    }

    /// Channel plan of the full-size network (entry 128/256/728, eight middle blocks,
    /// 2048-wide exit).
    pub fn full() -> Self {
        XceptionWidths {
            stem: [32, 64],
            entry: vec![128, 256, 728],
            middle_blocks: 8,
            exit: 2048,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneSpec {
    pub kind: BackboneKind,
    /// Side length of the square RGB input.
    pub input_size: usize,
    pub embedding_dim: usize,
    pub dropout_rate: f64,
    /// Only used by `XceptionAdapter`.
    pub xception: Option<XceptionWidths>,
}

impl BackboneSpec {
    pub fn from_config(config: &RunConfig) -> Self {
        BackboneSpec {
            kind: config.backbone,
            input_size: config.crop_size,
            embedding_dim: config.embedding_dim,
            dropout_rate: config.dropout_rate,
            xception: match config.backbone {
                BackboneKind::TinyConv => None,
                BackboneKind::XceptionAdapter => Some(XceptionWidths::desk()),
            },
        }
    }

    pub fn input_shape(&self) -> Vec<usize> {
        vec![3, self.input_size, self.input_size]
    }
}

fn separable(inp: usize, out: usize) -> [Layer; 2] {
    [Layer::depthwise(inp, 3, 1), Layer::conv2d(inp, out, 1, 1)]
}

/// Maps pixel values from `[0, 1]` to `[-1, 1]`.
const INPUT_RANGE: Layer = Layer::Affine {
    scale: 2.0,
    shift: -1.0,
};

fn tiny_conv_layers(spec: &BackboneSpec) -> Vec<Layer> {
    vec![
        INPUT_RANGE,
        Layer::conv2d(3, 8, 3, 2),
        Layer::Relu,
        Layer::conv2d(8, 16, 3, 2),
        Layer::Relu,
        Layer::conv2d(16, 32, 3, 2),
        Layer::Relu,
        Layer::GlobalAvgPool,
        Layer::Dropout {
            rate: spec.dropout_rate,
        },
        Layer::linear(32, spec.embedding_dim),
    ]
}

fn xception_layers(spec: &BackboneSpec, widths: &XceptionWidths) -> Vec<Layer> {
    let [s0, s1] = widths.stem;
    let mut layers = vec![
        INPUT_RANGE,
        Layer::conv2d(3, s0, 3, 2),
        Layer::Relu,
        Layer::conv2d(s0, s1, 3, 1),
        Layer::Relu,
    ];
    let mut width = s1;
    for (i, &next) in widths.entry.iter().enumerate() {
        let mut body = Vec::new();
        if i > 0 {
            body.push(Layer::Relu);
        }
        body.extend(separable(width, next));
        body.push(Layer::Relu);
        body.extend(separable(next, next));
        body.push(Layer::MaxPool2d {
            kernel: 3,
            stride: 2,
            padding: 1,
        });
        layers.push(Layer::Residual {
            body,
            shortcut: vec![Layer::conv2d(width, next, 1, 2)],
        });
        width = next;
    }
    for _ in 0..widths.middle_blocks {
        let mut body = Vec::new();
        for _ in 0..3 {
            body.push(Layer::Relu);
            body.extend(separable(width, width));
        }
        layers.push(Layer::Residual {
            body,
            shortcut: vec![],
        });
    }
    layers.extend(separable(width, widths.exit));
    layers.push(Layer::Relu);
    layers.push(Layer::GlobalAvgPool);
    // Replaced classification head: dropout followed by a single linear layer to E.
    layers.push(Layer::Dropout {
        rate: spec.dropout_rate,
    });
    layers.push(Layer::linear(widths.exit, spec.embedding_dim));
    layers
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Backbone {
    pub spec: BackboneSpec,
    pub net: Sequential,
}

impl Backbone {
    /// Architecture with every parameter set to zero.
    pub fn zeroed(spec: BackboneSpec) -> Result<Self> {
        if spec.embedding_dim < 1 {
            return Err(Error::InvalidConfig("embedding_dim must be at least 1".into()));
        }
        if spec.input_size < 8 {
            return Err(Error::InvalidConfig(format!(
                "backbone input size must be at least 8, got {}",
                spec.input_size
            )));
        }
        let layers = match spec.kind {
            BackboneKind::TinyConv => tiny_conv_layers(&spec),
            BackboneKind::XceptionAdapter => {
                let widths = spec.xception.clone().unwrap_or_else(XceptionWidths::desk);
                xception_layers(&spec, &widths)
            }
        };
        Ok(Backbone {
            spec,
            net: Sequential::new(layers),
        })
    }

    /// He-uniform convolutions, fan-in-uniform head, drawn from `seed`.
    pub fn init(spec: BackboneSpec, seed: u64) -> Result<Self> {
        let mut backbone = Backbone::zeroed(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = backbone.net.layers.len();
        let (body, head) = backbone.net.layers.split_at_mut(n - 1);
        init_uniform(body, 6f64.sqrt(), &mut rng);
        init_uniform(head, 1.0, &mut rng);
        Ok(backbone)
    }

    pub fn embedding_dim(&self) -> usize {
        self.spec.embedding_dim
    }

    pub fn check_input(&self, image: &Tensor) -> Result<()> {
        let expected = self.spec.input_shape();
        if image.shape != expected {
            return Err(Error::ShapeMismatch {
                expected: format!("{expected:?}"),
                actual: format!("{:?}", image.shape),
            });
        }
        Ok(())
    }

    /// Evaluation-mode embedding (dropout disabled).
    pub fn embed(&self, image: &Tensor) -> Result<EmbeddingPoint> {
        self.check_input(image)?;
        Ok(EmbeddingPoint::new(self.net.infer(image).data))
    }

    /// Replaces all parameters, e.g. with externally trained weights. Shapes must match.
    pub fn set_params(&mut self, params: &[Vec<f64>]) -> Result<()> {
        let mut slots = self.net.params_mut();
        if slots.len() != params.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} parameter tensors", slots.len()),
                actual: format!("{} parameter tensors", params.len()),
            });
        }
        for (i, (slot, src)) in slots.iter().zip(params).enumerate() {
            if slot.len() != src.len() {
                return Err(Error::ShapeMismatch {
                    expected: format!("parameter tensor {i} with {} values", slot.len()),
                    actual: format!("{} values", src.len()),
                });
            }
        }
        for (slot, src) in slots.iter_mut().zip(params) {
            slot.copy_from_slice(src);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(e: usize) -> BackboneSpec {
        BackboneSpec {
            kind: BackboneKind::TinyConv,
            input_size: 16,
            embedding_dim: e,
            dropout_rate: 0.5,
            xception: None,
        }
    }

    fn image(seed: u64, size: usize) -> Tensor {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor {
            shape: vec![3, size, size],
            data: (0..3 * size * size).map(|_| rng.random::<f64>()).collect(),
        }
    }

    #[test]
    fn zero_weights_embed_to_origin() {
        let b = Backbone::zeroed(tiny(2)).unwrap();
        assert_eq!(b.embed(&image(1, 16)).unwrap().coords, vec![0.0, 0.0]);
    }

    #[test]
    fn embedding_is_deterministic_and_has_dimension_e() {
        let b = Backbone::init(tiny(3), 11).unwrap();
        let x = image(2, 16);
        let p = b.embed(&x).unwrap();
        assert_eq!(p.dim(), 3);
        assert_eq!(p, b.embed(&x.clone()).unwrap());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let b = Backbone::init(tiny(2), 1).unwrap();
        assert!(matches!(
            b.embed(&image(1, 12)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn tiny_conv_layout() {
        let b = Backbone::zeroed(tiny(2)).unwrap();
        let names: Vec<_> = b.net.layers.iter().map(Layer::name).collect();
        assert_eq!(
            names,
            [
                "affine",
                "conv2d",
                "relu",
                "conv2d",
                "relu",
                "conv2d",
                "relu",
                "global_avg_pool",
                "dropout",
                "linear"
            ]
        );
        let shapes = b.net.trace_shapes(&image(0, 16));
        assert_eq!(shapes[0], vec![3, 16, 16]);
        assert_eq!(shapes[1], vec![8, 8, 8]);
        assert_eq!(shapes[3], vec![16, 4, 4]);
        assert_eq!(shapes[5], vec![32, 2, 2]);
        assert_eq!(shapes[9], vec![2]);
    }

    #[test]
    fn xception_head_is_dropout_then_single_linear() {
        let spec = BackboneSpec {
            kind: BackboneKind::XceptionAdapter,
            xception: Some(XceptionWidths {
                stem: [4, 6],
                entry: vec![8, 10],
                middle_blocks: 1,
                exit: 12,
            }),
            ..tiny(2)
        };
        let b = Backbone::init(spec, 4).unwrap();
        let n = b.net.layers.len();
        assert!(matches!(b.net.layers[n - 2], Layer::Dropout { rate } if rate == 0.5));
        match &b.net.layers[n - 1] {
            Layer::Linear(l) => assert_eq!((l.in_features, l.out_features), (12, 2)),
            other => panic!("unexpected head {other:?}"),
        }
        assert!(b
            .net
            .layers
            .iter()
            .any(|l| matches!(l, Layer::Residual { .. })));
        let p = b.embed(&image(3, 16)).unwrap();
        assert_eq!(p.dim(), 2);
        assert!(p.coords.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn set_params_checks_shapes() {
        let mut b = Backbone::zeroed(tiny(2)).unwrap();
        let donor = Backbone::init(tiny(2), 9).unwrap();
        let params: Vec<Vec<f64>> = donor.net.params().iter().map(|p| p.to_vec()).collect();
        b.set_params(&params).unwrap();
        assert_eq!(b, donor);
        assert!(b.set_params(&params[1..]).is_err());
    }
}
