//! Minimal CPU network building blocks: sequential layer stacks, manual backprop
//! and SGD with momentum. Everything is f64 and deterministic.

mod layers;
mod tensor;

pub use layers::{
    backward_all, count_param_tensors, forward_all, init_uniform, Cache, Conv2d, DepthwiseConv2d,
    Layer, Linear, Mode,
};
pub use tensor::Tensor;

use serde::{Deserialize, Serialize};

/// Gradient buffers, one per parameter tensor in traversal order.
pub type Grads = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Sequential { layers }
    }

    pub fn forward(&self, x: &Tensor, mode: &mut Mode<'_>) -> (Tensor, Vec<Cache>) {
        forward_all(&self.layers, x, mode)
    }

    pub fn infer(&self, x: &Tensor) -> Tensor {
        forward_all(&self.layers, x, &mut Mode::Eval).0
    }

    /// Output shape after every top-level layer, in evaluation mode.
    pub fn trace_shapes(&self, x: &Tensor) -> Vec<Vec<usize>> {
        let mut cur = x.clone();
        let mut shapes = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            cur = layer.forward(&cur, &mut Mode::Eval).0;
            shapes.push(cur.shape.clone());
        }
        shapes
    }

    pub fn backward(&self, caches: &[Cache], gy: &Tensor, grads: &mut Grads) -> Tensor {
        backward_all(&self.layers, caches, gy, grads)
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in &self.layers {
            l.collect_params(&mut out);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            l.collect_params_mut(&mut out);
        }
        out
    }

    pub fn zero_grads(&self) -> Grads {
        self.params().iter().map(|p| vec![0.0; p.len()]).collect()
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params().iter().all(|p| p.iter().all(|v| v.is_finite()))
    }
}

/// Sums `src` into `dst` elementwise.
pub fn accumulate(dst: &mut Grads, src: &Grads) {
    for (d, s) in dst.iter_mut().zip(src) {
        for (a, b) in d.iter_mut().zip(s) {
            *a += b;
        }
    }
}

/// Plain SGD with classical momentum: `v = mu * v + g; p -= lr * v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    velocity: Option<Grads>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Sgd {
            lr,
            momentum,
            velocity: None,
        }
    }

    pub fn step(&mut self, net: &mut Sequential, grads: &Grads) {
        let velocity = self
            .velocity
            .get_or_insert_with(|| grads.iter().map(|g| vec![0.0; g.len()]).collect());
        for ((param, grad), vel) in net.params_mut().into_iter().zip(grads).zip(velocity) {
            for ((p, g), v) in param.iter_mut().zip(grad).zip(vel.iter_mut()) {
                *v = self.momentum * *v + g;
                *p -= self.lr * *v;
            }
        }
    }
}
