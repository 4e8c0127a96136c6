//! Triplet distances, the two loss variants and their gradients with respect to the
//! three embedding points.

use serde::{Deserialize, Serialize};

use super::EmbeddingPoint;
use crate::config::LossKind;

/// `(d_neg, d_pos)`: anchor-to-negative and anchor-to-positive Euclidean distances,
/// in that order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripletDistances {
    pub d_neg: f64,
    pub d_pos: f64,
}

impl TripletDistances {
    pub fn as_array(&self) -> [f64; 2] {
        [self.d_neg, self.d_pos]
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn distances(
    anchor: &EmbeddingPoint,
    positive: &EmbeddingPoint,
    negative: &EmbeddingPoint,
) -> TripletDistances {
    TripletDistances {
        d_neg: euclidean(&anchor.coords, &negative.coords),
        d_pos: euclidean(&anchor.coords, &positive.coords),
    }
}

/// `sigmoid(z)` without overflow for large `|z|`.
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `(e^{d_pos} / (e^{d_pos} + e^{d_neg}))^2`.
pub fn loss_softmax_ratio(d: &TripletDistances) -> f64 {
    let s = sigmoid(d.d_pos - d.d_neg);
    s * s
}

/// `max(0, d_pos - d_neg + margin)`.
pub fn loss_margin(d: &TripletDistances, margin: f64) -> f64 {
    (d.d_pos - d.d_neg + margin).max(0.0)
}

pub fn loss(kind: LossKind, d: &TripletDistances, margin: f64) -> f64 {
    match kind {
        LossKind::SoftmaxRatio => loss_softmax_ratio(d),
        LossKind::Margin => loss_margin(d, margin),
    }
}

/// `(dL/d d_neg, dL/d d_pos)`. The hinge uses a zero subgradient at its kink.
pub fn loss_distance_grad(kind: LossKind, d: &TripletDistances, margin: f64) -> (f64, f64) {
    match kind {
        LossKind::SoftmaxRatio => {
            let s = sigmoid(d.d_pos - d.d_neg);
            // d(s^2)/dz = 2 s * s (1 - s), with z = d_pos - d_neg
            let g = 2.0 * s * s * (1.0 - s);
            (-g, g)
        }
        LossKind::Margin => {
            if d.d_pos - d.d_neg + margin > 0.0 {
                (-1.0, 1.0)
            } else {
                (0.0, 0.0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletGradient {
    pub loss: f64,
    pub anchor: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

/// Unit vector `(a - b) / |a - b|`, or zero when the points coincide.
fn direction(a: &[f64], b: &[f64], dist: f64) -> Vec<f64> {
    if dist == 0.0 {
        return vec![0.0; a.len()];
    }
    a.iter().zip(b).map(|(x, y)| (x - y) / dist).collect()
}

/// Loss and its gradient with respect to the anchor, positive and negative embeddings.
pub fn loss_gradient(
    kind: LossKind,
    margin: f64,
    anchor: &EmbeddingPoint,
    positive: &EmbeddingPoint,
    negative: &EmbeddingPoint,
) -> TripletGradient {
    let d = distances(anchor, positive, negative);
    let (g_neg, g_pos) = loss_distance_grad(kind, &d, margin);
    let u_pos = direction(&anchor.coords, &positive.coords, d.d_pos);
    let u_neg = direction(&anchor.coords, &negative.coords, d.d_neg);
    TripletGradient {
        loss: loss(kind, &d, margin),
        anchor: u_pos
            .iter()
            .zip(&u_neg)
            .map(|(p, n)| g_pos * p + g_neg * n)
            .collect(),
        positive: u_pos.iter().map(|p| -g_pos * p).collect(),
        negative: u_neg.iter().map(|n| -g_neg * n).collect(),
    }
}
