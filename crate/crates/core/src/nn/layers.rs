//! Layers with explicit forward caches and hand-derived backward passes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// `[out, in, k, k]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Per-channel spatial convolution (one `k x k` filter per input channel).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthwiseConv2d {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// `[channels, k, k]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub in_features: usize,
    pub out_features: usize,
    /// `[out, in]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    /// Fixed elementwise `scale * x + shift`, e.g. input range normalization.
    Affine {
        scale: f64,
        shift: f64,
    },
    Conv2d(Conv2d),
    DepthwiseConv2d(DepthwiseConv2d),
    MaxPool2d {
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    LeakyRelu {
        slope: f64,
    },
    GlobalAvgPool,
    Dropout {
        rate: f64,
    },
    Linear(Linear),
    /// `body(x) + shortcut(x)`; an empty shortcut is the identity.
    Residual {
        body: Vec<Layer>,
        shortcut: Vec<Layer>,
    },
}

#[derive(Debug, Clone)]
pub enum Cache {
    Input(Tensor),
    MaxPool { argmax: Vec<usize>, in_shape: Vec<usize> },
    Shape(Vec<usize>),
    Mask(Vec<f64>),
    Residual { body: Vec<Cache>, shortcut: Vec<Cache> },
}

/// Inference mode disables dropout; training mode draws dropout masks from the given RNG.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut dyn rand::RngCore),
}

fn out_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    (input + 2 * padding - kernel) / stride + 1
}

impl Conv2d {
    fn forward(&self, x: &Tensor) -> Tensor {
        let (c, h, w) = x.chw();
        debug_assert_eq!(c, self.in_channels);
        let (k, s, p) = (self.kernel, self.stride, self.padding);
        let (oh, ow) = (out_dim(h, k, s, p), out_dim(w, k, s, p));
        let mut y = vec![0.0; self.out_channels * oh * ow];
        for oc in 0..self.out_channels {
            let out = &mut y[oc * oh * ow..(oc + 1) * oh * ow];
            out.fill(self.bias[oc]);
            for ic in 0..c {
                let plane = &x.data[ic * h * w..(ic + 1) * h * w];
                let wbase = (oc * c + ic) * k * k;
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = self.weight[wbase + ky * k + kx];
                        for oy in 0..oh {
                            let iy = (oy * s + ky) as isize - p as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let row = &plane[iy as usize * w..(iy as usize + 1) * w];
                            let orow = &mut out[oy * ow..(oy + 1) * ow];
                            for (ox, o) in orow.iter_mut().enumerate() {
                                let ix = (ox * s + kx) as isize - p as isize;
                                if ix >= 0 && ix < w as isize {
                                    *o += wv * row[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        Tensor {
            shape: vec![self.out_channels, oh, ow],
            data: y,
        }
    }

    fn backward(&self, x: &Tensor, gy: &Tensor, gw: &mut [f64], gb: &mut [f64]) -> Tensor {
        let (c, h, w) = x.chw();
        let (_, oh, ow) = gy.chw();
        let (k, s, p) = (self.kernel, self.stride, self.padding);
        let mut gx = vec![0.0; c * h * w];
        for oc in 0..self.out_channels {
            let g = &gy.data[oc * oh * ow..(oc + 1) * oh * ow];
            gb[oc] += g.iter().sum::<f64>();
            for ic in 0..c {
                let plane = &x.data[ic * h * w..(ic + 1) * h * w];
                let gplane = &mut gx[ic * h * w..(ic + 1) * h * w];
                let wbase = (oc * c + ic) * k * k;
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = self.weight[wbase + ky * k + kx];
                        let mut acc = 0.0;
                        for oy in 0..oh {
                            let iy = (oy * s + ky) as isize - p as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let iy = iy as usize;
                            for ox in 0..ow {
                                let ix = (ox * s + kx) as isize - p as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let gv = g[oy * ow + ox];
                                acc += gv * plane[iy * w + ix as usize];
                                gplane[iy * w + ix as usize] += gv * wv;
                            }
                        }
                        gw[wbase + ky * k + kx] += acc;
                    }
                }
            }
        }
        Tensor {
            shape: x.shape.clone(),
            data: gx,
        }
    }
}

impl DepthwiseConv2d {
    fn forward(&self, x: &Tensor) -> Tensor {
        let (c, h, w) = x.chw();
        debug_assert_eq!(c, self.channels);
        let (k, s, p) = (self.kernel, self.stride, self.padding);
        let (oh, ow) = (out_dim(h, k, s, p), out_dim(w, k, s, p));
        let mut y = vec![0.0; c * oh * ow];
        for ch in 0..c {
            let plane = &x.data[ch * h * w..(ch + 1) * h * w];
            let out = &mut y[ch * oh * ow..(ch + 1) * oh * ow];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = self.bias[ch];
                    for ky in 0..k {
                        let iy = (oy * s + ky) as isize - p as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * s + kx) as isize - p as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc += self.weight[ch * k * k + ky * k + kx]
                                * plane[iy as usize * w + ix as usize];
                        }
                    }
                    out[oy * ow + ox] = acc;
                }
            }
        }
        Tensor {
            shape: vec![c, oh, ow],
            data: y,
        }
    }

    fn backward(&self, x: &Tensor, gy: &Tensor, gw: &mut [f64], gb: &mut [f64]) -> Tensor {
        let (c, h, w) = x.chw();
        let (_, oh, ow) = gy.chw();
        let (k, s, p) = (self.kernel, self.stride, self.padding);
        let mut gx = vec![0.0; c * h * w];
        for ch in 0..c {
            let g = &gy.data[ch * oh * ow..(ch + 1) * oh * ow];
            gb[ch] += g.iter().sum::<f64>();
            for oy in 0..oh {
                for ox in 0..ow {
                    let gv = g[oy * ow + ox];
                    for ky in 0..k {
                        let iy = (oy * s + ky) as isize - p as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * s + kx) as isize - p as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let xi = ch * h * w + iy as usize * w + ix as usize;
                            let wi = ch * k * k + ky * k + kx;
                            gw[wi] += gv * x.data[xi];
                            gx[xi] += gv * self.weight[wi];
                        }
                    }
                }
            }
        }
        Tensor {
            shape: x.shape.clone(),
            data: gx,
        }
    }
}

impl Linear {
    fn forward(&self, x: &Tensor) -> Tensor {
        debug_assert_eq!(x.len(), self.in_features);
        let y = (0..self.out_features)
            .map(|o| {
                let row = &self.weight[o * self.in_features..(o + 1) * self.in_features];
                self.bias[o] + row.iter().zip(&x.data).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect();
        Tensor::vector(y)
    }

    fn backward(&self, x: &Tensor, gy: &Tensor, gw: &mut [f64], gb: &mut [f64]) -> Tensor {
        let mut gx = vec![0.0; self.in_features];
        for o in 0..self.out_features {
            let g = gy.data[o];
            gb[o] += g;
            let row = &self.weight[o * self.in_features..(o + 1) * self.in_features];
            let grow = &mut gw[o * self.in_features..(o + 1) * self.in_features];
            for i in 0..self.in_features {
                grow[i] += g * x.data[i];
                gx[i] += g * row[i];
            }
        }
        Tensor {
            shape: x.shape.clone(),
            data: gx,
        }
    }
}

impl Layer {
    pub fn conv2d(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        Layer::Conv2d(Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding: (kernel - 1) / 2,
            weight: vec![0.0; out_channels * in_channels * kernel * kernel],
            bias: vec![0.0; out_channels],
        })
    }

    pub fn depthwise(channels: usize, kernel: usize, stride: usize) -> Self {
        Layer::DepthwiseConv2d(DepthwiseConv2d {
            channels,
            kernel,
            stride,
            padding: (kernel - 1) / 2,
            weight: vec![0.0; channels * kernel * kernel],
            bias: vec![0.0; channels],
        })
    }

    pub fn linear(in_features: usize, out_features: usize) -> Self {
        Layer::Linear(Linear {
            in_features,
            out_features,
            weight: vec![0.0; in_features * out_features],
            bias: vec![0.0; out_features],
        })
    }

    pub fn forward(&self, x: &Tensor, mode: &mut Mode<'_>) -> (Tensor, Cache) {
        match self {
            Layer::Affine { scale, shift } => (
                Tensor {
                    shape: x.shape.clone(),
                    data: x.data.iter().map(|v| scale * v + shift).collect(),
                },
                Cache::Shape(x.shape.clone()),
            ),
            Layer::Conv2d(conv) => (conv.forward(x), Cache::Input(x.clone())),
            Layer::DepthwiseConv2d(conv) => (conv.forward(x), Cache::Input(x.clone())),
            Layer::Linear(lin) => (lin.forward(x), Cache::Input(x.clone())),
            Layer::Relu => {
                let y = x.data.iter().map(|&v| v.max(0.0)).collect();
                (
                    Tensor {
                        shape: x.shape.clone(),
                        data: y,
                    },
                    Cache::Input(x.clone()),
                )
            }
            Layer::LeakyRelu { slope } => {
                let y = x
                    .data
                    .iter()
                    .map(|&v| if v > 0.0 { v } else { slope * v })
                    .collect();
                (
                    Tensor {
                        shape: x.shape.clone(),
                        data: y,
                    },
                    Cache::Input(x.clone()),
                )
            }
            Layer::MaxPool2d {
                kernel,
                stride,
                padding,
            } => {
                let (c, h, w) = x.chw();
                let (k, s, p) = (*kernel, *stride, *padding);
                let (oh, ow) = (out_dim(h, k, s, p), out_dim(w, k, s, p));
                let mut y = vec![f64::NEG_INFINITY; c * oh * ow];
                let mut argmax = vec![0usize; c * oh * ow];
                for ch in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let o = ch * oh * ow + oy * ow + ox;
                            for ky in 0..k {
                                let iy = (oy * s + ky) as isize - p as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for kx in 0..k {
                                    let ix = (ox * s + kx) as isize - p as isize;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    let i = ch * h * w + iy as usize * w + ix as usize;
                                    if x.data[i] > y[o] {
                                        y[o] = x.data[i];
                                        argmax[o] = i;
                                    }
                                }
                            }
                        }
                    }
                }
                (
                    Tensor {
                        shape: vec![c, oh, ow],
                        data: y,
                    },
                    Cache::MaxPool {
                        argmax,
                        in_shape: x.shape.clone(),
                    },
                )
            }
            Layer::GlobalAvgPool => {
                let (c, h, w) = x.chw();
                let n = (h * w) as f64;
                let y = (0..c)
                    .map(|ch| x.data[ch * h * w..(ch + 1) * h * w].iter().sum::<f64>() / n)
                    .collect();
                (Tensor::vector(y), Cache::Shape(x.shape.clone()))
            }
            Layer::Dropout { rate } => match mode {
                Mode::Train(rng) if *rate > 0.0 => {
                    let keep = 1.0 - rate;
                    let mask: Vec<f64> = (0..x.len())
                        .map(|_| {
                            if rng.random::<f64>() < keep {
                                1.0 / keep
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    let y = x.data.iter().zip(&mask).map(|(v, m)| v * m).collect();
                    (
                        Tensor {
                            shape: x.shape.clone(),
                            data: y,
                        },
                        Cache::Mask(mask),
                    )
                }
                _ => (x.clone(), Cache::Mask(vec![1.0; x.len()])),
            },
            Layer::Residual { body, shortcut } => {
                let (mut y, body_cache) = forward_all(body, x, mode);
                let (s, shortcut_cache) = forward_all(shortcut, x, mode);
                y.add_assign(&s);
                (
                    y,
                    Cache::Residual {
                        body: body_cache,
                        shortcut: shortcut_cache,
                    },
                )
            }
        }
    }

    /// Accumulates parameter gradients into `grads` (this layer's slots only) and
    /// returns the gradient with respect to the layer input.
    pub fn backward(&self, cache: &Cache, gy: &Tensor, grads: &mut [Vec<f64>]) -> Tensor {
        match (self, cache) {
            (Layer::Affine { scale, .. }, Cache::Shape(shape)) => Tensor {
                shape: shape.clone(),
                data: gy.data.iter().map(|g| scale * g).collect(),
            },
            (Layer::Conv2d(conv), Cache::Input(x)) => {
                let (gw, gb) = split_pair(grads);
                conv.backward(x, gy, gw, gb)
            }
            (Layer::DepthwiseConv2d(conv), Cache::Input(x)) => {
                let (gw, gb) = split_pair(grads);
                conv.backward(x, gy, gw, gb)
            }
            (Layer::Linear(lin), Cache::Input(x)) => {
                let (gw, gb) = split_pair(grads);
                lin.backward(x, gy, gw, gb)
            }
            (Layer::Relu, Cache::Input(x)) => Tensor {
                shape: x.shape.clone(),
                data: x
                    .data
                    .iter()
                    .zip(&gy.data)
                    .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
                    .collect(),
            },
            (Layer::LeakyRelu { slope }, Cache::Input(x)) => Tensor {
                shape: x.shape.clone(),
                data: x
                    .data
                    .iter()
                    .zip(&gy.data)
                    .map(|(&v, &g)| if v > 0.0 { g } else { slope * g })
                    .collect(),
            },
            (Layer::MaxPool2d { .. }, Cache::MaxPool { argmax, in_shape }) => {
                let mut gx = Tensor::zeros(in_shape.clone());
                for (o, &i) in argmax.iter().enumerate() {
                    gx.data[i] += gy.data[o];
                }
                gx
            }
            (Layer::GlobalAvgPool, Cache::Shape(shape)) => {
                let (c, h, w) = (shape[0], shape[1], shape[2]);
                let n = (h * w) as f64;
                let mut data = Vec::with_capacity(c * h * w);
                for ch in 0..c {
                    data.extend(std::iter::repeat(gy.data[ch] / n).take(h * w));
                }
                Tensor {
                    shape: shape.clone(),
                    data,
                }
            }
            (Layer::Dropout { .. }, Cache::Mask(mask)) => Tensor {
                shape: gy.shape.clone(),
                data: gy.data.iter().zip(mask).map(|(g, m)| g * m).collect(),
            },
            (
                Layer::Residual { body, shortcut },
                Cache::Residual {
                    body: body_cache,
                    shortcut: shortcut_cache,
                },
            ) => {
                let nb = count_param_tensors(body);
                let (body_grads, shortcut_grads) = grads.split_at_mut(nb);
                let mut gx = backward_all(body, body_cache, gy, body_grads);
                let gs = backward_all(shortcut, shortcut_cache, gy, shortcut_grads);
                gx.add_assign(&gs);
                gx
            }
            _ => panic!("layer/cache mismatch in backward pass"),
        }
    }

    pub fn num_param_tensors(&self) -> usize {
        match self {
            Layer::Conv2d(_) | Layer::DepthwiseConv2d(_) | Layer::Linear(_) => 2,
            Layer::Residual { body, shortcut } => {
                count_param_tensors(body) + count_param_tensors(shortcut)
            }
            _ => 0,
        }
    }

    pub fn collect_params<'a>(&'a self, out: &mut Vec<&'a [f64]>) {
        match self {
            Layer::Conv2d(c) => out.extend([c.weight.as_slice(), c.bias.as_slice()]),
            Layer::DepthwiseConv2d(c) => out.extend([c.weight.as_slice(), c.bias.as_slice()]),
            Layer::Linear(l) => out.extend([l.weight.as_slice(), l.bias.as_slice()]),
            Layer::Residual { body, shortcut } => {
                body.iter().chain(shortcut).for_each(|l| l.collect_params(out))
            }
            _ => {}
        }
    }

    pub fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Vec<f64>>) {
        match self {
            Layer::Conv2d(c) => out.extend([&mut c.weight, &mut c.bias]),
            Layer::DepthwiseConv2d(c) => out.extend([&mut c.weight, &mut c.bias]),
            Layer::Linear(l) => out.extend([&mut l.weight, &mut l.bias]),
            Layer::Residual { body, shortcut } => body
                .iter_mut()
                .chain(shortcut.iter_mut())
                .for_each(|l| l.collect_params_mut(out)),
            _ => {}
        }
    }

    /// Fan-in used for initialization, for layers with weights.
    pub fn fan_in(&self) -> Option<usize> {
        match self {
            Layer::Conv2d(c) => Some(c.in_channels * c.kernel * c.kernel),
            Layer::DepthwiseConv2d(c) => Some(c.kernel * c.kernel),
            Layer::Linear(l) => Some(l.in_features),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Layer::Affine { .. } => "affine",
            Layer::Conv2d(_) => "conv2d",
            Layer::DepthwiseConv2d(_) => "depthwise_conv2d",
            Layer::MaxPool2d { .. } => "max_pool2d",
            Layer::Relu => "relu",
            Layer::LeakyRelu { .. } => "leaky_relu",
            Layer::GlobalAvgPool => "global_avg_pool",
            Layer::Dropout { .. } => "dropout",
            Layer::Linear(_) => "linear",
            Layer::Residual { .. } => "residual",
        }
    }
}

fn split_pair(grads: &mut [Vec<f64>]) -> (&mut [f64], &mut [f64]) {
    let (w, b) = grads.split_at_mut(1);
    (&mut w[0], &mut b[0])
}

pub fn count_param_tensors(layers: &[Layer]) -> usize {
    layers.iter().map(Layer::num_param_tensors).sum()
}

pub fn forward_all(layers: &[Layer], x: &Tensor, mode: &mut Mode<'_>) -> (Tensor, Vec<Cache>) {
    let mut caches = Vec::with_capacity(layers.len());
    let mut cur = x.clone();
    for layer in layers {
        let (y, cache) = layer.forward(&cur, mode);
        caches.push(cache);
        cur = y;
    }
    (cur, caches)
}

pub fn backward_all(
    layers: &[Layer],
    caches: &[Cache],
    gy: &Tensor,
    grads: &mut [Vec<f64>],
) -> Tensor {
    let mut offsets = Vec::with_capacity(layers.len());
    let mut acc = 0;
    for l in layers {
        offsets.push(acc);
        acc += l.num_param_tensors();
    }
    let mut g = gy.clone();
    for (i, layer) in layers.iter().enumerate().rev() {
        let n = layer.num_param_tensors();
        let slots = &mut grads[offsets[i]..offsets[i] + n];
        g = layer.backward(&caches[i], &g, slots);
    }
    g
}

/// Fills every weight tensor with `U(-bound, bound)` where `bound = gain / sqrt(fan_in)`;
/// biases use `1 / sqrt(fan_in)`.
pub fn init_uniform<R: Rng + ?Sized>(layers: &mut [Layer], gain: f64, rng: &mut R) {
    for layer in layers {
        match layer {
            Layer::Residual { body, shortcut } => {
                init_uniform(body, gain, rng);
                init_uniform(shortcut, gain, rng);
            }
            _ => {
                let Some(fan_in) = layer.fan_in() else {
                    continue;
                };
                let wb = gain / (fan_in as f64).sqrt();
                let bb = 1.0 / (fan_in as f64).sqrt();
                let mut params = Vec::new();
                layer.collect_params_mut(&mut params);
                for v in params[0].iter_mut() {
                    *v = rng.random_range(-wb..=wb);
                }
                for v in params[1].iter_mut() {
                    *v = rng.random_range(-bb..=bb);
                }
            }
        }
    }
}
