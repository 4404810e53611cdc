//! Small feed-forward network runtime with reverse-mode gradients w.r.t.
//! the input.
//!
//! Weights are frozen; only input gradients are ever needed. The same runtime
//! backs the seeded toy embedders and networks loaded from `.advw` weight
//! files (landmark regressors, position-map regressors, converted FR
//! backbones).
//!
//! `.advw` layout: `b"ADVW"`, `u32` version, `u32` header length, UTF-8 JSON
//! header describing the layer tree, then every weight as a little-endian
//! `f32` in layer order (for each layer: weights, then bias).

use std::io::Read;
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::rng;

const MAGIC: &[u8; 4] = b"ADVW";
const VERSION: u32 = 1;

/// Activation tensor in channel-major `(c, h, w)` layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Tensor {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    pub fn from_image(image: &Image) -> Self {
        let (h, w, c) = image.dim();
        let mut t = Tensor::zeros(c, h, w);
        for ((r, col, ch), v) in image.indexed_iter() {
            t.data[(ch * h + r) * w + col] = *v;
        }
        t
    }

    pub fn to_image(&self) -> Image {
        Image::from_shape_fn((self.h, self.w, self.c), |(r, col, ch)| {
            self.data[(ch * self.h + r) * self.w + col]
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.h + y) * self.w + x]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        /// `[out][in][ky][kx]`
        weight: Vec<f64>,
        bias: Vec<f64>,
    },
    /// Per-channel `scale * x + shift` (input normalization, folded batch norm).
    ChannelAffine { scale: Vec<f64>, shift: Vec<f64> },
    Tanh,
    Relu,
    PRelu { slope: Vec<f64> },
    /// Non-overlapping average pooling with window and stride `size`.
    AvgPool { size: usize },
    GlobalAvgPool,
    /// Fully connected layer over the flattened `(c, h, w)` input.
    Linear {
        inputs: usize,
        outputs: usize,
        /// `[out][in]`
        weight: Vec<f64>,
        bias: Vec<f64>,
    },
    /// `body(x) + shortcut(x)`; an empty shortcut is the identity.
    Residual {
        body: Vec<Layer>,
        shortcut: Vec<Layer>,
    },
}

/// Weight-free description of a layer, stored in `.advw` headers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    ChannelAffine { channels: usize },
    Tanh,
    Relu,
    PRelu { channels: usize },
    AvgPool { size: usize },
    GlobalAvgPool,
    Linear { inputs: usize, outputs: usize },
    Residual {
        body: Vec<LayerSpec>,
        shortcut: Vec<LayerSpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkHeader {
    pub name: String,
    /// `(height, width, channels)` of the expected input image.
    pub input: (usize, usize, usize),
    pub layers: Vec<LayerSpec>,
}

impl Layer {
    fn forward(&self, x: &Tensor) -> Tensor {
        match self {
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                weight,
                bias,
            } => conv_forward(
                x,
                *in_channels,
                *out_channels,
                *kernel,
                *stride,
                *padding,
                weight,
                bias,
            ),
            Layer::ChannelAffine { scale, shift } => {
                let mut y = x.clone();
                let plane = x.h * x.w;
                for c in 0..x.c {
                    for v in &mut y.data[c * plane..(c + 1) * plane] {
                        *v = scale[c] * *v + shift[c];
                    }
                }
                y
            }
            Layer::Tanh => map(x, f64::tanh),
            Layer::Relu => map(x, |v| v.max(0.0)),
            Layer::PRelu { slope } => {
                let mut y = x.clone();
                let plane = x.h * x.w;
                for c in 0..x.c {
                    for v in &mut y.data[c * plane..(c + 1) * plane] {
                        if *v < 0.0 {
                            *v *= slope[c];
                        }
                    }
                }
                y
            }
            Layer::AvgPool { size } => {
                let (oh, ow) = (x.h / size, x.w / size);
                let norm = 1.0 / (size * size) as f64;
                let mut y = Tensor::zeros(x.c, oh, ow);
                for c in 0..x.c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut s = 0.0;
                            for dy in 0..*size {
                                for dx in 0..*size {
                                    s += x.at(c, oy * size + dy, ox * size + dx);
                                }
                            }
                            y.data[(c * oh + oy) * ow + ox] = s * norm;
                        }
                    }
                }
                y
            }
            Layer::GlobalAvgPool => {
                let plane = x.h * x.w;
                let mut y = Tensor::zeros(x.c, 1, 1);
                for c in 0..x.c {
                    y.data[c] =
                        x.data[c * plane..(c + 1) * plane].iter().sum::<f64>() / plane as f64;
                }
                y
            }
            Layer::Linear {
                inputs,
                outputs,
                weight,
                bias,
            } => {
                let mut y = Tensor::zeros(*outputs, 1, 1);
                for o in 0..*outputs {
                    let row = &weight[o * inputs..(o + 1) * inputs];
                    y.data[o] = bias[o] + dot(row, &x.data);
                }
                y
            }
            Layer::Residual { body, shortcut } => {
                let a = run(body, x);
                let b = run(shortcut, x);
                let mut y = a;
                for (v, s) in y.data.iter_mut().zip(&b.data) {
                    *v += s;
                }
                y
            }
        }
    }

    /// Input gradient given the layer input `x`, its output `y` and the
    /// output gradient `gy`.
    fn backward(&self, x: &Tensor, y: &Tensor, gy: &Tensor) -> Tensor {
        match self {
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                weight,
                ..
            } => conv_backward(
                x,
                gy,
                *in_channels,
                *out_channels,
                *kernel,
                *stride,
                *padding,
                weight,
            ),
            Layer::ChannelAffine { scale, .. } => {
                let mut gx = gy.clone();
                let plane = x.h * x.w;
                for c in 0..x.c {
                    for v in &mut gx.data[c * plane..(c + 1) * plane] {
                        *v *= scale[c];
                    }
                }
                gx
            }
            Layer::Tanh => {
                let mut gx = gy.clone();
                for (g, t) in gx.data.iter_mut().zip(&y.data) {
                    *g *= 1.0 - t * t;
                }
                gx
            }
            Layer::Relu => {
                let mut gx = gy.clone();
                for (g, v) in gx.data.iter_mut().zip(&x.data) {
                    if *v <= 0.0 {
                        *g = 0.0;
                    }
                }
                gx
            }
            Layer::PRelu { slope } => {
                let mut gx = gy.clone();
                let plane = x.h * x.w;
                for c in 0..x.c {
                    for i in c * plane..(c + 1) * plane {
                        if x.data[i] < 0.0 {
                            gx.data[i] *= slope[c];
                        }
                    }
                }
                gx
            }
            Layer::AvgPool { size } => {
                let (oh, ow) = (gy.h, gy.w);
                let norm = 1.0 / (size * size) as f64;
                let mut gx = Tensor::zeros(x.c, x.h, x.w);
                for c in 0..x.c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let g = gy.data[(c * oh + oy) * ow + ox] * norm;
                            for dy in 0..*size {
                                for dx in 0..*size {
                                    let (iy, ix) = (oy * size + dy, ox * size + dx);
                                    gx.data[(c * x.h + iy) * x.w + ix] += g;
                                }
                            }
                        }
                    }
                }
                gx
            }
            Layer::GlobalAvgPool => {
                let plane = x.h * x.w;
                let mut gx = Tensor::zeros(x.c, x.h, x.w);
                for c in 0..x.c {
                    let g = gy.data[c] / plane as f64;
                    gx.data[c * plane..(c + 1) * plane].fill(g);
                }
                gx
            }
            Layer::Linear {
                inputs,
                outputs,
                weight,
                ..
            } => {
                let mut gx = Tensor::zeros(x.c, x.h, x.w);
                for o in 0..*outputs {
                    let g = gy.data[o];
                    if g == 0.0 {
                        continue;
                    }
                    let row = &weight[o * inputs..(o + 1) * inputs];
                    for (gi, w) in gx.data.iter_mut().zip(row) {
                        *gi += g * w;
                    }
                }
                gx
            }
            Layer::Residual { body, shortcut } => {
                let mut gx = backprop(body, &trace(body, x), gy);
                let gs = backprop(shortcut, &trace(shortcut, x), gy);
                for (a, b) in gx.data.iter_mut().zip(&gs.data) {
                    *a += b;
                }
                gx
            }
        }
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                ..
            } => LayerSpec::Conv2d {
                in_channels: *in_channels,
                out_channels: *out_channels,
                kernel: *kernel,
                stride: *stride,
                padding: *padding,
            },
            Layer::ChannelAffine { scale, .. } => LayerSpec::ChannelAffine {
                channels: scale.len(),
            },
            Layer::Tanh => LayerSpec::Tanh,
            Layer::Relu => LayerSpec::Relu,
            Layer::PRelu { slope } => LayerSpec::PRelu {
                channels: slope.len(),
            },
            Layer::AvgPool { size } => LayerSpec::AvgPool { size: *size },
            Layer::GlobalAvgPool => LayerSpec::GlobalAvgPool,
            Layer::Linear {
                inputs, outputs, ..
            } => LayerSpec::Linear {
                inputs: *inputs,
                outputs: *outputs,
            },
            Layer::Residual { body, shortcut } => LayerSpec::Residual {
                body: body.iter().map(Layer::spec).collect(),
                shortcut: shortcut.iter().map(Layer::spec).collect(),
            },
        }
    }

    fn params(&self, out: &mut Vec<f64>) {
        match self {
            Layer::Conv2d { weight, bias, .. } | Layer::Linear { weight, bias, .. } => {
                out.extend_from_slice(weight);
                out.extend_from_slice(bias);
            }
            Layer::ChannelAffine { scale, shift } => {
                out.extend_from_slice(scale);
                out.extend_from_slice(shift);
            }
            Layer::PRelu { slope } => out.extend_from_slice(slope),
            Layer::Residual { body, shortcut } => {
                body.iter().chain(shortcut).for_each(|l| l.params(out));
            }
            Layer::Tanh | Layer::Relu | Layer::AvgPool { .. } | Layer::GlobalAvgPool => {}
        }
    }

    fn from_spec(spec: &LayerSpec, weights: &mut impl Iterator<Item = f64>) -> Option<Layer> {
        let mut take = |n: usize| -> Option<Vec<f64>> {
            let v: Vec<f64> = weights.by_ref().take(n).collect();
            (v.len() == n).then_some(v)
        };
        Some(match spec {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => Layer::Conv2d {
                in_channels: *in_channels,
                out_channels: *out_channels,
                kernel: *kernel,
                stride: *stride,
                padding: *padding,
                weight: take(out_channels * in_channels * kernel * kernel)?,
                bias: take(*out_channels)?,
            },
            LayerSpec::ChannelAffine { channels } => Layer::ChannelAffine {
                scale: take(*channels)?,
                shift: take(*channels)?,
            },
            LayerSpec::Tanh => Layer::Tanh,
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::PRelu { channels } => Layer::PRelu {
                slope: take(*channels)?,
            },
            LayerSpec::AvgPool { size } => Layer::AvgPool { size: *size },
            LayerSpec::GlobalAvgPool => Layer::GlobalAvgPool,
            LayerSpec::Linear { inputs, outputs } => Layer::Linear {
                inputs: *inputs,
                outputs: *outputs,
                weight: take(inputs * outputs)?,
                bias: take(*outputs)?,
            },
            LayerSpec::Residual { body, shortcut } => {
                let mut b = Vec::with_capacity(body.len());
                for s in body {
                    b.push(Layer::from_spec(s, weights)?);
                }
                let mut sc = Vec::with_capacity(shortcut.len());
                for s in shortcut {
                    sc.push(Layer::from_spec(s, weights)?);
                }
                Layer::Residual {
                    body: b,
                    shortcut: sc,
                }
            }
        })
    }

    /// Output shape for an input of shape `(c, h, w)`, or `None` if the
    /// layer cannot accept it.
    fn output_shape(&self, (c, h, w): (usize, usize, usize)) -> Option<(usize, usize, usize)> {
        match self {
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                ..
            } => {
                if c != *in_channels || h + 2 * padding < *kernel || w + 2 * padding < *kernel {
                    return None;
                }
                let oh = (h + 2 * padding - kernel) / stride + 1;
                let ow = (w + 2 * padding - kernel) / stride + 1;
                Some((*out_channels, oh, ow))
            }
            Layer::ChannelAffine { scale, .. } => (scale.len() == c).then_some((c, h, w)),
            Layer::PRelu { slope } => (slope.len() == c).then_some((c, h, w)),
            Layer::Tanh | Layer::Relu => Some((c, h, w)),
            Layer::AvgPool { size } => {
                (*size > 0 && h >= *size && w >= *size).then_some((c, h / size, w / size))
            }
            Layer::GlobalAvgPool => Some((c, 1, 1)),
            Layer::Linear {
                inputs, outputs, ..
            } => (c * h * w == *inputs).then_some((*outputs, 1, 1)),
            Layer::Residual { body, shortcut } => {
                let a = chain_shape(body, (c, h, w))?;
                let b = chain_shape(shortcut, (c, h, w))?;
                (a == b).then_some(a)
            }
        }
    }
}

fn chain_shape(layers: &[Layer], mut shape: (usize, usize, usize)) -> Option<(usize, usize, usize)> {
    for l in layers {
        shape = l.output_shape(shape)?;
    }
    Some(shape)
}

fn map(x: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor {
        c: x.c,
        h: x.h,
        w: x.w,
        data: x.data.iter().map(|v| f(*v)).collect(),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[allow(clippy::too_many_arguments)]
fn conv_forward(
    x: &Tensor,
    in_c: usize,
    out_c: usize,
    k: usize,
    stride: usize,
    pad: usize,
    weight: &[f64],
    bias: &[f64],
) -> Tensor {
    let oh = (x.h + 2 * pad - k) / stride + 1;
    let ow = (x.w + 2 * pad - k) / stride + 1;
    let mut y = Tensor::zeros(out_c, oh, ow);
    for o in 0..out_c {
        let out = &mut y.data[o * oh * ow..(o + 1) * oh * ow];
        out.fill(bias[o]);
        for i in 0..in_c {
            let plane = &x.data[i * x.h * x.w..(i + 1) * x.h * x.w];
            for ky in 0..k {
                for kx in 0..k {
                    let wv = weight[((o * in_c + i) * k + ky) * k + kx];
                    let (ox0, ox1) = valid_range(ow, x.w, stride, kx, pad);
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy as usize >= x.h {
                            continue;
                        }
                        let row = &plane[iy as usize * x.w..(iy as usize + 1) * x.w];
                        let orow = &mut out[oy * ow..(oy + 1) * ow];
                        for ox in ox0..ox1 {
                            orow[ox] += wv * row[ox * stride + kx - pad];
                        }
                    }
                }
            }
        }
    }
    y
}

/// Output columns `ox0..ox1` whose input column `ox·stride + kx − pad` is in
/// `0..w`.
fn valid_range(ow: usize, w: usize, stride: usize, kx: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(kx).div_ceil(stride);
    let hi = if w + pad > kx { (w + pad - kx - 1) / stride + 1 } else { 0 };
    (lo.min(ow), hi.min(ow).max(lo.min(ow)))
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &Tensor,
    gy: &Tensor,
    in_c: usize,
    out_c: usize,
    k: usize,
    stride: usize,
    pad: usize,
    weight: &[f64],
) -> Tensor {
    let (oh, ow) = (gy.h, gy.w);
    let mut gx = Tensor::zeros(x.c, x.h, x.w);
    for o in 0..out_c {
        let g = &gy.data[o * oh * ow..(o + 1) * oh * ow];
        for i in 0..in_c {
            let plane = &mut gx.data[i * x.h * x.w..(i + 1) * x.h * x.w];
            for ky in 0..k {
                for kx in 0..k {
                    let wv = weight[((o * in_c + i) * k + ky) * k + kx];
                    let (ox0, ox1) = valid_range(ow, x.w, stride, kx, pad);
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy as usize >= x.h {
                            continue;
                        }
                        let grow = &g[oy * ow..(oy + 1) * ow];
                        let prow = &mut plane[iy as usize * x.w..(iy as usize + 1) * x.w];
                        for ox in ox0..ox1 {
                            prow[ox * stride + kx - pad] += wv * grow[ox];
                        }
                    }
                }
            }
        }
    }
    gx
}

fn run(layers: &[Layer], x: &Tensor) -> Tensor {
    let mut cur = x.clone();
    for l in layers {
        cur = l.forward(&cur);
    }
    cur
}

/// Activations `[x, l0(x), l1(l0(x)), ...]`.
fn trace(layers: &[Layer], x: &Tensor) -> Vec<Tensor> {
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(x.clone());
    for l in layers {
        let next = l.forward(acts.last().expect("non-empty"));
        acts.push(next);
    }
    acts
}

fn backprop(layers: &[Layer], acts: &[Tensor], gy: &Tensor) -> Tensor {
    let mut g = gy.clone();
    for (i, l) in layers.iter().enumerate().rev() {
        g = l.backward(&acts[i], &acts[i + 1], &g);
    }
    g
}

/// A frozen feed-forward network over `h × w × c` images.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    name: String,
    input: (usize, usize, usize),
    layers: Vec<Layer>,
    output_dim: usize,
}

/// Activations recorded by [`Network::forward_traced`].
pub struct Activations {
    acts: Vec<Tensor>,
}

impl Activations {
    pub fn output(&self) -> &[f64] {
        &self.acts.last().expect("non-empty").data
    }
}

impl Network {
    pub fn new(
        name: impl Into<String>,
        input: (usize, usize, usize),
        layers: Vec<Layer>,
    ) -> Result<Self> {
        let (h, w, c) = input;
        let (oc, oh, ow) = chain_shape(&layers, (c, h, w)).ok_or_else(|| {
            Error::InvalidConfig("network layers are inconsistent with the input shape".into())
        })?;
        Ok(Network {
            name: name.into(),
            input,
            layers,
            output_dim: oc * oh * ow,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.input
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    fn check_input(&self, image: &Image) -> Result<()> {
        if image.dim() != self.input {
            let (h, w, c) = self.input;
            let (fh, fw, fc) = image.dim();
            return Err(Error::ShapeMismatch {
                expected: format!("{h}x{w}x{c}"),
                found: format!("{fh}x{fw}x{fc}"),
            });
        }
        Ok(())
    }

    pub fn forward(&self, image: &Image) -> Result<Vec<f64>> {
        self.check_input(image)?;
        Ok(run(&self.layers, &Tensor::from_image(image)).data)
    }

    pub fn forward_traced(&self, image: &Image) -> Result<Activations> {
        self.check_input(image)?;
        Ok(Activations {
            acts: trace(&self.layers, &Tensor::from_image(image)),
        })
    }

    /// Vector-Jacobian product: gradient of `<grad_output, f(x)>` w.r.t. the
    /// input image.
    pub fn backward(&self, acts: &Activations, grad_output: &[f64]) -> Image {
        let last = acts.acts.last().expect("non-empty");
        let gy = Tensor {
            c: last.c,
            h: last.h,
            w: last.w,
            data: grad_output.to_vec(),
        };
        backprop(&self.layers, &acts.acts, &gy).to_image()
    }

    pub fn header(&self) -> NetworkHeader {
        NetworkHeader {
            name: self.name.clone(),
            input: self.input,
            layers: self.layers.iter().map(Layer::spec).collect(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        let mut v = Vec::new();
        self.layers.iter().for_each(|l| l.params(&mut v));
        v.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header()).expect("header serializes");
        let mut params = Vec::new();
        self.layers.iter().for_each(|l| l.params(&mut params));
        let mut out = Vec::with_capacity(12 + header.len() + 4 * params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for p in params {
            out.extend_from_slice(&(p as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |m: &str| Error::format(path, m);
        let mut cursor = bytes;
        let mut word = [0u8; 4];
        cursor.read_exact(&mut word).map_err(|_| bad("truncated"))?;
        if &word != MAGIC {
            return Err(bad("bad magic"));
        }
        cursor.read_exact(&mut word).map_err(|_| bad("truncated"))?;
        if u32::from_le_bytes(word) != VERSION {
            return Err(bad("unsupported version"));
        }
        cursor.read_exact(&mut word).map_err(|_| bad("truncated"))?;
        let hlen = u32::from_le_bytes(word) as usize;
        if cursor.len() < hlen {
            return Err(bad("truncated header"));
        }
        let header: NetworkHeader = serde_json::from_slice(&cursor[..hlen])
            .map_err(|e| Error::format(path, format!("header: {e}")))?;
        let blob = &cursor[hlen..];
        if !blob.len().is_multiple_of(4) {
            return Err(bad("weight blob is not a whole number of f32 values"));
        }
        let mut weights = blob
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])));
        let mut layers = Vec::with_capacity(header.layers.len());
        for spec in &header.layers {
            layers.push(Layer::from_spec(spec, &mut weights).ok_or_else(|| bad("too few weights"))?);
        }
        if weights.next().is_some() {
            return Err(bad("trailing weights"));
        }
        Network::new(header.name, header.input, layers)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::AssetMissing(path.to_path_buf())
            } else {
                Error::io(path, e)
            }
        })?;
        Network::from_bytes(&bytes, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Architecture knobs for the seeded toy embedder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyArchitecture {
    /// Number of convolutional stages (1 to 4).
    pub depth: usize,
    pub dim: usize,
    pub seed: u64,
}

/// Builds a frozen random convolutional embedder over 112×112×3 faces.
///
/// Layout: input normalization `2x - 1`, `depth` stride-2 3×3 conv + tanh
/// stages (8, 16, 16, 16 channels), average pooling down to a 7×7 grid and a
/// linear projection to `dim`, centred on a fixed batch of synthetic faces.
pub fn toy_network(name: &str, arch: ToyArchitecture) -> Result<Network> {
    use crate::imaging::FACE_SIZE;
    if !(1..=4).contains(&arch.depth) || arch.dim == 0 {
        return Err(Error::InvalidConfig(format!(
            "toy network needs depth in 1..=4 and dim > 0, got depth {} dim {}",
            arch.depth, arch.dim
        )));
    }
    let mut rng = rng::substream(arch.seed, "toy-network");
    let mut gauss = |std: f64, n: usize| -> Vec<f64> {
        let d = Normal::new(0.0, std).expect("finite std");
        (0..n).map(|_| d.sample(&mut rng)).collect()
    };
    let channels = [8usize, 16, 16, 16];
    let mut layers = vec![Layer::ChannelAffine {
        scale: vec![2.0; 3],
        shift: vec![-1.0; 3],
    }];
    let mut c_in = 3;
    let mut side = FACE_SIZE;
    for &c_out in channels.iter().take(arch.depth) {
        let fan_in = (c_in * 9) as f64;
        layers.push(Layer::Conv2d {
            in_channels: c_in,
            out_channels: c_out,
            kernel: 3,
            stride: 2,
            padding: 1,
            weight: gauss(1.5 / fan_in.sqrt(), c_out * c_in * 9),
            bias: gauss(0.1, c_out),
        });
        layers.push(Layer::Tanh);
        c_in = c_out;
        side = (side + 2 - 3) / 2 + 1;
    }
    let pool = side / 7;
    if pool > 1 {
        layers.push(Layer::AvgPool { size: pool });
    }
    let inputs = c_in * 49;
    let weight = gauss(1.0 / (inputs as f64).sqrt(), inputs * arch.dim);
    let centre = reference_features(name, &layers, arch.seed)?;
    let bias = weight
        .chunks_exact(inputs)
        .map(|row| -row.iter().zip(&centre).map(|(w, m)| w * m).sum::<f64>())
        .collect();
    layers.push(Layer::Linear {
        inputs,
        outputs: arch.dim,
        weight,
        bias,
    });
    Network::new(name, (FACE_SIZE, FACE_SIZE, 3), layers)
}

/// Mean pooled feature over a fixed batch of synthetic faces; subtracting it
/// removes the component shared by every face.
fn reference_features(name: &str, layers: &[Layer], seed: u64) -> Result<Vec<f64>> {
    use crate::imaging::FACE_SIZE;
    use crate::synth::{dataset, SyntheticConfig};
    let trunk = Network::new(name, (FACE_SIZE, FACE_SIZE, 3), layers.to_vec())?;
    let faces = dataset(&SyntheticConfig {
        identities: 8,
        images_per_identity: 2,
        seed: rng::derive_seed(seed, "toy-reference"),
        noise: 0.0,
    })?;
    let mut acc = vec![0.0; trunk.output_dim()];
    for f in &faces {
        for (a, v) in acc.iter_mut().zip(trunk.forward(&f.image)?) {
            *a += v;
        }
    }
    let n = faces.len() as f64;
    Ok(acc.into_iter().map(|a| a / n).collect())
}
