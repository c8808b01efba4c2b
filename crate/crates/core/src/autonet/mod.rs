//! A small reverse-mode network engine: periodic 3x3 convolutions, dense
//! layers, residual blocks, pixel shuffles, noise injection and Adam.
//!
//! Forward passes operate on a batch; a taped pass records what the reverse
//! sweep needs. [`Network::backward`] consumes the tape, so a tape cannot be
//! replayed.

mod adam;
mod checkpoint;
mod tensor;

pub use adam::{adam_step, adam_update, AdamConfig, AdamState};
pub use checkpoint::{decode_networks, encode_networks, load_networks, save_networks};
pub use tensor::Tensor;

use crate::error::{Error, Result};
use crate::linalg::gemm;
use rand::Rng;

#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    /// 3x3 convolution with periodic padding. Weights `[cout, cin, 3, 3]`, then bias.
    Conv3x3 { cin: usize, cout: usize },
    /// Fully connected over the flattened sample. Weights `[fout, fin]`, then bias.
    Dense { fin: usize, fout: usize },
    LeakyRelu(f64),
    Relu,
    Sigmoid,
    /// `[c r^2, h, w] -> [c, h r, w r]`; output `(ch, y r + dy, x r + dx)`
    /// reads input channel `ch r^2 + dy r + dx`.
    DepthToSpace(usize),
    /// Inverse of [`LayerSpec::DepthToSpace`].
    SpaceToDepth(usize),
    /// `x + conv(relu(conv(x)))` with `filters` channels throughout.
    Residual { filters: usize },
    /// Concatenates the externally supplied noise tensor after the input channels.
    AppendNoise { channels: usize },
}

impl LayerSpec {
    fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv3x3 { .. } => "conv3x3",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::LeakyRelu(_) => "leaky_relu",
            LayerSpec::Relu => "relu",
            LayerSpec::Sigmoid => "sigmoid",
            LayerSpec::DepthToSpace(_) => "depth_to_space",
            LayerSpec::SpaceToDepth(_) => "space_to_depth",
            LayerSpec::Residual { .. } => "residual_block",
            LayerSpec::AppendNoise { .. } => "append_noise",
        }
    }

    fn param_len(&self) -> usize {
        match *self {
            LayerSpec::Conv3x3 { cin, cout } => cout * cin * 9 + cout,
            LayerSpec::Dense { fin, fout } => fout * fin + fout,
            LayerSpec::Residual { filters } => 2 * (filters * filters * 9 + filters),
            _ => 0,
        }
    }

    /// Output shape for a `[c, h, w]` input.
    fn out_shape(&self, (c, h, w): (usize, usize, usize)) -> Result<(usize, usize, usize)> {
        let bad = |msg: String| Err(Error::shape(format!("{}: {msg}", self.name())));
        match *self {
            LayerSpec::Conv3x3 { cin, cout } => {
                if c != cin {
                    return bad(format!("expects {cin} channels, got {c}"));
                }
                Ok((cout, h, w))
            }
            LayerSpec::Dense { fin, fout } => {
                if c * h * w != fin {
                    return bad(format!("expects {fin} features, got {}", c * h * w));
                }
                Ok((fout, 1, 1))
            }
            LayerSpec::LeakyRelu(_) | LayerSpec::Relu | LayerSpec::Sigmoid => Ok((c, h, w)),
            LayerSpec::DepthToSpace(r) => {
                if r == 0 || c % (r * r) != 0 {
                    return bad(format!("{c} channels not divisible by {}", r * r));
                }
                Ok((c / (r * r), h * r, w * r))
            }
            LayerSpec::SpaceToDepth(r) => {
                if r == 0 || h % r != 0 || w % r != 0 {
                    return bad(format!("{h}x{w} not divisible by {r}"));
                }
                Ok((c * r * r, h / r, w / r))
            }
            LayerSpec::Residual { filters } => {
                if c != filters {
                    return bad(format!("expects {filters} channels, got {c}"));
                }
                Ok((c, h, w))
            }
            LayerSpec::AppendNoise { channels } => Ok((c + channels, h, w)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub params: Vec<f64>,
}

/// Ordered layer stack with its input channel count.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    input_channels: usize,
    layers: Vec<Layer>,
}

/// Parameter gradients (one vector per layer) and the input gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub params: Vec<Vec<f64>>,
    pub input: Tensor,
}

impl Gradients {
    /// `self += scale * other` over parameter gradients.
    pub fn accumulate(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }
}

enum Saved {
    Conv { cols: Vec<f64>, shape: (usize, usize, usize, usize) },
    Dense { input: Tensor },
    Act { input: Tensor },
    Sigmoid { output: Tensor },
    Reshape,
    Residual { cols1: Vec<f64>, pre: Tensor, cols2: Vec<f64> },
    Noise { channels: usize },
}

/// Values recorded by a taped forward pass.
pub struct Tape {
    saved: Vec<Saved>,
    input_shape: (usize, usize, usize, usize),
}

impl Tape {
    /// Sign pattern of every ReLU / leaky-ReLU pre-activation. Two inputs with
    /// equal signatures lie in the same linear region of the activations.
    pub fn kink_signature(&self) -> Vec<bool> {
        let mut sig = Vec::new();
        for s in &self.saved {
            match s {
                Saved::Act { input } => sig.extend(input.data.iter().map(|&v| v > 0.0)),
                Saved::Residual { pre, .. } => sig.extend(pre.data.iter().map(|&v| v > 0.0)),
                _ => {}
            }
        }
        sig
    }
}

fn im2col(x: &Tensor) -> Vec<f64> {
    let (n, c, h, w) = x.shape();
    let hw = h * w;
    let p = n * hw;
    let mut cols = vec![0.0; c * 9 * p];
    for s in 0..n {
        for ci in 0..c {
            let plane = &x.data[(s * c + ci) * hw..(s * c + ci + 1) * hw];
            for ky in 0..3 {
                for kx in 0..3 {
                    let row = &mut cols[((ci * 9) + ky * 3 + kx) * p + s * hw..][..hw];
                    for y in 0..h {
                        let sy = (y + h + ky - 1) % h;
                        let src = &plane[sy * w..(sy + 1) * w];
                        let dst = &mut row[y * w..(y + 1) * w];
                        // x' = x + kx - 1 (periodic)
                        match kx {
                            0 => {
                                dst[0] = src[w - 1];
                                dst[1..].copy_from_slice(&src[..w - 1]);
                            }
                            1 => dst.copy_from_slice(src),
                            _ => {
                                dst[..w - 1].copy_from_slice(&src[1..]);
                                dst[w - 1] = src[0];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], (n, c, h, w): (usize, usize, usize, usize)) -> Tensor {
    let hw = h * w;
    let p = n * hw;
    let mut x = Tensor::zeros(n, c, h, w);
    for s in 0..n {
        for ci in 0..c {
            let plane = &mut x.data[(s * c + ci) * hw..(s * c + ci + 1) * hw];
            for ky in 0..3 {
                for kx in 0..3 {
                    let row = &cols[((ci * 9) + ky * 3 + kx) * p + s * hw..][..hw];
                    for y in 0..h {
                        let sy = (y + h + ky - 1) % h;
                        let src = &row[y * w..(y + 1) * w];
                        let dst = &mut plane[sy * w..(sy + 1) * w];
                        for xx in 0..w {
                            dst[(xx + w + kx - 1) % w] += src[xx];
                        }
                    }
                }
            }
        }
    }
    x
}

fn conv_forward(params: &[f64], cin: usize, cout: usize, x: &Tensor) -> (Tensor, Vec<f64>) {
    let (n, _, h, w) = x.shape();
    let hw = h * w;
    let p = n * hw;
    let k = cin * 9;
    let cols = im2col(x);
    let (wt, bias) = params.split_at(cout * k);
    let mut out_mat = vec![0.0; cout * p];
    gemm(cout, k, p, 1.0, wt, false, &cols, false, 0.0, &mut out_mat);
    let mut out = Tensor::zeros(n, cout, h, w);
    for co in 0..cout {
        for s in 0..n {
            let src = &out_mat[co * p + s * hw..][..hw];
            let dst = &mut out.data[(s * cout + co) * hw..][..hw];
            for (d, v) in dst.iter_mut().zip(src) {
                *d = v + bias[co];
            }
        }
    }
    (out, cols)
}

/// Returns the input gradient; parameter gradients are written to `gparams`
/// when given.
fn conv_backward(
    params: &[f64],
    cin: usize,
    cout: usize,
    cols: &[f64],
    shape: (usize, usize, usize, usize),
    gout: &Tensor,
    gparams: Option<&mut [f64]>,
) -> Tensor {
    let (n, _, h, w) = shape;
    let hw = h * w;
    let p = n * hw;
    let k = cin * 9;
    let mut g = vec![0.0; cout * p];
    for co in 0..cout {
        for s in 0..n {
            g[co * p + s * hw..][..hw].copy_from_slice(&gout.data[(s * cout + co) * hw..][..hw]);
        }
    }
    if let Some(gp) = gparams {
        let (gw, gb) = gp.split_at_mut(cout * k);
        gemm(cout, p, k, 1.0, &g, false, cols, true, 0.0, gw);
        for co in 0..cout {
            gb[co] = g[co * p..(co + 1) * p].iter().sum();
        }
    }
    let mut dcols = vec![0.0; k * p];
    gemm(k, cout, p, 1.0, &params[..cout * k], true, &g, false, 0.0, &mut dcols);
    col2im(&dcols, shape)
}

fn depth_to_space(x: &Tensor, r: usize) -> Tensor {
    let (n, c, h, w) = x.shape();
    let co = c / (r * r);
    let (ho, wo) = (h * r, w * r);
    let mut out = Tensor::zeros(n, co, ho, wo);
    for s in 0..n {
        for ch in 0..co {
            for dy in 0..r {
                for dx in 0..r {
                    let ci = ch * r * r + dy * r + dx;
                    for y in 0..h {
                        for xx in 0..w {
                            out.data[((s * co + ch) * ho + y * r + dy) * wo + xx * r + dx] =
                                x.data[((s * c + ci) * h + y) * w + xx];
                        }
                    }
                }
            }
        }
    }
    out
}

fn space_to_depth(x: &Tensor, r: usize) -> Tensor {
    let (n, c, h, w) = x.shape();
    let (ho, wo) = (h / r, w / r);
    let co = c * r * r;
    let mut out = Tensor::zeros(n, co, ho, wo);
    for s in 0..n {
        for ch in 0..c {
            for dy in 0..r {
                for dx in 0..r {
                    let oc = ch * r * r + dy * r + dx;
                    for y in 0..ho {
                        for xx in 0..wo {
                            out.data[((s * co + oc) * ho + y) * wo + xx] =
                                x.data[((s * c + ch) * h + y * r + dy) * w + xx * r + dx];
                        }
                    }
                }
            }
        }
    }
    out
}

fn dense_forward(params: &[f64], fin: usize, fout: usize, x: &Tensor) -> Tensor {
    let n = x.n;
    let (wt, bias) = params.split_at(fout * fin);
    let mut out = Tensor::zeros(n, fout, 1, 1);
    gemm(n, fin, fout, 1.0, &x.data, false, wt, true, 0.0, &mut out.data);
    for row in out.data.chunks_mut(fout) {
        for (o, b) in row.iter_mut().zip(bias) {
            *o += b;
        }
    }
    out
}

fn leaky(v: f64, alpha: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        alpha * v
    }
}

impl Network {
    /// Builds a network for inputs with `input_channels` channels, checking
    /// shape compatibility at the probe size `probe_hw` and drawing weights
    /// uniformly in `+-1/sqrt(fan_in)` (biases start at zero).
    pub fn new(
        specs: Vec<LayerSpec>,
        input_channels: usize,
        probe_hw: (usize, usize),
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut shape = (input_channels, probe_hw.0, probe_hw.1);
        let mut layers = Vec::with_capacity(specs.len());
        for spec in specs {
            shape = spec.out_shape(shape)?;
            let mut params = vec![0.0; spec.param_len()];
            let mut init = |w: &mut [f64], fan_in: usize| {
                let a = 1.0 / (fan_in as f64).sqrt();
                w.iter_mut().for_each(|v| *v = rng.gen_range(-a..a));
            };
            match spec {
                LayerSpec::Conv3x3 { cin, cout } => init(&mut params[..cout * cin * 9], cin * 9),
                LayerSpec::Dense { fin, fout } => init(&mut params[..fout * fin], fin),
                LayerSpec::Residual { filters } => {
                    let k = filters * filters * 9;
                    init(&mut params[..k], filters * 9);
                    init(&mut params[k + filters..2 * k + filters], filters * 9);
                }
                _ => {}
            }
            layers.push(Layer { spec, params });
        }
        Ok(Network {
            input_channels,
            layers,
        })
    }

    /// Assembles a network from explicit layers (e.g. a loaded checkpoint).
    pub fn from_layers(input_channels: usize, layers: Vec<Layer>) -> Result<Self> {
        for (i, l) in layers.iter().enumerate() {
            if l.params.len() != l.spec.param_len() {
                return Err(Error::shape(format!("layer {i} has {} parameters", l.params.len())));
            }
        }
        Ok(Network {
            input_channels,
            layers,
        })
    }

    pub fn input_channels(&self) -> usize {
        self.input_channels
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.params.len()).sum()
    }

    pub fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.layers.iter().map(|l| vec![0.0; l.params.len()]).collect()
    }

    /// Channels of the noise tensor this network expects, if any.
    pub fn noise_channels(&self) -> Option<usize> {
        self.layers.iter().find_map(|l| match l.spec {
            LayerSpec::AppendNoise { channels } => Some(channels),
            _ => None,
        })
    }

    /// Output `[c, h, w]` for an input of spatial size `(h, w)`.
    pub fn output_shape(&self, hw: (usize, usize)) -> Result<(usize, usize, usize)> {
        let mut s = (self.input_channels, hw.0, hw.1);
        for l in &self.layers {
            s = l.spec.out_shape(s)?;
        }
        Ok(s)
    }

    /// Input spatial size seen by the noise layer for network input `(h, w)`.
    pub fn noise_shape(&self, hw: (usize, usize)) -> Result<Option<(usize, usize, usize)>> {
        let mut s = (self.input_channels, hw.0, hw.1);
        for l in &self.layers {
            if let LayerSpec::AppendNoise { channels } = l.spec {
                return Ok(Some((channels, s.1, s.2)));
            }
            s = l.spec.out_shape(s)?;
        }
        Ok(None)
    }

    pub fn forward(&self, x: &Tensor, noise: Option<&Tensor>) -> Result<Tensor> {
        Ok(self.run(x, noise, false)?.0)
    }

    pub fn forward_taped(&self, x: &Tensor, noise: Option<&Tensor>) -> Result<(Tensor, Tape)> {
        let (out, tape) = self.run(x, noise, true)?;
        Ok((out, tape.expect("recorded")))
    }

    fn run(&self, x: &Tensor, noise: Option<&Tensor>, record: bool) -> Result<(Tensor, Option<Tape>)> {
        if x.c != self.input_channels {
            return Err(Error::shape(format!(
                "network expects {} input channels, got {}",
                self.input_channels, x.c
            )));
        }
        if self.noise_channels().is_some() != noise.is_some() {
            return Err(Error::shape("noise tensor must be supplied exactly when the network appends noise"));
        }
        let mut saved = Vec::new();
        let mut cur = x.clone();
        for (li, layer) in self.layers.iter().enumerate() {
            layer.spec.out_shape((cur.c, cur.h, cur.w))?;
            let p = &layer.params;
            let next = match layer.spec {
                LayerSpec::Conv3x3 { cin, cout } => {
                    let shape = cur.shape();
                    let (out, cols) = conv_forward(p, cin, cout, &cur);
                    if record {
                        saved.push(Saved::Conv { cols, shape });
                    }
                    out
                }
                LayerSpec::Dense { fin, fout } => {
                    let out = dense_forward(p, fin, fout, &cur);
                    if record {
                        saved.push(Saved::Dense { input: cur });
                    }
                    out
                }
                LayerSpec::Relu | LayerSpec::LeakyRelu(_) => {
                    let alpha = match layer.spec {
                        LayerSpec::LeakyRelu(a) => a,
                        _ => 0.0,
                    };
                    let mut out = cur.clone();
                    out.data.iter_mut().for_each(|v| *v = leaky(*v, alpha));
                    if record {
                        saved.push(Saved::Act { input: cur });
                    }
                    out
                }
                LayerSpec::Sigmoid => {
                    let mut out = cur;
                    out.data.iter_mut().for_each(|v| *v = 1.0 / (1.0 + (-*v).exp()));
                    if record {
                        saved.push(Saved::Sigmoid { output: out.clone() });
                    }
                    out
                }
                LayerSpec::DepthToSpace(r) => {
                    if record {
                        saved.push(Saved::Reshape);
                    }
                    depth_to_space(&cur, r)
                }
                LayerSpec::SpaceToDepth(r) => {
                    if record {
                        saved.push(Saved::Reshape);
                    }
                    space_to_depth(&cur, r)
                }
                LayerSpec::Residual { filters } => {
                    let shape = cur.shape();
                    let half = p.len() / 2;
                    let (pre, cols1) = conv_forward(&p[..half], filters, filters, &cur);
                    let mut act = pre.clone();
                    act.data.iter_mut().for_each(|v| *v = v.max(0.0));
                    let (h2, cols2) = conv_forward(&p[half..], filters, filters, &act);
                    let mut out = cur;
                    for (o, v) in out.data.iter_mut().zip(&h2.data) {
                        *o += v;
                    }
                    debug_assert_eq!(out.shape(), shape);
                    if record {
                        saved.push(Saved::Residual { cols1, pre, cols2 });
                    }
                    out
                }
                LayerSpec::AppendNoise { channels } => {
                    let z = noise.expect("checked");
                    if z.shape() != (cur.n, channels, cur.h, cur.w) {
                        return Err(Error::shape(format!(
                            "noise tensor {:?}, expected {:?}",
                            z.shape(),
                            (cur.n, channels, cur.h, cur.w)
                        )));
                    }
                    let mut out = Tensor::zeros(cur.n, cur.c + channels, cur.h, cur.w);
                    for s in 0..cur.n {
                        let dst = out.sample_mut(s);
                        let l = cur.sample_len();
                        dst[..l].copy_from_slice(cur.sample(s));
                        dst[l..].copy_from_slice(z.sample(s));
                    }
                    if record {
                        saved.push(Saved::Noise { channels });
                    }
                    out
                }
            };
            if !next.is_finite() {
                return Err(Error::NonFinite(format!("output of layer {li} ({})", layer.spec.name())));
            }
            cur = next;
        }
        let tape = record.then(|| Tape {
            saved,
            input_shape: x.shape(),
        });
        Ok((cur, tape))
    }

    /// Reverse sweep from `upstream` (gradient of the loss w.r.t. the output).
    pub fn backward(&self, tape: Tape, upstream: &Tensor) -> Result<Gradients> {
        self.sweep(tape, upstream, true)
    }

    /// Reverse sweep that only propagates the input gradient.
    pub fn backward_input(&self, tape: Tape, upstream: &Tensor) -> Result<Tensor> {
        Ok(self.sweep(tape, upstream, false)?.input)
    }

    fn sweep(&self, tape: Tape, upstream: &Tensor, with_params: bool) -> Result<Gradients> {
        if tape.saved.len() != self.layers.len() {
            return Err(Error::shape("tape does not belong to this network"));
        }
        let mut grads = self.zero_grads();
        let mut g = upstream.clone();
        for (li, (layer, saved)) in self.layers.iter().zip(tape.saved).enumerate().rev() {
            let p = &layer.params;
            let gp = if with_params { Some(grads[li].as_mut_slice()) } else { None };
            g = match (&layer.spec, saved) {
                (&LayerSpec::Conv3x3 { cin, cout }, Saved::Conv { cols, shape }) => {
                    conv_backward(p, cin, cout, &cols, shape, &g, gp)
                }
                (&LayerSpec::Dense { fin, fout }, Saved::Dense { input }) => {
                    let n = input.n;
                    if let Some(gp) = gp {
                        let (gw, gb) = gp.split_at_mut(fout * fin);
                        gemm(fout, n, fin, 1.0, &g.data, true, &input.data, false, 0.0, gw);
                        for row in g.data.chunks(fout) {
                            for (b, v) in gb.iter_mut().zip(row) {
                                *b += v;
                            }
                        }
                    }
                    let mut gin = Tensor::zeros(input.n, input.c, input.h, input.w);
                    gemm(n, fout, fin, 1.0, &g.data, false, &p[..fout * fin], false, 0.0, &mut gin.data);
                    gin
                }
                (LayerSpec::Relu | LayerSpec::LeakyRelu(_), Saved::Act { input }) => {
                    let alpha = match layer.spec {
                        LayerSpec::LeakyRelu(a) => a,
                        _ => 0.0,
                    };
                    for (gv, x) in g.data.iter_mut().zip(&input.data) {
                        if *x <= 0.0 {
                            *gv *= alpha;
                        }
                    }
                    g
                }
                (LayerSpec::Sigmoid, Saved::Sigmoid { output }) => {
                    for (gv, y) in g.data.iter_mut().zip(&output.data) {
                        *gv *= y * (1.0 - y);
                    }
                    g
                }
                (&LayerSpec::DepthToSpace(r), Saved::Reshape) => space_to_depth(&g, r),
                (&LayerSpec::SpaceToDepth(r), Saved::Reshape) => depth_to_space(&g, r),
                (&LayerSpec::Residual { filters }, Saved::Residual { cols1, pre, cols2 }) => {
                    let half = p.len() / 2;
                    let shape = pre.shape();
                    let (gp1, gp2) = match gp {
                        Some(gp) => {
                            let (a, b) = gp.split_at_mut(half);
                            (Some(a), Some(b))
                        }
                        None => (None, None),
                    };
                    let mut ga = conv_backward(&p[half..], filters, filters, &cols2, shape, &g, gp2);
                    for (gv, x) in ga.data.iter_mut().zip(&pre.data) {
                        if *x <= 0.0 {
                            *gv = 0.0;
                        }
                    }
                    let gx = conv_backward(&p[..half], filters, filters, &cols1, shape, &ga, gp1);
                    for (o, v) in g.data.iter_mut().zip(&gx.data) {
                        *o += v;
                    }
                    g
                }
                (&LayerSpec::AppendNoise { .. }, Saved::Noise { channels }) => {
                    let c = g.c - channels;
                    let mut gin = Tensor::zeros(g.n, c, g.h, g.w);
                    let l = gin.sample_len();
                    for s in 0..g.n {
                        gin.sample_mut(s).copy_from_slice(&g.sample(s)[..l]);
                    }
                    gin
                }
                _ => return Err(Error::shape(format!("tape entry {li} does not match layer"))),
            };
        }
        if g.shape() != tape.input_shape {
            return Err(Error::shape("upstream gradient does not match the recorded output"));
        }
        Ok(Gradients { params: grads, input: g })
    }
}

/// Forward pass returning a tape when `record` is set.
pub fn net_forward(
    net: &Network,
    input: &Tensor,
    noise: Option<&Tensor>,
    record: bool,
) -> Result<(Tensor, Option<Tape>)> {
    net.run(input, noise, record)
}

pub fn net_backward(net: &Network, tape: Tape, upstream: &Tensor) -> Result<Gradients> {
    net.backward(tape, upstream)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Coordinates skipped because a perturbation crossed an activation kink.
    pub skipped: usize,
}

/// Compares reverse-mode gradients of `0.5 * |net(input)|^2` with central
/// differences of step `eps`, over every parameter and input entry.
pub fn grad_check(net: &Network, input: &Tensor, noise: Option<&Tensor>, eps: f64) -> Result<GradCheckReport> {
    let loss = |n: &Network, x: &Tensor| -> Result<(f64, Vec<bool>)> {
        let (out, tape) = n.forward_taped(x, noise)?;
        Ok((0.5 * out.sum_sq(), tape.kink_signature()))
    };
    let (out, tape) = net.forward_taped(input, noise)?;
    let sig0 = tape.kink_signature();
    let grads = net.backward(tape, &out)?;
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        checked: 0,
        skipped: 0,
    };
    let mut record = |analytic: f64, plus: (f64, Vec<bool>), minus: (f64, Vec<bool>)| {
        if plus.1 != sig0 || minus.1 != sig0 {
            report.skipped += 1;
            return;
        }
        let numeric = (plus.0 - minus.0) / (2.0 * eps);
        let denom = analytic.abs().max(numeric.abs()).max(1e-6);
        report.max_rel_err = report.max_rel_err.max((analytic - numeric).abs() / denom);
        report.checked += 1;
    };
    let mut probe = net.clone();
    for li in 0..net.layers.len() {
        for i in 0..net.layers[li].params.len() {
            let orig = probe.layers[li].params[i];
            probe.layers[li].params[i] = orig + eps;
            let plus = loss(&probe, input)?;
            probe.layers[li].params[i] = orig - eps;
            let minus = loss(&probe, input)?;
            probe.layers[li].params[i] = orig;
            record(grads.params[li][i], plus, minus);
        }
    }
    let mut x = input.clone();
    for i in 0..x.data.len() {
        let orig = x.data[i];
        x.data[i] = orig + eps;
        let plus = loss(net, &x)?;
        x.data[i] = orig - eps;
        let minus = loss(net, &x)?;
        x.data[i] = orig;
        record(grads.input.data[i], plus, minus);
    }
    Ok(report)
}
