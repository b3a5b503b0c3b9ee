//! Layers with hand-written backward passes.
//!
//! Every layer caches what its backward pass needs during `forward`, so a
//! `backward` call must follow the matching `forward`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::tensor::{axpy, dot, nchw_to_rows, rows_to_nchw, ConvGeometry, Tensor};
use crate::bitpack::real_counts_from_moments;
use crate::math;
use crate::measure::{AlphaParams, GuardStats, MeasureExpr, UNARY_GENES};

/// Forward-pass switches.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Mode {
    /// Batch statistics and gradient caches.
    pub train: bool,
    /// Binarization replaced by identity (for gradient checks).
    pub relaxed: bool,
}

impl Mode {
    pub const TRAIN: Mode = Mode {
        train: true,
        relaxed: false,
    };
    pub const EVAL: Mode = Mode {
        train: false,
        relaxed: false,
    };
}

/// Mutable view of one parameter tensor and its gradient.
pub struct ParamMut<'a> {
    pub name: &'a str,
    pub shape: &'a [usize],
    pub value: &'a mut [f64],
    pub grad: &'a mut [f64],
    /// Latent weight of a binarized layer; kept inside `[-1, 1]`.
    pub latent_binary: bool,
}

/// A parameter or buffer to persist.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    pub latent_binary: bool,
}

impl Param {
    pub fn new(name: String, shape: Vec<usize>, value: Vec<f64>) -> Param {
        assert_eq!(shape.iter().product::<usize>(), value.len());
        let grad = vec![0.0; value.len()];
        Param {
            name,
            shape,
            value,
            grad,
            latent_binary: false,
        }
    }

    fn view(&mut self) -> ParamMut<'_> {
        ParamMut {
            name: &self.name,
            shape: &self.shape,
            value: &mut self.value,
            grad: &mut self.grad,
            latent_binary: self.latent_binary,
        }
    }

    fn named(&self) -> NamedTensor {
        NamedTensor {
            name: self.name.clone(),
            shape: self.shape.clone(),
            data: self.value.clone(),
        }
    }
}

#[inline]
pub fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Straight-through estimator gate: gradient passes where `|x| <= 1`.
#[inline]
pub fn ste_gate(x: f64) -> f64 {
    if x.abs() <= 1.0 {
        1.0
    } else {
        0.0
    }
}

/// Forward sign (0 maps to +1) of a latent tensor.
pub fn binarize_ste(latent: &[f64]) -> Vec<f64> {
    latent.iter().map(|&x| sign(x)).collect()
}

/// Backward of [`binarize_ste`]: incoming gradient masked to `|latent| <= 1`.
pub fn binarize_ste_backward(latent: &[f64], grad: &[f64]) -> Vec<f64> {
    latent
        .iter()
        .zip(grad)
        .map(|(&x, &g)| g * ste_gate(x))
        .collect()
}

/// Full-precision fully connected layer over flattened features.
#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor>,
}

impl Dense {
    pub fn new(name: &str, inputs: usize, outputs: usize, weight: Vec<f64>) -> Dense {
        Dense {
            weight: Param::new(format!("{name}.weight"), vec![outputs, inputs], weight),
            bias: Param::new(format!("{name}.bias"), vec![outputs], vec![0.0; outputs]),
            input: None,
        }
    }

    fn outputs(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn forward(&mut self, x: Tensor, mode: Mode) -> Tensor {
        let (o, i) = (self.weight.shape[0], self.weight.shape[1]);
        assert_eq!(x.features(), i, "dense input features");
        let mut out = Tensor::zeros(x.n, o, 1, 1);
        for b in 0..x.n {
            let xs = x.sample(b);
            for f in 0..o {
                out.data[b * o + f] =
                    dot(xs, &self.weight.value[f * i..(f + 1) * i]) + self.bias.value[f];
            }
        }
        if mode.train {
            self.input = Some(x);
        }
        out
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let x = self.input.take().expect("forward before backward");
        let (o, i) = (self.outputs(), self.weight.shape[1]);
        let mut dx = Tensor::zeros(x.n, x.c, x.h, x.w);
        for b in 0..x.n {
            let xs = x.sample(b);
            for f in 0..o {
                let g = dy.data[b * o + f];
                if g == 0.0 {
                    continue;
                }
                self.bias.grad[f] += g;
                axpy(g, xs, &mut self.weight.grad[f * i..(f + 1) * i]);
                axpy(
                    g,
                    &self.weight.value[f * i..(f + 1) * i],
                    &mut dx.data[b * i..(b + 1) * i],
                );
            }
        }
        dx
    }
}

/// Full-precision convolution via patch matrices (zero padding).
#[derive(Clone, Debug)]
pub struct Conv {
    pub geometry: ConvGeometry,
    pub weight: Param,
    pub bias: Param,
    cols: Option<(Vec<f64>, usize)>,
}

impl Conv {
    pub fn new(name: &str, geometry: ConvGeometry, filters: usize, weight: Vec<f64>) -> Conv {
        let g = geometry;
        Conv {
            geometry,
            weight: Param::new(
                format!("{name}.weight"),
                vec![filters, g.in_c, g.kernel, g.kernel],
                weight,
            ),
            bias: Param::new(format!("{name}.bias"), vec![filters], vec![0.0; filters]),
            cols: None,
        }
    }

    pub fn forward(&mut self, x: Tensor, mode: Mode) -> Tensor {
        let g = self.geometry;
        let cols = g.im2col(&x, 0.0);
        let plen = g.patch_len();
        let filters = self.weight.shape[0];
        let rows = cols.len() / plen;
        let mut out = vec![0.0; rows * filters];
        for r in 0..rows {
            let patch = &cols[r * plen..(r + 1) * plen];
            for f in 0..filters {
                out[r * filters + f] =
                    dot(patch, &self.weight.value[f * plen..(f + 1) * plen]) + self.bias.value[f];
            }
        }
        if mode.train {
            self.cols = Some((cols, x.n));
        }
        rows_to_nchw(&out, x.n, filters, g.out_h(), g.out_w())
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let (cols, n) = self.cols.take().expect("forward before backward");
        let g = self.geometry;
        let plen = g.patch_len();
        let filters = self.weight.shape[0];
        let dy_rows = nchw_to_rows(dy);
        let rows = dy_rows.len() / filters;
        let mut dcols = vec![0.0; cols.len()];
        for r in 0..rows {
            let patch = &cols[r * plen..(r + 1) * plen];
            for f in 0..filters {
                let gr = dy_rows[r * filters + f];
                if gr == 0.0 {
                    continue;
                }
                self.bias.grad[f] += gr;
                axpy(gr, patch, &mut self.weight.grad[f * plen..(f + 1) * plen]);
                axpy(
                    gr,
                    &self.weight.value[f * plen..(f + 1) * plen],
                    &mut dcols[r * plen..(r + 1) * plen],
                );
            }
        }
        g.col2im(&dcols, n)
    }
}

/// Per-channel scale and shift with batch statistics in training.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    name: String,
    cache: Option<(Vec<f64>, Vec<f64>)>,
}

impl BatchNorm {
    pub const EPS: f64 = 1e-5;
    pub const MOMENTUM: f64 = 0.1;

    pub fn new(name: &str, channels: usize) -> BatchNorm {
        BatchNorm {
            gamma: Param::new(format!("{name}.gamma"), vec![channels], vec![1.0; channels]),
            beta: Param::new(format!("{name}.beta"), vec![channels], vec![0.0; channels]),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            name: name.into(),
            cache: None,
        }
    }

    pub fn forward(&mut self, mut x: Tensor, mode: Mode) -> Tensor {
        let (c, sp) = (x.c, x.spatial());
        let count = (x.n * sp) as f64;
        if !mode.train {
            for ch in 0..c {
                let inv = 1.0 / math::sqrt(self.running_var[ch] + Self::EPS);
                let (g, b, m) = (
                    self.gamma.value[ch],
                    self.beta.value[ch],
                    self.running_mean[ch],
                );
                for s in 0..x.n {
                    let base = (s * c + ch) * sp;
                    for v in &mut x.data[base..base + sp] {
                        *v = g * (*v - m) * inv + b;
                    }
                }
            }
            return x;
        }
        let mut xhat = vec![0.0; x.data.len()];
        let mut inv_std = vec![0.0; c];
        for ch in 0..c {
            let mut sum = 0.0;
            for s in 0..x.n {
                let base = (s * c + ch) * sp;
                sum += x.data[base..base + sp].iter().sum::<f64>();
            }
            let mean = sum / count;
            let mut var = 0.0;
            for s in 0..x.n {
                let base = (s * c + ch) * sp;
                var += x.data[base..base + sp]
                    .iter()
                    .map(|v| (v - mean) * (v - mean))
                    .sum::<f64>();
            }
            var /= count;
            let inv = 1.0 / math::sqrt(var + Self::EPS);
            inv_std[ch] = inv;
            let unbiased = if count > 1.0 {
                var * count / (count - 1.0)
            } else {
                var
            };
            self.running_mean[ch] =
                (1.0 - Self::MOMENTUM) * self.running_mean[ch] + Self::MOMENTUM * mean;
            self.running_var[ch] =
                (1.0 - Self::MOMENTUM) * self.running_var[ch] + Self::MOMENTUM * unbiased;
            let (g, b) = (self.gamma.value[ch], self.beta.value[ch]);
            for s in 0..x.n {
                let base = (s * c + ch) * sp;
                for k in base..base + sp {
                    let h = (x.data[k] - mean) * inv;
                    xhat[k] = h;
                    x.data[k] = g * h + b;
                }
            }
        }
        self.cache = Some((xhat, inv_std));
        x
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let (xhat, inv_std) = self.cache.take().expect("forward before backward");
        let (c, sp) = (dy.c, dy.spatial());
        let count = (dy.n * sp) as f64;
        let mut dx = Tensor::zeros(dy.n, dy.c, dy.h, dy.w);
        for ch in 0..c {
            let g = self.gamma.value[ch];
            let (mut sum_dy, mut sum_dy_xhat) = (0.0, 0.0);
            for s in 0..dy.n {
                let base = (s * c + ch) * sp;
                for k in base..base + sp {
                    sum_dy += dy.data[k];
                    sum_dy_xhat += dy.data[k] * xhat[k];
                }
            }
            self.beta.grad[ch] += sum_dy;
            self.gamma.grad[ch] += sum_dy_xhat;
            let scale = g * inv_std[ch] / count;
            for s in 0..dy.n {
                let base = (s * c + ch) * sp;
                for k in base..base + sp {
                    dx.data[k] = scale * (count * dy.data[k] - sum_dy - xhat[k] * sum_dy_xhat);
                }
            }
        }
        dx
    }

    fn buffers(&self) -> [NamedTensor; 2] {
        let c = self.running_mean.len();
        [
            NamedTensor {
                name: format!("{}.running_mean", self.name),
                shape: vec![c],
                data: self.running_mean.clone(),
            },
            NamedTensor {
                name: format!("{}.running_var", self.name),
                shape: vec![c],
                data: self.running_var.clone(),
            },
        ]
    }
}

/// Clamp to `[-1, 1]`.
#[derive(Clone, Debug, Default)]
pub struct HardTanh {
    input: Option<Vec<f64>>,
}

impl HardTanh {
    pub fn forward(&mut self, mut x: Tensor, mode: Mode) -> Tensor {
        if mode.train {
            self.input = Some(x.data.clone());
        }
        for v in &mut x.data {
            *v = v.clamp(-1.0, 1.0);
        }
        x
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let input = self.input.take().expect("forward before backward");
        let mut dx = dy.clone();
        for (g, &x) in dx.data.iter_mut().zip(&input) {
            *g *= ste_gate(x);
        }
        dx
    }
}

/// Activation binarization with the straight-through estimator.
#[derive(Clone, Debug, Default)]
pub struct SignSte {
    input: Option<Vec<f64>>,
    relaxed: bool,
}

impl SignSte {
    pub fn forward(&mut self, mut x: Tensor, mode: Mode) -> Tensor {
        self.relaxed = mode.relaxed;
        if mode.relaxed {
            return x;
        }
        if mode.train {
            self.input = Some(x.data.clone());
        }
        for v in &mut x.data {
            *v = sign(*v);
        }
        x
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        if self.relaxed {
            return dy.clone();
        }
        let input = self.input.take().expect("forward before backward");
        Tensor {
            data: binarize_ste_backward(&input, &dy.data),
            ..*dy
        }
    }
}

/// Mean over spatial positions.
#[derive(Clone, Debug, Default)]
pub struct GlobalAvgPool {
    shape: Option<(usize, usize, usize)>,
}

impl GlobalAvgPool {
    pub fn forward(&mut self, x: Tensor, mode: Mode) -> Tensor {
        let sp = x.spatial();
        let mut out = Tensor::zeros(x.n, x.c, 1, 1);
        for (o, chunk) in out.data.iter_mut().zip(x.data.chunks(sp)) {
            *o = chunk.iter().sum::<f64>() / sp as f64;
        }
        if mode.train {
            self.shape = Some((x.c, x.h, x.w));
        }
        out
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let (c, h, w) = self.shape.take().expect("forward before backward");
        let sp = h * w;
        let mut dx = Tensor::zeros(dy.n, c, h, w);
        for (chunk, &g) in dx.data.chunks_mut(sp).zip(&dy.data) {
            chunk.fill(g / sp as f64);
        }
        dx
    }
}

/// How a measure layer forms its input patches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeasureKind {
    /// Every sample is one patch of all its features.
    Dense { inputs: usize },
    /// Convolution patches; padding holds the `-1` level.
    Conv(ConvGeometry),
}

impl MeasureKind {
    fn patch_len(&self) -> usize {
        match self {
            MeasureKind::Dense { inputs } => *inputs,
            MeasureKind::Conv(g) => g.patch_len(),
        }
    }
}

/// Binarized layer scoring each patch against each filter with a measure.
///
/// For ±1 patch `x` and filter `w` of length `n` the layer forms
/// `s = x·w`, `p = Σx`, `q = Σw`, recovers `(a, b, c, d)` from those
/// moments and emits `Y(a, b, c, d)`. The recovery is exact for ±1 inputs
/// and linear in the moments, which makes it differentiable.
#[derive(Clone, Debug)]
pub struct MeasureLayer {
    pub kind: MeasureKind,
    pub expr: MeasureExpr,
    pub weight: Param,
    pub alphas: AlphaParams,
    alpha_grads: [Vec<f64>; UNARY_GENES],
    alpha_names: [String; UNARY_GENES],
    alpha_shape: Vec<usize>,
    /// Divide counts by the patch length before evaluating the measure.
    pub normalize_counts: bool,
    pub stats: GuardStats,
    cache: Option<MeasureCache>,
}

#[derive(Clone, Debug)]
struct MeasureCache {
    n: usize,
    in_shape: (usize, usize, usize),
    patches: Vec<f64>,
    weights: Vec<f64>,
    /// Per (row, filter): `∂Y/∂s, ∂Y/∂p, ∂Y/∂q`.
    moment_grads: Vec<[f64; 3]>,
    /// Per (row, filter): `∂Y/∂α` for each slot.
    alpha_grads: Vec<[f64; UNARY_GENES]>,
    relaxed: bool,
}

impl MeasureLayer {
    pub fn new(
        name: &str,
        kind: MeasureKind,
        filters: usize,
        weight: Vec<f64>,
        expr: MeasureExpr,
        normalize_counts: bool,
    ) -> MeasureLayer {
        let plen = kind.patch_len();
        let shape = match kind {
            MeasureKind::Dense { inputs } => vec![filters, inputs],
            MeasureKind::Conv(g) => vec![filters, g.in_c, g.kernel, g.kernel],
        };
        assert_eq!(weight.len(), filters * plen);
        let mut weight = Param::new(format!("{name}.weight"), shape, weight);
        weight.latent_binary = true;
        let alphas = AlphaParams::new(&expr, filters);
        MeasureLayer {
            kind,
            expr,
            weight,
            alpha_grads: core::array::from_fn(|s| {
                if alphas.slot(s).is_some() {
                    vec![0.0; filters]
                } else {
                    Vec::new()
                }
            }),
            alpha_names: core::array::from_fn(|s| format!("{name}.alpha{}", s + 1)),
            alpha_shape: vec![filters],
            alphas,
            normalize_counts,
            stats: GuardStats::default(),
            cache: None,
        }
    }

    pub fn filters(&self) -> usize {
        self.weight.shape[0]
    }

    fn patches(&self, x: &Tensor) -> (Vec<f64>, usize, usize) {
        match self.kind {
            MeasureKind::Dense { inputs } => {
                assert_eq!(x.features(), inputs, "measure layer input features");
                (x.data.clone(), 1, 1)
            }
            MeasureKind::Conv(g) => {
                assert_eq!(
                    (x.c, x.h, x.w),
                    (g.in_c, g.in_h, g.in_w),
                    "measure conv input"
                );
                (g.im2col(x, -1.0), g.out_h(), g.out_w())
            }
        }
    }

    pub fn forward(&mut self, x: Tensor, mode: Mode) -> Tensor {
        let (patches, oh, ow) = self.patches(&x);
        let plen = self.kind.patch_len();
        let filters = self.filters();
        let rows = patches.len() / plen;
        let weights: Vec<f64> = if mode.relaxed {
            self.weight.value.clone()
        } else {
            binarize_ste(&self.weight.value)
        };
        let q: Vec<f64> = weights.chunks(plen).map(|w| w.iter().sum()).collect();
        let n = plen as f64;
        let scale = if self.normalize_counts { 1.0 / n } else { 1.0 };
        let alpha: Vec<[f64; UNARY_GENES]> =
            (0..filters).map(|f| self.alphas.for_channel(f)).collect();

        let mut out = vec![0.0; rows * filters];
        let mut moment_grads = Vec::new();
        let mut alpha_grads = Vec::new();
        if mode.train {
            moment_grads.reserve(rows * filters);
            if self.expr.has_alpha() {
                alpha_grads.reserve(rows * filters);
            }
        }
        let mut stats = GuardStats::default();
        for r in 0..rows {
            let patch = &patches[r * plen..(r + 1) * plen];
            let p: f64 = patch.iter().sum();
            for f in 0..filters {
                let s = dot(patch, &weights[f * plen..(f + 1) * plen]);
                let mut counts = real_counts_from_moments(s, p, q[f], n);
                for c in &mut counts {
                    *c *= scale;
                }
                if mode.train {
                    let e = self.expr.eval_grad(counts, alpha[f], &mut stats);
                    let [ga, gb, gc, gd] = e.d_counts.map(|g| g * scale * 0.25);
                    moment_grads.push([ga - gb - gc + gd, ga - gb + gc - gd, ga + gb - gc - gd]);
                    if self.expr.has_alpha() {
                        alpha_grads.push(e.d_alpha);
                    }
                    out[r * filters + f] = e.value;
                } else {
                    out[r * filters + f] =
                        self.expr.eval_traced(counts, alpha[f], &mut stats).value;
                }
            }
        }
        self.stats.merge(&stats);
        if mode.train {
            self.cache = Some(MeasureCache {
                n: x.n,
                in_shape: (x.c, x.h, x.w),
                patches,
                weights,
                moment_grads,
                alpha_grads,
                relaxed: mode.relaxed,
            });
        }
        match self.kind {
            MeasureKind::Dense { .. } => Tensor::from_vec(x.n, filters, 1, 1, out),
            MeasureKind::Conv(_) => rows_to_nchw(&out, x.n, filters, oh, ow),
        }
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let cache = self.cache.take().expect("forward before backward");
        let plen = self.kind.patch_len();
        let filters = self.filters();
        let dy_rows = match self.kind {
            MeasureKind::Dense { .. } => dy.data.clone(),
            MeasureKind::Conv(_) => nchw_to_rows(dy),
        };
        let rows = dy_rows.len() / filters;
        let mut dpatches = vec![0.0; cache.patches.len()];
        let mut dweights = vec![0.0; cache.weights.len()];
        let has_alpha = self.expr.has_alpha();
        for r in 0..rows {
            let patch = &cache.patches[r * plen..(r + 1) * plen];
            let mut dp_sum = 0.0;
            for f in 0..filters {
                let k = r * filters + f;
                let g = dy_rows[k];
                if g == 0.0 {
                    continue;
                }
                let [gs, gp, gq] = cache.moment_grads[k];
                let ds = g * gs;
                dp_sum += g * gp;
                let wf = &cache.weights[f * plen..(f + 1) * plen];
                axpy(ds, wf, &mut dpatches[r * plen..(r + 1) * plen]);
                let dwf = &mut dweights[f * plen..(f + 1) * plen];
                axpy(ds, patch, dwf);
                let dq = g * gq;
                for v in dwf.iter_mut() {
                    *v += dq;
                }
                if has_alpha {
                    let da = cache.alpha_grads[k];
                    for s in 0..UNARY_GENES {
                        if !self.alpha_grads[s].is_empty() {
                            self.alpha_grads[s][f] += g * da[s];
                        }
                    }
                }
            }
            for v in &mut dpatches[r * plen..(r + 1) * plen] {
                *v += dp_sum;
            }
        }
        if cache.relaxed {
            for (gw, d) in self.weight.grad.iter_mut().zip(&dweights) {
                *gw += d;
            }
        } else {
            for ((gw, d), &w) in self
                .weight
                .grad
                .iter_mut()
                .zip(&dweights)
                .zip(&self.weight.value)
            {
                *gw += d * ste_gate(w);
            }
        }
        let (c, h, w) = cache.in_shape;
        match self.kind {
            MeasureKind::Dense { .. } => Tensor::from_vec(cache.n, c, h, w, dpatches),
            MeasureKind::Conv(g) => g.col2im(&dpatches, cache.n),
        }
    }

    fn visit(&mut self, f: &mut dyn FnMut(ParamMut<'_>)) {
        f(self.weight.view());
        for s in 0..UNARY_GENES {
            if let Some(value) = self.alphas.slot_mut(s) {
                f(ParamMut {
                    name: &self.alpha_names[s],
                    shape: &self.alpha_shape,
                    value,
                    grad: &mut self.alpha_grads[s],
                    latent_binary: false,
                });
            }
        }
    }

    fn named(&self) -> Vec<NamedTensor> {
        let mut out = vec![self.weight.named()];
        for s in 0..UNARY_GENES {
            if let Some(v) = self.alphas.slot(s) {
                out.push(NamedTensor {
                    name: self.alpha_names[s].clone(),
                    shape: self.alpha_shape.clone(),
                    data: v.to_vec(),
                });
            }
        }
        out
    }
}

/// One stage of a [`ToyModel`](super::ToyModel).
#[derive(Clone, Debug)]
pub enum Layer {
    Dense(Dense),
    Conv(Conv),
    BatchNorm(BatchNorm),
    HardTanh(HardTanh),
    Sign(SignSte),
    Pool(GlobalAvgPool),
    Measure(MeasureLayer),
}

impl Layer {
    pub fn forward(&mut self, x: Tensor, mode: Mode) -> Tensor {
        match self {
            Layer::Dense(l) => l.forward(x, mode),
            Layer::Conv(l) => l.forward(x, mode),
            Layer::BatchNorm(l) => l.forward(x, mode),
            Layer::HardTanh(l) => l.forward(x, mode),
            Layer::Sign(l) => l.forward(x, mode),
            Layer::Pool(l) => l.forward(x, mode),
            Layer::Measure(l) => l.forward(x, mode),
        }
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        match self {
            Layer::Dense(l) => l.backward(dy),
            Layer::Conv(l) => l.backward(dy),
            Layer::BatchNorm(l) => l.backward(dy),
            Layer::HardTanh(l) => l.backward(dy),
            Layer::Sign(l) => l.backward(dy),
            Layer::Pool(l) => l.backward(dy),
            Layer::Measure(l) => l.backward(dy),
        }
    }

    pub fn for_each_param(&mut self, f: &mut dyn FnMut(ParamMut<'_>)) {
        match self {
            Layer::Dense(l) => {
                f(l.weight.view());
                f(l.bias.view());
            }
            Layer::Conv(l) => {
                f(l.weight.view());
                f(l.bias.view());
            }
            Layer::BatchNorm(l) => {
                f(l.gamma.view());
                f(l.beta.view());
            }
            Layer::Measure(l) => l.visit(f),
            Layer::HardTanh(_) | Layer::Sign(_) | Layer::Pool(_) => {}
        }
    }

    /// Parameters followed by buffers, in a stable order.
    pub fn tensors(&self) -> Vec<NamedTensor> {
        match self {
            Layer::Dense(l) => vec![l.weight.named(), l.bias.named()],
            Layer::Conv(l) => vec![l.weight.named(), l.bias.named()],
            Layer::BatchNorm(l) => {
                let [m, v] = l.buffers();
                vec![l.gamma.named(), l.beta.named(), m, v]
            }
            Layer::Measure(l) => l.named(),
            Layer::HardTanh(_) | Layer::Sign(_) | Layer::Pool(_) => Vec::new(),
        }
    }

    /// Overwrites the tensor called `name`; returns false if this layer has none.
    pub fn load_tensor(&mut self, name: &str, data: &[f64]) -> bool {
        fn put(dst: &mut [f64], src: &[f64]) -> bool {
            if dst.len() != src.len() {
                return false;
            }
            dst.copy_from_slice(src);
            true
        }
        match self {
            Layer::Dense(Dense { weight, bias, .. }) | Layer::Conv(Conv { weight, bias, .. }) => {
                if weight.name == name {
                    return put(&mut weight.value, data);
                }
                if bias.name == name {
                    return put(&mut bias.value, data);
                }
                false
            }
            Layer::BatchNorm(l) => {
                if l.gamma.name == name {
                    return put(&mut l.gamma.value, data);
                }
                if l.beta.name == name {
                    return put(&mut l.beta.value, data);
                }
                let [m, v] = l.buffers();
                if m.name == name {
                    return put(&mut l.running_mean, data);
                }
                if v.name == name {
                    return put(&mut l.running_var, data);
                }
                false
            }
            Layer::Measure(l) => {
                if l.weight.name == name {
                    return put(&mut l.weight.value, data);
                }
                for s in 0..UNARY_GENES {
                    if l.alpha_names[s] == name {
                        if let Some(v) = l.alphas.slot_mut(s) {
                            return put(v, data);
                        }
                    }
                }
                false
            }
            Layer::HardTanh(_) | Layer::Sign(_) | Layer::Pool(_) => false,
        }
    }

    pub fn guard_stats(&self) -> Option<GuardStats> {
        match self {
            Layer::Measure(l) => Some(l.stats),
            _ => None,
        }
    }
}
