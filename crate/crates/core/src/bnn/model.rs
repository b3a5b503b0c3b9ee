use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};

use super::layers::{
    BatchNorm, Conv, Dense, GlobalAvgPool, HardTanh, Layer, MeasureKind, MeasureLayer, Mode,
    NamedTensor, ParamMut, SignSte,
};
use super::tensor::{ConvGeometry, Tensor};
use crate::dataset::ImageShape;
use crate::math;
use crate::measure::{GuardStats, MeasureExpr};
use crate::SeedRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelVariant {
    /// FP dense → binarized dense measure layer → FP head.
    Mlp,
    /// FP 3×3 conv → two binarized measure-conv blocks with stride 2 → pool → FP head.
    SmallConv,
}

impl ModelVariant {
    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::Mlp => "mlp",
            ModelVariant::SmallConv => "small-conv",
        }
    }
}

/// Architecture of the toy network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ModelConfig {
    pub variant: ModelVariant,
    pub input: ImageShape,
    pub classes: usize,
    /// MLP hidden width (entry layer output and measure layer width).
    pub hidden: usize,
    /// Conv widths: entry conv, first and second measure block.
    pub conv_channels: [usize; 3],
    pub normalize_counts: bool,
}

impl ModelConfig {
    pub fn new(variant: ModelVariant, input: ImageShape, classes: usize) -> ModelConfig {
        ModelConfig {
            variant,
            input,
            classes,
            hidden: 128,
            conv_channels: [16, 32, 64],
            normalize_counts: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LoadError {
    UnknownTensor(String),
    Missing(String),
    ShapeMismatch { name: String },
}

impl fmt::Display for LoadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoadError::UnknownTensor(n) => write!(f, "model has no tensor `{n}`"),
            LoadError::Missing(n) => write!(f, "tensor `{n}` missing from file"),
            LoadError::ShapeMismatch { name } => write!(f, "tensor `{name}` has the wrong shape"),
        }
    }
}

impl core::error::Error for LoadError {}

/// Binarized network with real first and last layers.
#[derive(Clone, Debug)]
pub struct ToyModel {
    config: ModelConfig,
    layers: Vec<Layer>,
}

fn glorot(rng: &mut SeedRng, fan_in: usize, fan_out: usize, len: usize) -> Vec<f64> {
    let bound = math::sqrt(6.0 / (fan_in + fan_out) as f64);
    (0..len).map(|_| rng.gen_range(-bound..bound)).collect()
}

impl ToyModel {
    pub fn new(config: ModelConfig, expr: MeasureExpr, seed: u64) -> ToyModel {
        let mut rng = SeedRng::seed_from_u64(seed);
        let ImageShape {
            height,
            width,
            channels,
        } = config.input;
        let k = config.classes;
        let norm = config.normalize_counts;
        let layers = match config.variant {
            ModelVariant::Mlp => {
                let inputs = config.input.len();
                let h = config.hidden;
                alloc::vec![
                    Layer::Dense(Dense::new(
                        "fc1",
                        inputs,
                        h,
                        glorot(&mut rng, inputs, h, inputs * h)
                    )),
                    Layer::BatchNorm(BatchNorm::new("bn1", h)),
                    Layer::HardTanh(HardTanh::default()),
                    Layer::Sign(SignSte::default()),
                    Layer::Measure(MeasureLayer::new(
                        "bin2",
                        MeasureKind::Dense { inputs: h },
                        h,
                        glorot(&mut rng, h, h, h * h),
                        expr,
                        norm,
                    )),
                    Layer::BatchNorm(BatchNorm::new("bn2", h)),
                    Layer::HardTanh(HardTanh::default()),
                    Layer::Dense(Dense::new("head", h, k, glorot(&mut rng, h, k, h * k))),
                ]
            }
            ModelVariant::SmallConv => {
                let [c1, c2, c3] = config.conv_channels;
                let g1 = ConvGeometry {
                    in_c: channels,
                    in_h: height,
                    in_w: width,
                    kernel: 3,
                    stride: 1,
                    pad: 1,
                };
                let g2 = ConvGeometry {
                    in_c: c1,
                    in_h: g1.out_h(),
                    in_w: g1.out_w(),
                    kernel: 3,
                    stride: 2,
                    pad: 1,
                };
                let g3 = ConvGeometry {
                    in_c: c2,
                    in_h: g2.out_h(),
                    in_w: g2.out_w(),
                    kernel: 3,
                    stride: 2,
                    pad: 1,
                };
                let conv_init = |rng: &mut SeedRng, g: &ConvGeometry, filters: usize| {
                    glorot(rng, g.patch_len(), filters * 9, filters * g.patch_len())
                };
                alloc::vec![
                    Layer::Conv(Conv::new("conv1", g1, c1, conv_init(&mut rng, &g1, c1))),
                    Layer::BatchNorm(BatchNorm::new("bn1", c1)),
                    Layer::HardTanh(HardTanh::default()),
                    Layer::Sign(SignSte::default()),
                    Layer::Measure(MeasureLayer::new(
                        "bin2",
                        MeasureKind::Conv(g2),
                        c2,
                        conv_init(&mut rng, &g2, c2),
                        expr,
                        norm,
                    )),
                    Layer::BatchNorm(BatchNorm::new("bn2", c2)),
                    Layer::HardTanh(HardTanh::default()),
                    Layer::Sign(SignSte::default()),
                    Layer::Measure(MeasureLayer::new(
                        "bin3",
                        MeasureKind::Conv(g3),
                        c3,
                        conv_init(&mut rng, &g3, c3),
                        expr,
                        norm,
                    )),
                    Layer::BatchNorm(BatchNorm::new("bn3", c3)),
                    Layer::HardTanh(HardTanh::default()),
                    Layer::Pool(GlobalAvgPool::default()),
                    Layer::Dense(Dense::new("head", c3, k, glorot(&mut rng, c3, k, c3 * k))),
                ]
            }
        };
        ToyModel { config, layers }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn forward(&mut self, x: Tensor, mode: Mode) -> Tensor {
        self.layers.iter_mut().fold(x, |h, l| l.forward(h, mode))
    }

    /// Backpropagates `dlogits`, accumulating parameter gradients; returns the input gradient.
    pub fn backward(&mut self, dlogits: &Tensor) -> Tensor {
        let mut g = dlogits.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g);
        }
        g
    }

    pub fn for_each_param(&mut self, f: &mut dyn FnMut(ParamMut<'_>)) {
        for layer in &mut self.layers {
            layer.for_each_param(f);
        }
    }

    pub fn zero_grads(&mut self) {
        self.for_each_param(&mut |p| p.grad.fill(0.0));
    }

    pub fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.for_each_param(&mut |p| n += p.value.len());
        n
    }

    /// All parameter values concatenated in visiting order.
    pub fn flat_params(&mut self) -> Vec<f64> {
        let mut out = Vec::new();
        self.for_each_param(&mut |p| out.extend_from_slice(p.value));
        out
    }

    pub fn flat_grads(&mut self) -> Vec<f64> {
        let mut out = Vec::new();
        self.for_each_param(&mut |p| out.extend_from_slice(p.grad));
        out
    }

    pub fn set_flat_params(&mut self, values: &[f64]) {
        let mut offset = 0;
        self.for_each_param(&mut |p| {
            let n = p.value.len();
            p.value.copy_from_slice(&values[offset..offset + n]);
            offset += n;
        });
        assert_eq!(offset, values.len(), "flat parameter length");
    }

    /// Parameters and normalization buffers for persistence.
    pub fn export_tensors(&self) -> Vec<NamedTensor> {
        self.layers.iter().flat_map(|l| l.tensors()).collect()
    }

    /// Loads every tensor of the model from `tensors`; all must be present.
    pub fn import_tensors(&mut self, tensors: &[NamedTensor]) -> Result<(), LoadError> {
        let expected = self.export_tensors();
        for t in tensors {
            let Some(e) = expected.iter().find(|e| e.name == t.name) else {
                return Err(LoadError::UnknownTensor(t.name.clone()));
            };
            if e.shape != t.shape {
                return Err(LoadError::ShapeMismatch {
                    name: t.name.clone(),
                });
            }
        }
        for e in &expected {
            let Some(t) = tensors.iter().find(|t| t.name == e.name) else {
                return Err(LoadError::Missing(e.name.clone()));
            };
            let loaded = self
                .layers
                .iter_mut()
                .any(|l| l.load_tensor(&t.name, &t.data));
            if !loaded {
                return Err(LoadError::ShapeMismatch {
                    name: t.name.clone(),
                });
            }
        }
        Ok(())
    }

    /// Guard activations summed over all measure layers since construction.
    pub fn guard_stats(&self) -> GuardStats {
        let mut s = GuardStats::default();
        for l in &self.layers {
            if let Some(g) = l.guard_stats() {
                s.merge(&g);
            }
        }
        s
    }
}
