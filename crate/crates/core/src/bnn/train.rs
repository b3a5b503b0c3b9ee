use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;

use super::layers::Mode;
use super::model::{ModelConfig, ModelVariant, ToyModel};
use super::tensor::Tensor;
use crate::dataset::Dataset;
use crate::math;
use crate::measure::MeasureExpr;
use crate::SeedRng;

/// Hyperparameters of one training run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: u32,
    /// Epoch after which the early-rejection check runs.
    pub reject_epoch: u32,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub variant: ModelVariant,
    pub normalize_counts: bool,
    /// Reshuffle the training set every epoch.
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 15,
            reject_epoch: 1,
            batch_size: 128,
            learning_rate: 5e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            variant: ModelVariant::Mlp,
            normalize_counts: false,
            shuffle: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrainError {
    InvalidConfig(&'static str),
    EmptyDataset,
    /// Loss became NaN or infinite.
    Diverged {
        epoch: u32,
    },
    ShapeMismatch,
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::InvalidConfig(why) => write!(f, "invalid training config: {why}"),
            TrainError::EmptyDataset => f.write_str("dataset is empty"),
            TrainError::Diverged { epoch } => write!(f, "loss became non-finite in epoch {epoch}"),
            TrainError::ShapeMismatch => f.write_str("dataset shape does not match the model"),
        }
    }
}

impl core::error::Error for TrainError {}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.reject_epoch < 1 {
            return Err(TrainError::InvalidConfig("reject_epoch must be at least 1"));
        }
        if self.epochs < self.reject_epoch {
            return Err(TrainError::InvalidConfig("epochs must be >= reject_epoch"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::InvalidConfig("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch_size must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(TrainError::InvalidConfig("betas must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn model_config(&self, data: &Dataset) -> ModelConfig {
        let mut cfg = ModelConfig::new(self.variant, data.shape(), usize::from(data.num_classes()));
        cfg.normalize_counts = self.normalize_counts;
        cfg
    }
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[u8]) -> (f64, Tensor) {
    let k = logits.features();
    let n = logits.n;
    let mut grad = Tensor::zeros(n, logits.c, logits.h, logits.w);
    let mut loss = 0.0;
    for b in 0..n {
        let row = logits.sample(b);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&z| math::exp(z - max)).collect();
        let sum: f64 = exps.iter().sum();
        let y = usize::from(labels[b]);
        loss += -(math::ln(exps[y] / sum));
        for j in 0..k {
            let p = exps[j] / sum;
            grad.data[b * k + j] = (p - if j == y { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    (loss / n as f64, grad)
}

/// Index of the largest logit; ties go to the lowest class.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Builds an input batch in NCHW layout.
pub fn batch_tensor(data: &Dataset, indices: &[usize]) -> Tensor {
    let shape = data.shape();
    let feat = shape.len();
    let mut t = Tensor::zeros(indices.len(), shape.channels, shape.height, shape.width);
    for (slot, &i) in indices.iter().enumerate() {
        data.features_chw(i, &mut t.data[slot * feat..(slot + 1) * feat]);
    }
    t
}

/// Top-1 accuracy of `model` on `data` using running normalization statistics.
pub fn validate(model: &mut ToyModel, data: &Dataset) -> Result<f64, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if data.shape() != model.config().input {
        return Err(TrainError::ShapeMismatch);
    }
    let mut correct = 0usize;
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(256) {
        let logits = model.forward(batch_tensor(data, chunk), Mode::EVAL);
        for (slot, &i) in chunk.iter().enumerate() {
            if argmax(logits.sample(slot)) == usize::from(data.label(i)) {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Adam with a constant learning rate.
#[derive(Clone, Debug)]
struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    fn new(model: &mut ToyModel) -> Adam {
        let mut m = Vec::new();
        model.for_each_param(&mut |p| m.push(vec![0.0; p.value.len()]));
        Adam {
            v: m.clone(),
            m,
            t: 0,
        }
    }

    fn step(&mut self, model: &mut ToyModel, cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - libm::pow(cfg.beta1, f64::from(self.t));
        let bc2 = 1.0 - libm::pow(cfg.beta2, f64::from(self.t));
        let mut idx = 0;
        let (m_all, v_all) = (&mut self.m, &mut self.v);
        model.for_each_param(&mut |p| {
            let (m, v) = (&mut m_all[idx], &mut v_all[idx]);
            for j in 0..p.value.len() {
                let g = p.grad[j];
                m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
                v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                p.value[j] -= cfg.learning_rate * mhat / (math::sqrt(vhat) + cfg.adam_eps);
                if p.latent_binary {
                    p.value[j] = p.value[j].clamp(-1.0, 1.0);
                }
            }
            idx += 1;
        });
    }
}

/// Epoch-at-a-time trainer that owns its model and optimizer state.
#[derive(Clone, Debug)]
pub struct Trainer {
    model: ToyModel,
    cfg: TrainConfig,
    adam: Adam,
    rng: SeedRng,
    epochs_run: u32,
}

impl Trainer {
    pub fn new(model: ToyModel, cfg: TrainConfig) -> Result<Trainer, TrainError> {
        cfg.validate()?;
        let mut model = model;
        let adam = Adam::new(&mut model);
        let mut rng = SeedRng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        Ok(Trainer {
            model,
            cfg,
            adam,
            rng,
            epochs_run: 0,
        })
    }

    /// Fresh model for `expr` sized to `data`, seeded from the config.
    pub fn for_measure(
        cfg: TrainConfig,
        data: &Dataset,
        expr: MeasureExpr,
    ) -> Result<Trainer, TrainError> {
        let model = ToyModel::new(cfg.model_config(data), expr, cfg.seed);
        Trainer::new(model, cfg)
    }

    pub fn model(&self) -> &ToyModel {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut ToyModel {
        &mut self.model
    }

    pub fn into_model(self) -> ToyModel {
        self.model
    }

    pub fn epochs_run(&self) -> u32 {
        self.epochs_run
    }

    /// One pass over `data`; returns the mean training loss.
    pub fn train_epoch(&mut self, data: &Dataset) -> Result<f64, TrainError> {
        if data.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        if data.shape() != self.model.config().input {
            return Err(TrainError::ShapeMismatch);
        }
        self.epochs_run += 1;
        let mut order: Vec<usize> = (0..data.len()).collect();
        if self.cfg.shuffle {
            order.shuffle(&mut self.rng);
        }
        let mut total = 0.0;
        for chunk in order.chunks(self.cfg.batch_size) {
            let x = batch_tensor(data, chunk);
            let labels: Vec<u8> = chunk.iter().map(|&i| data.label(i)).collect();
            self.model.zero_grads();
            let logits = self.model.forward(x, Mode::TRAIN);
            let (loss, dlogits) = softmax_cross_entropy(&logits, &labels);
            if !loss.is_finite() {
                return Err(TrainError::Diverged {
                    epoch: self.epochs_run,
                });
            }
            total += loss * chunk.len() as f64;
            self.model.backward(&dlogits);
            self.adam.step(&mut self.model, &self.cfg);
        }
        Ok(total / data.len() as f64)
    }

    pub fn validate(&mut self, data: &Dataset) -> Result<f64, TrainError> {
        validate(&mut self.model, data)
    }
}

/// Per-epoch outcome of [`train`].
#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub losses: Vec<f64>,
    pub accuracy: Vec<f64>,
}

/// Trains a fresh model with `expr` for `cfg.epochs` epochs, validating after each.
pub fn train(
    cfg: &TrainConfig,
    train_set: &Dataset,
    validation: &Dataset,
    expr: MeasureExpr,
) -> Result<(TrainReport, ToyModel), TrainError> {
    let mut trainer = Trainer::for_measure(*cfg, train_set, expr)?;
    let mut report = TrainReport {
        losses: Vec::new(),
        accuracy: Vec::new(),
    };
    for _ in 0..cfg.epochs {
        report.losses.push(trainer.train_epoch(train_set)?);
        report.accuracy.push(trainer.validate(validation)?);
    }
    Ok((report, trainer.into_model()))
}
