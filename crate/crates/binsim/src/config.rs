//! JSON run configuration.
//!
//! Unknown keys are rejected. Relative paths resolve against the directory
//! of the configuration file.

use std::fs;
use std::path::{Path, PathBuf};

use binsim_core::bnn::{ModelVariant, TrainConfig};
use binsim_core::dataset::{synthesize, Dataset, ImageShape, Split, SynthSpec};
use binsim_core::fitness::{chance_ratio, scale_threshold, ThresholdSchedule, BASE_THRESHOLDS};
use binsim_core::ga::SearchConfig;
use binsim_core::Genome;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bnnd;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("config field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Mlp,
    SmallConv,
}

impl From<Variant> for ModelVariant {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Mlp => ModelVariant::Mlp,
            Variant::SmallConv => ModelVariant::SmallConv,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: u32,
    pub reject_epoch: u32,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub variant: Variant,
    pub normalize_counts: bool,
    pub shuffle: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            epochs: t.epochs,
            reject_epoch: t.reject_epoch,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            variant: Variant::Mlp,
            normalize_counts: t.normalize_counts,
            shuffle: t.shuffle,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSection {
    Synthetic {
        #[serde(default = "default_synth_seed")]
        seed: u64,
        #[serde(default = "default_train_samples")]
        train_samples: usize,
        #[serde(default = "default_validation_samples")]
        validation_samples: usize,
        #[serde(default = "default_classes")]
        classes: u8,
        #[serde(default = "default_side")]
        height: usize,
        #[serde(default = "default_side")]
        width: usize,
        #[serde(default = "default_channels")]
        channels: usize,
        #[serde(default = "default_noise")]
        noise: f64,
    },
    Files {
        train: PathBuf,
        validation: PathBuf,
    },
}

fn default_synth_seed() -> u64 {
    7
}
fn default_train_samples() -> usize {
    1000
}
fn default_validation_samples() -> usize {
    500
}
fn default_classes() -> u8 {
    10
}
fn default_side() -> usize {
    16
}
fn default_channels() -> usize {
    1
}
fn default_noise() -> f64 {
    0.1
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection::Synthetic {
            seed: default_synth_seed(),
            train_samples: default_train_samples(),
            validation_samples: default_validation_samples(),
            classes: default_classes(),
            height: default_side(),
            width: default_side(),
            channels: default_channels(),
            noise: default_noise(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub population_size: usize,
    /// Stage thresholds before chance scaling.
    pub thresholds: Vec<f64>,
    /// Scale thresholds by `chance / 0.1` of the validation set.
    pub scale_thresholds: bool,
    /// Generation at which each stage begins; evenly spaced when absent.
    pub milestones: Option<Vec<u64>>,
    pub max_generations: u64,
    pub stagnation_window: u64,
    pub init_draw_budget: usize,
    /// Checkpoint period in generations; `0` writes only the final checkpoint.
    pub checkpoint_every: u64,
    /// Replace training with the Hamming-distance landscape around this genome.
    pub surrogate_target: Option<String>,
    /// Worker threads for batch evaluation; all cores when absent.
    pub threads: Option<usize>,
    pub dataset: DatasetSection,
    pub train: TrainSection,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            population_size: 30,
            thresholds: BASE_THRESHOLDS.to_vec(),
            scale_thresholds: true,
            milestones: None,
            max_generations: 500,
            stagnation_window: 50,
            init_draw_budget: 1500,
            checkpoint_every: 25,
            surrogate_target: None,
            threads: None,
            dataset: DatasetSection::default(),
            train: TrainSection::default(),
            output_dir: PathBuf::from("binsim-out"),
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Reads, resolves and validates a configuration file.
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.into(),
            source,
        })?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
                path: path.into(),
                source,
            })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Makes relative paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let DatasetSection::Files { train, validation } = &mut self.dataset {
            *train = resolve(base, train);
            *validation = resolve(base, validation);
        }
        self.output_dir = resolve(base, &self.output_dir);
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, found {}", self.schema_version),
            ));
        }
        if self.population_size < 2 {
            return Err(invalid("population_size", "must be at least 2"));
        }
        if self.thresholds.is_empty() || self.thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(invalid("thresholds", "need at least one value in [0, 1]"));
        }
        if let Some(m) = &self.milestones {
            if m.len() != self.thresholds.len() {
                return Err(invalid("milestones", "must have one entry per threshold"));
            }
            if m[0] != 0 || m.windows(2).any(|w| w[1] < w[0]) {
                return Err(invalid("milestones", "must start at 0 and not decrease"));
            }
        }
        if let Some(t) = &self.surrogate_target {
            t.parse::<Genome>()
                .map_err(|e| invalid("surrogate_target", e.to_string()))?;
        }
        if self.threads == Some(0) {
            return Err(invalid("threads", "must be positive"));
        }
        self.train_config()
            .validate()
            .map_err(|e| invalid("train", e.to_string()))?;
        match &self.dataset {
            DatasetSection::Synthetic {
                train_samples,
                validation_samples,
                classes,
                height,
                width,
                channels,
                noise,
                ..
            } => {
                if *classes < 2 {
                    return Err(invalid("dataset.classes", "must be at least 2"));
                }
                if *train_samples == 0 || *validation_samples == 0 {
                    return Err(invalid(
                        "dataset.train_samples",
                        "sample counts must be positive",
                    ));
                }
                if *height == 0 || *width == 0 || *channels == 0 {
                    return Err(invalid(
                        "dataset.height",
                        "image dimensions must be positive",
                    ));
                }
                if !(0.0..=1.0).contains(noise) {
                    return Err(invalid("dataset.noise", "must lie in [0, 1]"));
                }
            }
            DatasetSection::Files { train, validation } => {
                // the surrogate never reads the data
                if self.surrogate_target.is_none() {
                    if !train.is_file() {
                        return Err(invalid(
                            "dataset.train",
                            format!("{} not found", train.display()),
                        ));
                    }
                    if !validation.is_file() {
                        return Err(invalid(
                            "dataset.validation",
                            format!("{} not found", validation.display()),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn surrogate(&self) -> Option<Genome> {
        self.surrogate_target
            .as_ref()
            .map(|t| t.parse().expect("validated"))
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            reject_epoch: t.reject_epoch,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            seed: self.seed,
            variant: t.variant.into(),
            normalize_counts: t.normalize_counts,
            shuffle: t.shuffle,
            ..TrainConfig::default()
        }
    }

    /// Train and validation splits.
    pub fn load_datasets(&self) -> Result<(Dataset, Dataset), crate::FileError> {
        match &self.dataset {
            DatasetSection::Synthetic {
                seed,
                train_samples,
                validation_samples,
                classes,
                height,
                width,
                channels,
                noise,
            } => {
                let mut spec = SynthSpec::new(
                    *seed,
                    *train_samples,
                    *classes,
                    ImageShape::new(*height, *width, *channels),
                );
                spec.noise = *noise;
                let train = synthesize(&spec, Split::Train);
                spec.samples = *validation_samples;
                Ok((train, synthesize(&spec, Split::Validation)))
            }
            DatasetSection::Files { train, validation } => Ok((
                bnnd::load(train, Split::Train)?,
                bnnd::load(validation, Split::Validation)?,
            )),
        }
    }

    /// Search parameters with thresholds scaled for `ratio = chance / 0.1`.
    pub fn search_config(&self, ratio: f64) -> SearchConfig {
        let k = self.thresholds.len() as u64;
        let milestones = self
            .milestones
            .clone()
            .unwrap_or_else(|| (0..k).map(|i| i * self.max_generations / k).collect());
        let thresholds = self
            .thresholds
            .iter()
            .map(|&t| {
                if self.scale_thresholds {
                    scale_threshold(t, ratio)
                } else {
                    t
                }
            })
            .collect();
        SearchConfig {
            population_size: self.population_size,
            schedule: ThresholdSchedule::new(thresholds, milestones).expect("validated schedule"),
            max_generations: self.max_generations,
            stagnation_window: self.stagnation_window,
            init_draw_budget: self.init_draw_budget,
        }
    }

    /// `chance / 0.1` for the validation set.
    pub fn chance_ratio(&self, validation: &Dataset) -> f64 {
        chance_ratio(validation.num_classes())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        let sc = c.search_config(1.0);
        assert_eq!(sc.schedule.milestones(), [0, 125, 250, 375]);
        assert_eq!(sc.schedule.thresholds(), [0.11, 0.25, 0.35, 0.40]);
    }

    #[test]
    fn empty_object_means_defaults() {
        let c: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"populaton_size": 3}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"train": {"epoch": 3}}"#).is_err());
    }

    #[test]
    fn missing_dataset_names_the_field() {
        let c = RunConfig {
            dataset: DatasetSection::Files {
                train: "/nonexistent/train.bnnd".into(),
                validation: "/nonexistent/val.bnnd".into(),
            },
            ..RunConfig::default()
        };
        let e = c.validate().unwrap_err().to_string();
        assert!(e.contains("dataset.train"), "{e}");
    }

    #[test]
    fn two_class_thresholds_clamp() {
        let c = RunConfig::default();
        let sc = c.search_config(5.0);
        assert_eq!(sc.schedule.thresholds(), [0.55, 0.95, 0.95, 0.95]);
    }
}
