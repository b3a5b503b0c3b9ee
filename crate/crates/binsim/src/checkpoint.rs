//! JSON checkpoints of a running search.

use std::fs;
use std::path::{Path, PathBuf};

use binsim_core::ga::{Individual, SearchConfig, SearchState};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::RunConfig;
use crate::records::{parse_genome, RecordJson};

pub const CHECKPOINT_SCHEMA: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("checkpoint is inconsistent: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberJson {
    pub genome: String,
    pub fitness: f64,
    pub rejected: bool,
    pub epochs: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub config_hash: String,
    pub config: RunConfig,
    pub generation: u64,
    pub stage: usize,
    pub stagnation: u64,
    pub rng_seed: u64,
    /// Generator position in 32-bit words since seeding.
    pub rng_draw_count: u64,
    pub population: Vec<MemberJson>,
    pub cache: Vec<RecordJson>,
}

impl Checkpoint {
    pub fn capture(state: &SearchState, config: &RunConfig) -> Checkpoint {
        Checkpoint {
            schema_version: CHECKPOINT_SCHEMA,
            config_hash: config.hash(),
            config: config.clone(),
            generation: state.generation(),
            stage: state.stage(),
            stagnation: state.stagnation(),
            rng_seed: state.seed(),
            rng_draw_count: u64::try_from(state.rng_word_pos())
                .expect("generator position fits in u64"),
            population: state
                .population()
                .members()
                .iter()
                .map(|m| MemberJson {
                    genome: m.genome.to_string(),
                    fitness: m.fitness,
                    rejected: m.rejected,
                    epochs: m.evaluated_epochs,
                })
                .collect(),
            cache: state.cache().values().map(RecordJson::from).collect(),
        }
    }

    pub fn restore(&self, search: &SearchConfig) -> Result<SearchState, CheckpointError> {
        if self.schema_version != CHECKPOINT_SCHEMA {
            return Err(CheckpointError::Invalid(format!(
                "schema_version {} is not {CHECKPOINT_SCHEMA}",
                self.schema_version
            )));
        }
        if self.config.hash() != self.config_hash {
            return Err(CheckpointError::Invalid(
                "config hash does not match the config echo".into(),
            ));
        }
        let members = self
            .population
            .iter()
            .map(|m| {
                Ok(Individual {
                    genome: parse_genome(&m.genome)?,
                    fitness: m.fitness,
                    rejected: m.rejected,
                    evaluated_epochs: m.epochs,
                })
            })
            .collect::<Result<Vec<_>, String>>()
            .map_err(CheckpointError::Invalid)?;
        let mut cache = std::collections::BTreeMap::new();
        for r in &self.cache {
            let rec = r.to_record().map_err(CheckpointError::Invalid)?;
            if cache.insert(rec.genome, rec).is_some() {
                return Err(CheckpointError::Invalid(format!(
                    "duplicate cache entry {}",
                    r.genome
                )));
            }
        }
        SearchState::from_parts(
            search,
            members,
            self.generation,
            self.stage,
            self.stagnation,
            self.rng_seed,
            u128::from(self.rng_draw_count),
            cache,
        )
        .map_err(|e| CheckpointError::Invalid(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    /// Writes through a temporary file so a crash never leaves a torn checkpoint.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let io = |source| CheckpointError::Io {
            path: path.into(),
            source,
        };
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, self.to_json()).map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
        let text = fs::read_to_string(path).map_err(|source| CheckpointError::Io {
            path: path.into(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| CheckpointError::Parse {
            path: path.into(),
            source,
        })
    }
}
