//! JSON forms of fitness records, history lines and result rows.

use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use binsim_core::fitness::FitnessRecord;
use binsim_core::ga::{Individual, StepReport};
use binsim_core::{Genome, MeasureExpr};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordJson {
    pub genome: String,
    pub accuracy_trace: Vec<f64>,
    pub fitness: f64,
    pub rejected: bool,
    pub threshold_used: f64,
    pub wall_time: f64,
    pub diverged: bool,
    pub epochs_trained: u32,
}

impl From<&FitnessRecord> for RecordJson {
    fn from(r: &FitnessRecord) -> Self {
        RecordJson {
            genome: r.genome.to_string(),
            accuracy_trace: r.accuracy_trace.clone(),
            fitness: r.fitness,
            rejected: r.rejected,
            threshold_used: r.threshold_used,
            wall_time: r.wall_time,
            diverged: r.diverged,
            epochs_trained: r.epochs_trained,
        }
    }
}

impl RecordJson {
    pub fn to_record(&self) -> Result<FitnessRecord, String> {
        Ok(FitnessRecord {
            genome: parse_genome(&self.genome)?,
            accuracy_trace: self.accuracy_trace.clone(),
            fitness: self.fitness,
            rejected: self.rejected,
            threshold_used: self.threshold_used,
            wall_time: self.wall_time,
            diverged: self.diverged,
            epochs_trained: self.epochs_trained,
        })
    }
}

pub(crate) fn parse_genome(s: &str) -> Result<Genome, String> {
    s.parse().map_err(|e| format!("genome `{s}`: {e}"))
}

/// One line of the evaluation ledger.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerLine {
    pub config_hash: String,
    #[serde(flatten)]
    pub record: RecordJson,
}

/// One line of the search history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryLine {
    pub gen: u64,
    pub best: f64,
    pub median: f64,
    pub event: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub child: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub child_fitness: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub selection: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cache_hit: Option<bool>,
    pub stage: usize,
    pub config_hash: String,
}

impl HistoryLine {
    pub fn from_step(r: &StepReport, config_hash: &str) -> Self {
        HistoryLine {
            gen: r.generation,
            best: r.best,
            median: r.median,
            event: r.event.name().into(),
            child: Some(r.child.to_string()),
            child_fitness: Some(r.child_fitness),
            selection: Some(r.method.name().into()),
            cache_hit: Some(r.cache_hit),
            stage: r.stage,
            config_hash: config_hash.into(),
        }
    }
}

/// One row of the final population table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub rank: usize,
    pub genome: String,
    pub formula: String,
    pub fitness: f64,
    pub rejected: bool,
    pub config_hash: String,
}

impl ResultRow {
    pub fn new(rank: usize, m: &Individual, config_hash: &str) -> Self {
        ResultRow {
            rank,
            genome: m.genome.to_string(),
            formula: MeasureExpr::decode(m.genome).formula(),
            fitness: m.fitness,
            rejected: m.rejected,
            config_hash: config_hash.into(),
        }
    }
}

/// Appends serialized values, one JSON object per line.
pub struct JsonLines {
    out: BufWriter<File>,
}

impl JsonLines {
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(JsonLines {
            out: BufWriter::new(File::create(path)?),
        })
    }

    pub fn append_to(path: &Path) -> io::Result<Self> {
        let f = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(JsonLines {
            out: BufWriter::new(f),
        })
    }

    pub fn write<T: Serialize>(&mut self, value: &T) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, value)?;
        self.out.write_all(b"\n")
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }
}

/// Human-readable population table.
pub fn render_table(rows: &[ResultRow]) -> String {
    let width = rows
        .iter()
        .map(|r| r.formula.len())
        .max()
        .unwrap_or(7)
        .max(7);
    let mut s = format!(
        "{:>4}  {:<15}  {:<width$}  {:>8}  rejected\n",
        "rank", "genome", "formula", "fitness"
    );
    for r in rows {
        s.push_str(&format!(
            "{:>4}  {:<15}  {:<width$}  {:>8.4}  {}\n",
            r.rank,
            r.genome,
            r.formula,
            r.fitness,
            if r.rejected { "yes" } else { "no" }
        ));
    }
    s
}
