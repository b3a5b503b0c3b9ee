//! File formats, parallel evaluation and the command line for the measure
//! search in `binsim-core`.
//!
//! * [`bnnd`] reads and writes labeled 8-bit image datasets.
//! * [`model_file`] stores trained model tensors.
//! * [`config`] is the JSON run configuration.
//! * [`checkpoint`] captures and restores a search mid-run.
//! * [`parallel`] evaluates batches of genomes on the rayon pool.
//! * [`cli`] implements the `search`, `eval`, `decode` and `bench` commands.

pub mod bench;
pub mod bnnd;
pub mod checkpoint;
pub mod cli;
pub mod config;
mod error;
pub mod model_file;
pub mod parallel;
pub mod records;

pub use error::{FileError, FormatError};
