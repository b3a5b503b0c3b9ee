//! Genome encoding and evaluation of the fixed similarity-measure graph.

mod builtins;
mod expr;
mod genome;
pub mod ops;

pub use builtins::{builtin, builtins, UnknownMeasure, BUILTIN_NAMES};
pub use expr::{AlphaParams, Evaluation, MeasureExpr, Trace, SLOT_INPUTS};
pub use genome::{
    CompactGenome, Genome, InvalidGenome, ParseGenomeError, BINARY_GENES, GENOME_LEN,
    SEARCH_SPACE_SIZE, UNARY_GENES,
};
pub use ops::{BinaryOp, GuardStats, UnaryOp};
