//! Binary similarity measure search for binarized neural networks.
//!
//! A candidate measure is a fixed operator graph over the four match
//! frequencies `a`, `b`, `c`, `d` of two binary vectors:
//!
//! ```text
//! Y = B3( B1(U1(a), U2(d)), B2(U3(b), U4(c)) )
//! ```
//!
//! The crate provides the popcount kernels that produce those frequencies,
//! the genome encoding of the graph with forward and analytic backward
//! evaluation, a steady-state genetic algorithm over genomes, an
//! early-rejection fitness function, and a small binarized network trainer
//! whose binary layers score inputs with a pluggable measure.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, parallel
//! evaluation and the command line live in the `binsim` crate.

#![no_std]
#![deny(unsafe_code)]
#![allow(clippy::needless_range_loop, clippy::large_enum_variant)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod bitpack;
pub mod bnn;
pub mod dataset;
pub mod fitness;
pub mod ga;
pub mod measure;

mod math;

pub use bitpack::{BitVector, KernelError, QuadCounts};
pub use dataset::{Dataset, Split};
pub use fitness::{FitnessFn, FitnessRecord};
pub use measure::{AlphaParams, Genome, MeasureExpr};

/// Seeded generator used everywhere randomness is needed.
pub type SeedRng = rand_chacha::ChaCha8Rng;
