//! Kernel throughput, refusing to time kernels that disagree with a bit loop.

use std::time::{Duration, Instant};

use binsim_core::bitpack::{self, BitVector, KernelError, QuadCounts};
use binsim_core::SeedRng;
use rand::{Rng, SeedableRng};
use thiserror::Error;

pub type MatchCountsFn = fn(&BitVector, &BitVector) -> Result<QuadCounts, KernelError>;
pub type XnorDotFn = fn(&BitVector, &BitVector) -> Result<i64, KernelError>;

#[derive(Clone, Copy)]
pub struct Kernels {
    pub match_counts: MatchCountsFn,
    pub xnor_dot: XnorDotFn,
}

impl Default for Kernels {
    fn default() -> Self {
        Kernels {
            match_counts: bitpack::match_counts,
            xnor_dot: bitpack::xnor_dot,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum BenchError {
    #[error("{kernel} disagrees with the bit-loop oracle at n = {n}: got {got}, want {want}")]
    Mismatch {
        kernel: &'static str,
        n: usize,
        got: String,
        want: String,
    },
    #[error("{kernel} failed at n = {n}: {source}")]
    Kernel {
        kernel: &'static str,
        n: usize,
        source: KernelError,
    },
    #[error("bit length must be positive")]
    EmptyLength,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub pairs: usize,
    pub match_counts_per_sec: f64,
    pub xnor_dot_per_sec: f64,
}

/// Counts by inspecting one bit pair at a time.
pub fn oracle_counts(x: &BitVector, y: &BitVector) -> QuadCounts {
    let mut k = [0u64; 4];
    for i in 0..x.len() {
        match (x.get(i), y.get(i)) {
            (true, true) => k[0] += 1,
            (false, true) => k[1] += 1,
            (true, false) => k[2] += 1,
            (false, false) => k[3] += 1,
        }
    }
    QuadCounts::new(k[0], k[1], k[2], k[3])
}

pub fn random_bits(rng: &mut SeedRng, n: usize) -> BitVector {
    BitVector::from_bits((0..n).map(|_| rng.gen_bool(0.5)))
}

/// Compares both kernels with the oracle on `trials` random pairs of length `n`.
pub fn verify(
    kernels: &Kernels,
    n: usize,
    trials: usize,
    rng: &mut SeedRng,
) -> Result<(), BenchError> {
    for _ in 0..trials {
        let (x, y) = (random_bits(rng, n), random_bits(rng, n));
        let want = oracle_counts(&x, &y);
        let got = (kernels.match_counts)(&x, &y).map_err(|source| BenchError::Kernel {
            kernel: "match_counts",
            n,
            source,
        })?;
        if got != want {
            return Err(BenchError::Mismatch {
                kernel: "match_counts",
                n,
                got: format!("{got:?}"),
                want: format!("{want:?}"),
            });
        }
        let dot = (kernels.xnor_dot)(&x, &y).map_err(|source| BenchError::Kernel {
            kernel: "xnor_dot",
            n,
            source,
        })?;
        if dot != want.signed_dot() {
            return Err(BenchError::Mismatch {
                kernel: "xnor_dot",
                n,
                got: dot.to_string(),
                want: want.signed_dot().to_string(),
            });
        }
    }
    Ok(())
}

fn throughput(
    pairs: &[(BitVector, BitVector)],
    budget: Duration,
    mut f: impl FnMut(&BitVector, &BitVector) -> u64,
) -> f64 {
    let start = Instant::now();
    let mut calls = 0usize;
    let mut sink = 0u64;
    while start.elapsed() < budget || calls == 0 {
        for (x, y) in pairs {
            sink = sink.wrapping_add(f(x, y));
        }
        calls += pairs.len();
    }
    std::hint::black_box(sink);
    calls as f64 / start.elapsed().as_secs_f64()
}

/// Verifies, then times each kernel for about `budget` per size.
pub fn run(
    kernels: &Kernels,
    sizes: &[usize],
    budget: Duration,
    seed: u64,
) -> Result<Vec<BenchRow>, BenchError> {
    let mut rng = SeedRng::seed_from_u64(seed);
    for &n in sizes {
        if n == 0 {
            return Err(BenchError::EmptyLength);
        }
        verify(kernels, n, 200, &mut rng)?;
    }
    let mut rows = Vec::new();
    for &n in sizes {
        let pairs: Vec<_> = (0..256)
            .map(|_| (random_bits(&mut rng, n), random_bits(&mut rng, n)))
            .collect();
        let mc = kernels.match_counts;
        let xd = kernels.xnor_dot;
        rows.push(BenchRow {
            n,
            pairs: pairs.len(),
            match_counts_per_sec: throughput(&pairs, budget, |x, y| mc(x, y).map_or(0, |k| k.a)),
            xnor_dot_per_sec: throughput(&pairs, budget, |x, y| xd(x, y).map_or(0, |d| d as u64)),
        });
    }
    Ok(rows)
}

pub fn render(rows: &[BenchRow]) -> String {
    let mut s = format!(
        "{:>6}  {:>18}  {:>18}\n",
        "n", "match_counts/s", "xnor_dot/s"
    );
    for r in rows {
        s.push_str(&format!(
            "{:>6}  {:>18.0}  {:>18.0}\n",
            r.n, r.match_counts_per_sec, r.xnor_dot_per_sec
        ));
    }
    s
}
