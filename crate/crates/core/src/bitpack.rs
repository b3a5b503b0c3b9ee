//! Bit-packed ±1 vectors and the popcount kernels over them.
//!
//! Value `+1` is stored as bit 1 and `-1` as bit 0, little-endian inside
//! 64-bit words. Bits past `len` in the last word are always zero, so every
//! complement has to be masked before it is counted.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

const WORD_BITS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelError {
    /// The two operands have different bit lengths.
    LengthMismatch { left: usize, right: usize },
    /// Moments that no pair of bit vectors can produce.
    InvalidMoments { s: i64, p: i64, q: i64, n: i64 },
}

impl fmt::Display for KernelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelError::LengthMismatch { left, right } => {
                write!(f, "bit length mismatch: {left} vs {right}")
            }
            KernelError::InvalidMoments { s, p, q, n } => {
                write!(f, "inconsistent moments s={s} p={p} q={q} for n={n}")
            }
        }
    }
}

impl core::error::Error for KernelError {}

/// A packed vector of `len` bits.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct BitVector {
    words: Vec<u64>,
    len: usize,
}

impl BitVector {
    pub fn zeros(len: usize) -> Self {
        BitVector {
            words: vec![0; len.div_ceil(WORD_BITS)],
            len,
        }
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut words = Vec::new();
        let mut len = 0;
        for bit in bits {
            if len % WORD_BITS == 0 {
                words.push(0);
            }
            if bit {
                *words.last_mut().unwrap() |= 1 << (len % WORD_BITS);
            }
            len += 1;
        }
        BitVector { words, len }
    }

    /// Builds a vector from raw words, clearing any bits past `len`.
    ///
    /// Returns `None` when `words.len()` does not match `len`.
    pub fn from_words(mut words: Vec<u64>, len: usize) -> Option<Self> {
        if words.len() != len.div_ceil(WORD_BITS) {
            return None;
        }
        if let Some(last) = words.last_mut() {
            *last &= tail_mask(len);
        }
        Some(BitVector { words, len })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        self.words[i / WORD_BITS] >> (i % WORD_BITS) & 1 == 1
    }

    pub fn set(&mut self, i: usize, bit: bool) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        let mask = 1u64 << (i % WORD_BITS);
        if bit {
            self.words[i / WORD_BITS] |= mask;
        } else {
            self.words[i / WORD_BITS] &= !mask;
        }
    }

    pub fn count_ones(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    /// Sum of the vector read as ±1 values: `2·popcount − len`.
    pub fn signed_sum(&self) -> i64 {
        2 * self.count_ones() as i64 - self.len as i64
    }

    /// Bitwise complement restricted to the valid bits.
    pub fn not(&self) -> BitVector {
        let mut words: Vec<u64> = self.words.iter().map(|w| !w).collect();
        if let Some(last) = words.last_mut() {
            *last &= tail_mask(self.len);
        }
        BitVector {
            words,
            len: self.len,
        }
    }

    /// Iterator over the bits as ±1 values.
    pub fn signs(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(|i| if self.get(i) { 1.0 } else { -1.0 })
    }
}

/// Mask selecting the valid bits of the last word of a `len`-bit vector.
#[inline]
fn tail_mask(len: usize) -> u64 {
    match len % WORD_BITS {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

/// Match frequencies of two equal-length binary vectors.
///
/// `a` counts 1/1 positions, `b` counts 0/1, `c` counts 1/0 and `d` counts
/// 0/0, where the first symbol is the input bit and the second the weight bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct QuadCounts {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl QuadCounts {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Self {
        QuadCounts { a, b, c, d }
    }

    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }

    /// The counts as reals in `(a, b, c, d)` order.
    pub fn as_reals(&self) -> [f64; 4] {
        [self.a as f64, self.b as f64, self.c as f64, self.d as f64]
    }

    /// The ±1 dot product `(a + d) − (b + c)`.
    pub fn signed_dot(&self) -> i64 {
        (self.a + self.d) as i64 - (self.b + self.c) as i64
    }

    /// Counts with the roles of the two operands exchanged.
    pub fn swapped(&self) -> QuadCounts {
        QuadCounts {
            a: self.a,
            b: self.c,
            c: self.b,
            d: self.d,
        }
    }

    /// Jaccard coefficient `a / (a + b + c)`; `None` when both vectors are all zero.
    pub fn jaccard(&self) -> Option<f64> {
        let den = self.a + self.b + self.c;
        (den > 0).then(|| self.a as f64 / den as f64)
    }

    /// Sokal–Michener simple matching `(a + d) / n`.
    pub fn sokal_michener(&self) -> Option<f64> {
        let n = self.total();
        (n > 0).then(|| (self.a + self.d) as f64 / n as f64)
    }

    /// Yule's Q `(ad − bc) / (ad + bc)`.
    pub fn yule_q(&self) -> Option<f64> {
        let ad = (self.a * self.d) as f64;
        let bc = (self.b * self.c) as f64;
        let den = ad + bc;
        (den > 0.0).then(|| (ad - bc) / den)
    }
}

/// Binarizes `values`: bit `i` is set iff `values[i] >= threshold`.
pub fn pack_signs(values: &[f64], threshold: f64) -> BitVector {
    BitVector::from_bits(values.iter().map(|&v| v >= threshold))
}

fn check_lengths(x: &BitVector, y: &BitVector) -> Result<(), KernelError> {
    if x.len != y.len {
        return Err(KernelError::LengthMismatch {
            left: x.len,
            right: y.len,
        });
    }
    Ok(())
}

/// Computes `a`, `b`, `c`, `d` for the input `x` against the weight `y`.
pub fn match_counts(x: &BitVector, y: &BitVector) -> Result<QuadCounts, KernelError> {
    check_lengths(x, y)?;
    let last = x.words.len().saturating_sub(1);
    let mut counts = QuadCounts::default();
    for (i, (&xw, &yw)) in x.words.iter().zip(&y.words).enumerate() {
        let mask = if i == last {
            tail_mask(x.len)
        } else {
            u64::MAX
        };
        // complements computed once, shared by b, c and d
        let nx = !xw & mask;
        let ny = !yw & mask;
        counts.a += u64::from((xw & yw).count_ones());
        counts.b += u64::from((nx & yw).count_ones());
        counts.c += u64::from((xw & ny).count_ones());
        counts.d += u64::from((nx & ny).count_ones());
    }
    Ok(counts)
}

/// The ±1 dot product via `2·popcount(XNOR(x, y)) − n`.
pub fn xnor_dot(x: &BitVector, y: &BitVector) -> Result<i64, KernelError> {
    check_lengths(x, y)?;
    let last = x.words.len().saturating_sub(1);
    let agree: u64 = x
        .words
        .iter()
        .zip(&y.words)
        .enumerate()
        .map(|(i, (&xw, &yw))| {
            let mask = if i == last {
                tail_mask(x.len)
            } else {
                u64::MAX
            };
            u64::from((!(xw ^ yw) & mask).count_ones())
        })
        .sum();
    Ok(2 * agree as i64 - x.len as i64)
}

/// Recovers the match frequencies from the ±1 moments of a pair.
///
/// `s` is the ±1 dot product, `p` and `q` are the ±1 sums of the input and
/// the weight, and `n` is the shared length.
pub fn counts_from_moments(s: i64, p: i64, q: i64, n: i64) -> Result<QuadCounts, KernelError> {
    let invalid = KernelError::InvalidMoments { s, p, q, n };
    let quarter = |v: i64| -> Result<u64, KernelError> {
        if v < 0 || v % 4 != 0 {
            Err(invalid)
        } else {
            Ok((v / 4) as u64)
        }
    };
    if n < 0 {
        return Err(invalid);
    }
    Ok(QuadCounts {
        a: quarter(n + s + p + q)?,
        b: quarter(n - s - p + q)?,
        c: quarter(n - s + p - q)?,
        d: quarter(n + s - p - q)?,
    })
}

/// Real-valued counts from real moments; exact when the moments come from ±1 vectors.
#[inline]
pub fn real_counts_from_moments(s: f64, p: f64, q: f64, n: f64) -> [f64; 4] {
    [
        (n + s + p + q) * 0.25,
        (n - s - p + q) * 0.25,
        (n - s + p - q) * 0.25,
        (n + s - p - q) * 0.25,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bits(s: &str) -> BitVector {
        BitVector::from_bits(s.chars().map(|c| c == '1'))
    }

    fn oracle(x: &BitVector, y: &BitVector) -> QuadCounts {
        let mut q = QuadCounts::default();
        for i in 0..x.len() {
            match (x.get(i), y.get(i)) {
                (true, true) => q.a += 1,
                (false, true) => q.b += 1,
                (true, false) => q.c += 1,
                (false, false) => q.d += 1,
            }
        }
        q
    }

    #[test]
    fn pack_sign_examples() {
        let v = pack_signs(&[1.0, -1.0, -1.0, 1.0], 0.0);
        assert_eq!(v, bits("1001"));
        assert_eq!(v.len(), 4);
        assert!(pack_signs(&[], 0.0).is_empty());
        assert!(pack_signs(&[0.0], 0.0).get(0));
    }

    #[test]
    fn match_count_examples() {
        assert_eq!(
            match_counts(&bits("1100"), &bits("1010")).unwrap(),
            QuadCounts::new(1, 1, 1, 1)
        );
        assert_eq!(
            match_counts(&bits("1111"), &bits("0000")).unwrap(),
            QuadCounts::new(0, 0, 4, 0)
        );
        let x = bits("1011001");
        let q = match_counts(&x, &x).unwrap();
        assert_eq!((q.b, q.c, q.a + q.d), (0, 0, 7));
    }

    #[test]
    fn length_mismatch_is_reported() {
        let err = match_counts(&bits("10"), &bits("101")).unwrap_err();
        assert_eq!(err, KernelError::LengthMismatch { left: 2, right: 3 });
        assert!(xnor_dot(&bits("1"), &bits("")).is_err());
    }

    #[test]
    fn xnor_dot_examples() {
        assert_eq!(xnor_dot(&bits("1100"), &bits("1010")).unwrap(), 0);
        let x = BitVector::from_bits((0..64).map(|i| i % 3 == 0));
        assert_eq!(xnor_dot(&x, &x).unwrap(), 64);
        let y = bits("1011001");
        assert_eq!(xnor_dot(&y.not(), &y).unwrap(), -7);
    }

    #[test]
    fn moment_examples() {
        assert_eq!(
            counts_from_moments(0, 0, 0, 4).unwrap(),
            QuadCounts::new(1, 1, 1, 1)
        );
        assert_eq!(
            counts_from_moments(9, 9, 9, 9).unwrap(),
            QuadCounts::new(9, 0, 0, 0)
        );
        // x = y = 1100
        assert_eq!(
            counts_from_moments(4, 0, 0, 4).unwrap(),
            QuadCounts::new(2, 0, 0, 2)
        );
        assert!(counts_from_moments(1, 0, 0, 4).is_err());
        assert!(counts_from_moments(8, 0, 0, 4).is_err());
    }

    #[test]
    fn padding_stays_canonical() {
        let v = BitVector::from_words(vec![u64::MAX], 5).unwrap();
        assert_eq!(v.words(), &[0b11111]);
        assert_eq!(v.not().words(), &[0]);
        assert!(BitVector::from_words(vec![0, 0], 64).is_none());
        let z = BitVector::zeros(70);
        assert_eq!(z.not().count_ones(), 70);
    }

    #[test]
    fn reference_coefficients_against_set_formulas() {
        // x = {0, 1, 2, 5}, y = {1, 2, 3} over 8 positions
        let x = BitVector::from_bits((0..8).map(|i| [0, 1, 2, 5].contains(&i)));
        let y = BitVector::from_bits((0..8).map(|i| [1, 2, 3].contains(&i)));
        let q = match_counts(&x, &y).unwrap();
        // |x ∩ y| = 2, |x ∪ y| = 5
        assert!((q.jaccard().unwrap() - 2.0 / 5.0).abs() < 1e-15);
        // positions where membership agrees: 1, 2, 4, 6, 7
        assert!((q.sokal_michener().unwrap() - 5.0 / 8.0).abs() < 1e-15);
        // a=2, d=3, b=1 (only y: 3), c=2 (only x: 0, 5)
        assert_eq!(q, QuadCounts::new(2, 1, 2, 3));
        assert!((q.yule_q().unwrap() - (6.0 - 2.0) / (6.0 + 2.0)).abs() < 1e-15);
        assert_eq!(QuadCounts::default().jaccard(), None);
    }

    #[test]
    fn exhaustive_small_lengths() {
        for n in 1..=6usize {
            for xs in 0u32..(1 << n) {
                for ys in 0u32..(1 << n) {
                    let x = BitVector::from_bits((0..n).map(|i| xs >> i & 1 == 1));
                    let y = BitVector::from_bits((0..n).map(|i| ys >> i & 1 == 1));
                    assert_eq!(match_counts(&x, &y).unwrap(), oracle(&x, &y));
                }
            }
        }
    }

    fn pair() -> impl Strategy<Value = (BitVector, BitVector)> {
        (1usize..=512).prop_flat_map(|n| {
            (
                proptest::collection::vec(any::<bool>(), n),
                proptest::collection::vec(any::<bool>(), n),
            )
                .prop_map(|(x, y)| (BitVector::from_bits(x), BitVector::from_bits(y)))
        })
    }

    proptest! {
        #[test]
        fn kernels_agree_with_oracle((x, y) in pair()) {
            let n = x.len() as i64;
            let q = match_counts(&x, &y).unwrap();
            prop_assert_eq!(q, oracle(&x, &y));
            prop_assert_eq!(q.total(), x.len() as u64);
            let dot = xnor_dot(&x, &y).unwrap();
            prop_assert_eq!(dot, q.signed_dot());
            let from_moments = counts_from_moments(dot, x.signed_sum(), y.signed_sum(), n).unwrap();
            prop_assert_eq!(from_moments, q);
            prop_assert_eq!(match_counts(&y, &x).unwrap(), q.swapped());
        }
    }
}
