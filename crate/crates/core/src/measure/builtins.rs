//! The cross-correlation baseline and the ten searched measures M1–M10.

use core::fmt;

use super::genome::Genome;

/// Names accepted by [`builtin`], in table order.
pub const BUILTIN_NAMES: [&str; 11] = [
    "baseline", "M1", "M2", "M3", "M4", "M5", "M6", "M7", "M8", "M9", "M10",
];

const BUILTIN_GENES: [[u8; 7]; 11] = [
    // (a + d) - (b + c)
    [0, 0, 0, 0, 0, 0, 1],
    // (b^3 - c) / (a^3 + d)
    [3, 0, 3, 0, 0, 1, 6],
    // (b^3 + sigmoid(c)) / (a^3 + d)
    [3, 0, 3, 8, 0, 0, 6],
    // (b^3 + c) / (a^3 + d)
    [3, 0, 3, 0, 0, 0, 6],
    // (b^3 - sin(c)) / (a^3 + d)
    [3, 0, 3, 6, 0, 1, 6],
    // (b - erf(c)) / (a^3 + exp(-d^2))
    [3, 14, 0, 11, 0, 1, 6],
    // (b^3 * sigmoid(c)) / (a^3 + d)
    [3, 0, 3, 0, 0, 10, 6],
    // (a^3 + alpha) / (b^3 + c)
    [3, 15, 3, 0, 0, 0, 4],
    // (b^3 + exp(-c)) / (a^3 + d)
    [3, 0, 3, 13, 0, 0, 6],
    // (b^3 / atan(c)) / (a^3 + d^2); B2 = x/y, B3 = y/x
    [3, 2, 3, 10, 0, 4, 6],
    // (b^3 + sigmoid(c)) / (a^3 + d^2)
    [3, 2, 3, 8, 0, 0, 6],
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnknownMeasure(pub alloc::string::String);

impl fmt::Display for UnknownMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "unknown built-in measure `{}` (expected baseline or M1..M10)",
            self.0
        )
    }
}

impl core::error::Error for UnknownMeasure {}

pub fn builtin(name: &str) -> Result<Genome, UnknownMeasure> {
    BUILTIN_NAMES
        .iter()
        .position(|&n| n == name)
        .map(|i| Genome::new(BUILTIN_GENES[i]).expect("built-in genes are in range"))
        .ok_or_else(|| UnknownMeasure(name.into()))
}

/// All built-ins as `(name, genome)` pairs.
pub fn builtins() -> impl Iterator<Item = (&'static str, Genome)> {
    BUILTIN_NAMES
        .iter()
        .map(|&n| (n, builtin(n).expect("listed name")))
}
