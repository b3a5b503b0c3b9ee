use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use super::genome::{Genome, UNARY_GENES};
use super::ops::{BinaryOp, GuardStats, UnaryOp};

/// Input names of the unary slots, in genome order.
pub const SLOT_INPUTS: [&str; UNARY_GENES] = ["a", "d", "b", "c"];

/// Maps a slot to its position in `(a, b, c, d)` order.
const SLOT_TO_COUNT: [usize; UNARY_GENES] = [0, 3, 1, 2];

/// A decoded measure `Y = B3(B1(U1(a), U2(d)), B2(U3(b), U4(c)))`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MeasureExpr {
    genome: Genome,
    unary: [UnaryOp; UNARY_GENES],
    binary: [BinaryOp; 3],
}

/// Result of a forward pass with gradients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    /// `∂Y/∂a, ∂Y/∂b, ∂Y/∂c, ∂Y/∂d`.
    pub d_counts: [f64; 4],
    /// `∂Y/∂α` per unary slot; zero for slots without `α`.
    pub d_alpha: [f64; UNARY_GENES],
}

/// Intermediate node values of one evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Trace {
    /// Slot outputs `a', d', b', c'`.
    pub unary: [f64; UNARY_GENES],
    /// Slot inputs after any count preprocessing.
    pub inputs: [f64; UNARY_GENES],
    pub pair_ad: f64,
    pub pair_bc: f64,
    pub value: f64,
}

impl MeasureExpr {
    pub fn decode(genome: Genome) -> MeasureExpr {
        MeasureExpr {
            genome,
            unary: genome.unary(),
            binary: genome.binary(),
        }
    }

    pub fn genome(&self) -> Genome {
        self.genome
    }

    pub fn unary_ops(&self) -> [UnaryOp; UNARY_GENES] {
        self.unary
    }

    pub fn binary_ops(&self) -> [BinaryOp; 3] {
        self.binary
    }

    /// Unary slots whose operator carries a learnable `α`.
    pub fn alpha_slots(&self) -> impl Iterator<Item = usize> + '_ {
        (0..UNARY_GENES).filter(|&s| self.unary[s].uses_alpha())
    }

    pub fn has_alpha(&self) -> bool {
        self.alpha_slots().next().is_some()
    }

    fn slot_inputs(counts: [f64; 4]) -> [f64; UNARY_GENES] {
        core::array::from_fn(|s| counts[SLOT_TO_COUNT[s]])
    }

    /// Forward value; `counts` are `(a, b, c, d)` and `alpha` holds one value per slot.
    pub fn eval(&self, counts: [f64; 4], alpha: [f64; UNARY_GENES]) -> f64 {
        self.eval_traced(counts, alpha, &mut GuardStats::default())
            .value
    }

    pub fn eval_traced(
        &self,
        counts: [f64; 4],
        alpha: [f64; UNARY_GENES],
        stats: &mut GuardStats,
    ) -> Trace {
        let inputs = Self::slot_inputs(counts);
        let unary: [f64; UNARY_GENES] =
            core::array::from_fn(|s| self.unary[s].apply(inputs[s], alpha[s], stats).value);
        let pair_ad = self.binary[0].apply(unary[0], unary[1], stats).value;
        let pair_bc = self.binary[1].apply(unary[2], unary[3], stats).value;
        let mut value = self.binary[2].apply(pair_ad, pair_bc, stats).value;
        if !value.is_finite() {
            stats.non_finite += 1;
            value = 0.0;
        }
        Trace {
            unary,
            inputs,
            pair_ad,
            pair_bc,
            value,
        }
    }

    /// Forward value and analytic gradients under the same guards as [`eval`](Self::eval).
    pub fn eval_grad(
        &self,
        counts: [f64; 4],
        alpha: [f64; UNARY_GENES],
        stats: &mut GuardStats,
    ) -> Evaluation {
        let inputs = Self::slot_inputs(counts);
        let u: [_; UNARY_GENES] =
            core::array::from_fn(|s| self.unary[s].apply(inputs[s], alpha[s], stats));
        let p1 = self.binary[0].apply(u[0].value, u[1].value, stats);
        let p2 = self.binary[1].apply(u[2].value, u[3].value, stats);
        let top = self.binary[2].apply(p1.value, p2.value, stats);

        let d_unary = [
            top.d_x * p1.d_x,
            top.d_x * p1.d_y,
            top.d_y * p2.d_x,
            top.d_y * p2.d_y,
        ];
        let mut d_counts = [0.0; 4];
        let mut d_alpha = [0.0; UNARY_GENES];
        for s in 0..UNARY_GENES {
            d_counts[SLOT_TO_COUNT[s]] = d_unary[s] * u[s].d_x;
            d_alpha[s] = d_unary[s] * u[s].d_alpha;
        }

        let finite = top.value.is_finite()
            && d_counts.iter().all(|g| g.is_finite())
            && d_alpha.iter().all(|g| g.is_finite());
        if !finite {
            stats.non_finite += 1;
            return Evaluation {
                value: if top.value.is_finite() {
                    top.value
                } else {
                    0.0
                },
                d_counts: [0.0; 4],
                d_alpha: [0.0; UNARY_GENES],
            };
        }
        Evaluation {
            value: top.value,
            d_counts,
            d_alpha,
        }
    }

    /// Infix rendering, e.g. `(b^3 - c) / (a^3 + d)`.
    pub fn formula(&self) -> String {
        let alphas = self.alpha_slots().count();
        let leaves: [String; UNARY_GENES] = core::array::from_fn(|s| {
            let alpha = if alphas > 1 {
                alloc::format!("alpha_{}", SLOT_INPUTS[s])
            } else {
                String::from("alpha")
            };
            self.unary[s].render(SLOT_INPUTS[s], &alpha)
        });
        let left = self.binary[0].render(&leaves[0], &leaves[1]);
        let right = self.binary[1].render(&leaves[2], &leaves[3]);
        let full = self.binary[2].render(&left, &right);
        strip_outer_parens(full)
    }
}

impl fmt::Display for MeasureExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.formula())
    }
}

/// Drops one pair of parentheses enclosing the whole string.
fn strip_outer_parens(s: String) -> String {
    let bytes = s.as_bytes();
    if bytes.first() != Some(&b'(') || bytes.last() != Some(&b')') {
        return s;
    }
    let mut depth = 0i32;
    for (i, &b) in bytes.iter().enumerate() {
        match b {
            b'(' => depth += 1,
            b')' => {
                depth -= 1;
                if depth == 0 && i + 1 != bytes.len() {
                    return s;
                }
            }
            _ => {}
        }
    }
    String::from(&s[1..s.len() - 1])
}

/// Learnable `α` values: one vector of `channels` entries per `α`-bearing slot.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaParams {
    channels: usize,
    slots: [Option<Vec<f64>>; UNARY_GENES],
}

impl AlphaParams {
    pub const INIT: f64 = 1.0;

    pub fn new(expr: &MeasureExpr, channels: usize) -> AlphaParams {
        AlphaParams {
            channels,
            slots: core::array::from_fn(|s| {
                expr.unary[s]
                    .uses_alpha()
                    .then(|| vec![Self::INIT; channels])
            }),
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn slot(&self, s: usize) -> Option<&[f64]> {
        self.slots[s].as_deref()
    }

    pub fn slot_mut(&mut self, s: usize) -> Option<&mut [f64]> {
        self.slots[s].as_deref_mut()
    }

    /// Per-slot values for `channel`; zero where the slot has no `α`.
    pub fn for_channel(&self, channel: usize) -> [f64; UNARY_GENES] {
        core::array::from_fn(|s| self.slots[s].as_ref().map_or(0.0, |v| v[channel]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn genome(g: [u8; 7]) -> Genome {
        Genome::new(g).unwrap()
    }

    #[test]
    fn baseline_decodes_to_cross_correlation() {
        let e = MeasureExpr::decode(Genome::BASELINE);
        assert_eq!(e.formula(), "(a + d) - (b + c)");
        assert_eq!(e.eval([1.0, 1.0, 1.0, 1.0], [0.0; 4]), 0.0);
        let g = e.eval_grad([3.0, 5.0, 7.0, 11.0], [0.0; 4], &mut GuardStats::default());
        assert_eq!(g.d_counts, [1.0, -1.0, -1.0, 1.0]);
        assert_eq!(g.value, 14.0 - 12.0);
    }

    #[test]
    fn m1_shape() {
        let e = MeasureExpr::decode(genome([3, 0, 3, 0, 0, 1, 6]));
        assert_eq!(e.formula(), "(b^3 - c) / (a^3 + d)");
        assert_eq!(e.eval([2.0, 1.0, 1.0, 1.0], [0.0; 4]), 0.0);
        let v = e.eval([2.0, 3.0, 1.0, 1.0], [0.0; 4]);
        assert!((v - 26.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn zero_operator_prunes_inputs() {
        let e = MeasureExpr::decode(genome([0, 1, 1, 1, 0, 0, 0]));
        assert_eq!(e.eval([4.0, 9.0, 2.0, 7.0], [0.0; 4]), 4.0);
        assert_eq!(e.formula(), "(a + 0) + (0 + 0)");
    }

    #[test]
    fn division_guard_is_counted() {
        let m7 = MeasureExpr::decode(genome([3, 15, 3, 0, 0, 0, 4]));
        let mut st = GuardStats::default();
        let t = m7.eval_traced([1.0, 0.0, 0.0, 0.0], [0.0, 2.0, 0.0, 0.0], &mut st);
        assert_eq!(st.division, 1);
        assert!((t.value - 3.0 / 1e-6).abs() < 1e-3);
        assert!(t.value.is_finite());
    }

    #[test]
    fn cube_gradient_chains() {
        // Y = a^3 + 0 + ... with B3 = x+y
        let e = MeasureExpr::decode(genome([3, 1, 1, 1, 0, 0, 0]));
        let g = e.eval_grad([2.0, 0.0, 0.0, 0.0], [0.0; 4], &mut GuardStats::default());
        assert_eq!(g.d_counts[0], 12.0);
    }

    #[test]
    fn alpha_slots_and_params() {
        let e = MeasureExpr::decode(genome([15, 16, 0, 17, 0, 0, 0]));
        assert_eq!(e.alpha_slots().collect::<Vec<_>>(), [0, 1, 3]);
        let mut p = AlphaParams::new(&e, 3);
        p.slot_mut(1).unwrap()[2] = 4.0;
        assert_eq!(p.for_channel(2), [1.0, 4.0, 0.0, 1.0]);
        assert!(p.slot(2).is_none());
        assert_eq!(e.formula(), "(alpha_a + alpha_d*d) + (b + (alpha_c + c))");
        let g = e.eval_grad(
            [1.0, 2.0, 3.0, 4.0],
            p.for_channel(2),
            &mut GuardStats::default(),
        );
        assert_eq!(g.d_alpha, [1.0, 4.0, 0.0, 1.0]);
        assert_eq!(g.value, 1.0 + 16.0 + 2.0 + 1.0 + 3.0);
    }

    #[test]
    fn outer_parens_only_stripped_when_enclosing() {
        assert_eq!(strip_outer_parens("(a) + (b)".into()), "(a) + (b)");
        assert_eq!(strip_outer_parens("((a) + (b))".into()), "(a) + (b)");
        assert_eq!(strip_outer_parens("max(a, b)".into()), "max(a, b)");
    }
}
