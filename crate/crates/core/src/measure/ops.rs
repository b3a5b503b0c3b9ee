//! The unary and binary operator tables and their guarded derivatives.

use crate::math;

/// Denominators with magnitude below this get it added.
pub const DIV_EPS: f64 = 1e-6;
/// Offset inside `log`.
pub const LOG_EPS: f64 = 1e-6;
/// `tan` output is clamped to `[-TAN_LIMIT, TAN_LIMIT]`.
pub const TAN_LIMIT: f64 = 1e6;

const TWO_OVER_SQRT_PI: f64 = core::f64::consts::FRAC_2_SQRT_PI;

/// Counters of guard activations during evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GuardStats {
    pub division: u64,
    pub log: u64,
    pub sqrt: u64,
    pub tan: u64,
    /// Outputs that were still non-finite and got replaced by zero.
    pub non_finite: u64,
}

impl GuardStats {
    pub fn total(&self) -> u64 {
        self.division + self.log + self.sqrt + self.tan + self.non_finite
    }

    pub fn merge(&mut self, other: &GuardStats) {
        self.division += other.division;
        self.log += other.log;
        self.sqrt += other.sqrt;
        self.tan += other.tan;
        self.non_finite += other.non_finite;
    }
}

/// Value and partial derivatives of a unary operator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnaryOut {
    pub value: f64,
    pub d_x: f64,
    pub d_alpha: f64,
}

/// Value and partial derivatives of a binary operator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BinaryOut {
    pub value: f64,
    pub d_x: f64,
    pub d_y: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnaryOp {
    Identity,
    Zero,
    Square,
    Cube,
    Sqrt,
    Log,
    Sin,
    Cos,
    Sigmoid,
    Tan,
    Atan,
    Erf,
    Erfc,
    ExpNeg,
    ExpNegSquare,
    Alpha,
    AlphaMul,
    AlphaAdd,
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 18] = [
        UnaryOp::Identity,
        UnaryOp::Zero,
        UnaryOp::Square,
        UnaryOp::Cube,
        UnaryOp::Sqrt,
        UnaryOp::Log,
        UnaryOp::Sin,
        UnaryOp::Cos,
        UnaryOp::Sigmoid,
        UnaryOp::Tan,
        UnaryOp::Atan,
        UnaryOp::Erf,
        UnaryOp::Erfc,
        UnaryOp::ExpNeg,
        UnaryOp::ExpNegSquare,
        UnaryOp::Alpha,
        UnaryOp::AlphaMul,
        UnaryOp::AlphaAdd,
    ];

    pub fn from_index(i: u8) -> Option<UnaryOp> {
        Self::ALL.get(usize::from(i)).copied()
    }

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn uses_alpha(self) -> bool {
        matches!(self, UnaryOp::Alpha | UnaryOp::AlphaMul | UnaryOp::AlphaAdd)
    }

    /// Operator name with `x` as the placeholder operand.
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Identity => "x",
            UnaryOp::Zero => "0",
            UnaryOp::Square => "x^2",
            UnaryOp::Cube => "x^3",
            UnaryOp::Sqrt => "sqrt(x)",
            UnaryOp::Log => "log(x)",
            UnaryOp::Sin => "sin(x)",
            UnaryOp::Cos => "cos(x)",
            UnaryOp::Sigmoid => "sigmoid(x)",
            UnaryOp::Tan => "tan(x)",
            UnaryOp::Atan => "atan(x)",
            UnaryOp::Erf => "erf(x)",
            UnaryOp::Erfc => "erfc(x)",
            UnaryOp::ExpNeg => "exp(-x)",
            UnaryOp::ExpNegSquare => "exp(-x^2)",
            UnaryOp::Alpha => "alpha",
            UnaryOp::AlphaMul => "alpha*x",
            UnaryOp::AlphaAdd => "alpha+x",
        }
    }

    pub(crate) fn render(self, v: &str, alpha: &str) -> alloc::string::String {
        use alloc::format;
        match self {
            UnaryOp::Identity => v.into(),
            UnaryOp::Zero => "0".into(),
            UnaryOp::Square => format!("{v}^2"),
            UnaryOp::Cube => format!("{v}^3"),
            UnaryOp::Sqrt => format!("sqrt({v})"),
            UnaryOp::Log => format!("log({v})"),
            UnaryOp::Sin => format!("sin({v})"),
            UnaryOp::Cos => format!("cos({v})"),
            UnaryOp::Sigmoid => format!("sigmoid({v})"),
            UnaryOp::Tan => format!("tan({v})"),
            UnaryOp::Atan => format!("atan({v})"),
            UnaryOp::Erf => format!("erf({v})"),
            UnaryOp::Erfc => format!("erfc({v})"),
            UnaryOp::ExpNeg => format!("exp(-{v})"),
            UnaryOp::ExpNegSquare => format!("exp(-{v}^2)"),
            UnaryOp::Alpha => alpha.into(),
            UnaryOp::AlphaMul => format!("{alpha}*{v}"),
            UnaryOp::AlphaAdd => format!("({alpha} + {v})"),
        }
    }

    #[inline]
    pub fn apply(self, x: f64, alpha: f64, stats: &mut GuardStats) -> UnaryOut {
        let out = |value, d_x| UnaryOut {
            value,
            d_x,
            d_alpha: 0.0,
        };
        match self {
            UnaryOp::Identity => out(x, 1.0),
            UnaryOp::Zero => out(0.0, 0.0),
            UnaryOp::Square => out(x * x, 2.0 * x),
            UnaryOp::Cube => out(x * x * x, 3.0 * x * x),
            UnaryOp::Sqrt => {
                if x < DIV_EPS {
                    stats.sqrt += 1;
                }
                let clipped = x.max(0.0);
                let d = if x < 0.0 {
                    0.0
                } else {
                    0.5 / math::sqrt(clipped.max(DIV_EPS))
                };
                out(math::sqrt(clipped), d)
            }
            UnaryOp::Log => {
                if x < LOG_EPS {
                    stats.log += 1;
                }
                let clipped = x.max(0.0);
                let d = if x < 0.0 {
                    0.0
                } else {
                    1.0 / (clipped + LOG_EPS)
                };
                out(math::ln(clipped + LOG_EPS), d)
            }
            UnaryOp::Sin => out(math::sin(x), math::cos(x)),
            UnaryOp::Cos => out(math::cos(x), -math::sin(x)),
            UnaryOp::Sigmoid => {
                let s = math::sigmoid(x);
                out(s, s * (1.0 - s))
            }
            UnaryOp::Tan => {
                let t = math::tan(x);
                if t.abs() > TAN_LIMIT || !t.is_finite() {
                    stats.tan += 1;
                    out(t.clamp(-TAN_LIMIT, TAN_LIMIT), 0.0)
                } else {
                    out(t, 1.0 + t * t)
                }
            }
            UnaryOp::Atan => out(math::atan(x), 1.0 / (1.0 + x * x)),
            UnaryOp::Erf => out(math::erf(x), TWO_OVER_SQRT_PI * math::exp(-x * x)),
            UnaryOp::Erfc => out(math::erfc(x), -TWO_OVER_SQRT_PI * math::exp(-x * x)),
            UnaryOp::ExpNeg => {
                let e = math::exp(-x);
                out(e, -e)
            }
            UnaryOp::ExpNegSquare => {
                let e = math::exp(-x * x);
                out(e, -2.0 * x * e)
            }
            UnaryOp::Alpha => UnaryOut {
                value: alpha,
                d_x: 0.0,
                d_alpha: 1.0,
            },
            UnaryOp::AlphaMul => UnaryOut {
                value: alpha * x,
                d_x: alpha,
                d_alpha: x,
            },
            UnaryOp::AlphaAdd => UnaryOut {
                value: alpha + x,
                d_x: 1.0,
                d_alpha: 1.0,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinaryOp {
    Add,
    Sub,
    RevSub,
    Mul,
    Div,
    XOverSum,
    RevDiv,
    YOverSum,
    Max,
    Min,
    XSigmoidY,
    YSigmoidX,
    ExpNegAbsDiff,
    ExpNegSquaredDiff,
}

/// `den` with the small-magnitude guard applied.
#[inline]
fn guard_den(den: f64, stats: &mut GuardStats) -> f64 {
    if den.abs() < DIV_EPS {
        stats.division += 1;
        den + DIV_EPS
    } else {
        den
    }
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 14] = [
        BinaryOp::Add,
        BinaryOp::Sub,
        BinaryOp::RevSub,
        BinaryOp::Mul,
        BinaryOp::Div,
        BinaryOp::XOverSum,
        BinaryOp::RevDiv,
        BinaryOp::YOverSum,
        BinaryOp::Max,
        BinaryOp::Min,
        BinaryOp::XSigmoidY,
        BinaryOp::YSigmoidX,
        BinaryOp::ExpNegAbsDiff,
        BinaryOp::ExpNegSquaredDiff,
    ];

    pub fn from_index(i: u8) -> Option<BinaryOp> {
        Self::ALL.get(usize::from(i)).copied()
    }

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "x+y",
            BinaryOp::Sub => "x-y",
            BinaryOp::RevSub => "y-x",
            BinaryOp::Mul => "x*y",
            BinaryOp::Div => "x/y",
            BinaryOp::XOverSum => "x/(x+y)",
            BinaryOp::RevDiv => "y/x",
            BinaryOp::YOverSum => "y/(x+y)",
            BinaryOp::Max => "max(x,y)",
            BinaryOp::Min => "min(x,y)",
            BinaryOp::XSigmoidY => "x*sigmoid(y)",
            BinaryOp::YSigmoidX => "y*sigmoid(x)",
            BinaryOp::ExpNegAbsDiff => "exp(-|x-y|)",
            BinaryOp::ExpNegSquaredDiff => "exp(-(x-y)^2)",
        }
    }

    pub(crate) fn render(self, x: &str, y: &str) -> alloc::string::String {
        use alloc::format;
        match self {
            BinaryOp::Add => format!("({x} + {y})"),
            BinaryOp::Sub => format!("({x} - {y})"),
            BinaryOp::RevSub => format!("({y} - {x})"),
            BinaryOp::Mul => format!("({x} * {y})"),
            BinaryOp::Div => format!("({x} / {y})"),
            BinaryOp::XOverSum => format!("({x} / ({x} + {y}))"),
            BinaryOp::RevDiv => format!("({y} / {x})"),
            BinaryOp::YOverSum => format!("({y} / ({x} + {y}))"),
            BinaryOp::Max => format!("max({x}, {y})"),
            BinaryOp::Min => format!("min({x}, {y})"),
            BinaryOp::XSigmoidY => format!("({x} * sigmoid({y}))"),
            BinaryOp::YSigmoidX => format!("({y} * sigmoid({x}))"),
            BinaryOp::ExpNegAbsDiff => format!("exp(-|{x} - {y}|)"),
            BinaryOp::ExpNegSquaredDiff => format!("exp(-({x} - {y})^2)"),
        }
    }

    #[inline]
    pub fn apply(self, x: f64, y: f64, stats: &mut GuardStats) -> BinaryOut {
        let out = |value, d_x, d_y| BinaryOut { value, d_x, d_y };
        match self {
            BinaryOp::Add => out(x + y, 1.0, 1.0),
            BinaryOp::Sub => out(x - y, 1.0, -1.0),
            BinaryOp::RevSub => out(y - x, -1.0, 1.0),
            BinaryOp::Mul => out(x * y, y, x),
            BinaryOp::Div => {
                let den = guard_den(y, stats);
                out(x / den, 1.0 / den, -x / (den * den))
            }
            BinaryOp::RevDiv => {
                let den = guard_den(x, stats);
                out(y / den, -y / (den * den), 1.0 / den)
            }
            BinaryOp::XOverSum => {
                let den = guard_den(x + y, stats);
                let sq = den * den;
                out(x / den, 1.0 / den - x / sq, -x / sq)
            }
            BinaryOp::YOverSum => {
                let den = guard_den(x + y, stats);
                let sq = den * den;
                out(y / den, -y / sq, 1.0 / den - y / sq)
            }
            // ties take the first argument
            BinaryOp::Max => {
                if x >= y {
                    out(x, 1.0, 0.0)
                } else {
                    out(y, 0.0, 1.0)
                }
            }
            BinaryOp::Min => {
                if x <= y {
                    out(x, 1.0, 0.0)
                } else {
                    out(y, 0.0, 1.0)
                }
            }
            BinaryOp::XSigmoidY => {
                let s = math::sigmoid(y);
                out(x * s, s, x * s * (1.0 - s))
            }
            BinaryOp::YSigmoidX => {
                let s = math::sigmoid(x);
                out(y * s, y * s * (1.0 - s), s)
            }
            BinaryOp::ExpNegAbsDiff => {
                let diff = x - y;
                let e = math::exp(-diff.abs());
                let sign = if diff > 0.0 {
                    1.0
                } else if diff < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                out(e, -sign * e, sign * e)
            }
            BinaryOp::ExpNegSquaredDiff => {
                let diff = x - y;
                let e = math::exp(-diff * diff);
                out(e, -2.0 * diff * e, 2.0 * diff * e)
            }
        }
    }
}
