use core::fmt;
use core::str::FromStr;

use rand::Rng;

use super::ops::{BinaryOp, UnaryOp};

pub const UNARY_GENES: usize = 4;
pub const BINARY_GENES: usize = 3;
pub const GENOME_LEN: usize = UNARY_GENES + BINARY_GENES;

/// Number of distinct genomes: `18^4 · 14^3`.
pub const SEARCH_SPACE_SIZE: u64 = search_space_size();

const fn search_space_size() -> u64 {
    let u = UnaryOp::ALL.len() as u64;
    let b = BinaryOp::ALL.len() as u64;
    u * u * u * u * b * b * b
}

/// Seven operator indices `U1 U2 U3 U4 B1 B2 B3`.
///
/// `U1..U4` act on `a`, `d`, `b`, `c` in that order; `B1` joins `a'` with
/// `d'`, `B2` joins `b'` with `c'` and `B3` joins the two results.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Genome([u8; GENOME_LEN]);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InvalidGenome {
    pub position: usize,
    pub value: u8,
}

impl fmt::Display for InvalidGenome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "gene {} has value {} outside 0..{}",
            self.position,
            self.value,
            Genome::domain(self.position)
        )
    }
}

impl core::error::Error for InvalidGenome {}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParseGenomeError {
    /// Wrong number of genes.
    Arity { found: usize },
    /// A field that is not a decimal integer; `position` is the gene index.
    NotANumber { position: usize },
    /// A gene outside its operator table.
    OutOfRange { position: usize, value: u64 },
}

impl fmt::Display for ParseGenomeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseGenomeError::Arity { found } => {
                write!(f, "expected {GENOME_LEN} genes, found {found}")
            }
            ParseGenomeError::NotANumber { position } => {
                write!(f, "gene {position} is not a decimal number")
            }
            ParseGenomeError::OutOfRange { position, value } => write!(
                f,
                "gene {position} = {value} is outside 0..{}",
                Genome::domain(*position)
            ),
        }
    }
}

impl core::error::Error for ParseGenomeError {}

impl Genome {
    /// The cross-correlation measure `(a + d) − (b + c)`.
    pub const BASELINE: Genome = Genome([0, 0, 0, 0, 0, 0, 1]);

    pub fn new(genes: [u8; GENOME_LEN]) -> Result<Genome, InvalidGenome> {
        for (position, &value) in genes.iter().enumerate() {
            if usize::from(value) >= Self::domain(position) {
                return Err(InvalidGenome { position, value });
            }
        }
        Ok(Genome(genes))
    }

    /// Size of the operator table for gene `position`.
    pub const fn domain(position: usize) -> usize {
        if position < UNARY_GENES {
            UnaryOp::ALL.len()
        } else {
            BinaryOp::ALL.len()
        }
    }

    pub fn genes(&self) -> [u8; GENOME_LEN] {
        self.0
    }

    pub fn gene(&self, position: usize) -> u8 {
        self.0[position]
    }

    /// A copy with gene `position` replaced; `None` if the value is out of range.
    pub fn with_gene(&self, position: usize, value: u8) -> Option<Genome> {
        let mut genes = self.0;
        *genes.get_mut(position)? = value;
        Genome::new(genes).ok()
    }

    pub fn unary(&self) -> [UnaryOp; UNARY_GENES] {
        core::array::from_fn(|i| UnaryOp::ALL[usize::from(self.0[i])])
    }

    pub fn binary(&self) -> [BinaryOp; BINARY_GENES] {
        core::array::from_fn(|i| BinaryOp::ALL[usize::from(self.0[UNARY_GENES + i])])
    }

    /// Number of differing genes.
    pub fn hamming(&self, other: &Genome) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }

    /// Uniform draw over the whole genome space.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Genome {
        Genome(core::array::from_fn(|i| {
            rng.gen_range(0..Self::domain(i)) as u8
        }))
    }

    /// The compact seven-digit form, available when every gene is a single digit.
    pub fn compact(&self) -> Option<CompactGenome> {
        self.0
            .iter()
            .all(|&g| g <= 9)
            .then_some(CompactGenome(*self))
    }
}

impl fmt::Debug for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Genome({self})")
    }
}

/// Canonical comma-separated form, e.g. `3,0,3,0,0,1,6`.
impl fmt::Display for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, g) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{g}")?;
        }
        Ok(())
    }
}

/// Display adapter for the seven-digit form.
#[derive(Clone, Copy, Debug)]
pub struct CompactGenome(Genome);

impl fmt::Display for CompactGenome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for g in self.0 .0 {
            write!(f, "{g}")?;
        }
        Ok(())
    }
}

impl FromStr for Genome {
    type Err = ParseGenomeError;

    /// Accepts `u1,u2,u3,u4,b1,b2,b3` or the compact seven-digit form.
    fn from_str(text: &str) -> Result<Genome, ParseGenomeError> {
        let text = text.trim();
        let mut genes = [0u8; GENOME_LEN];
        if text.contains(',') {
            let fields: alloc::vec::Vec<&str> = text.split(',').collect();
            if fields.len() != GENOME_LEN {
                return Err(ParseGenomeError::Arity {
                    found: fields.len(),
                });
            }
            for (position, field) in fields.iter().enumerate() {
                let field = field.trim();
                if field.is_empty() || !field.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(ParseGenomeError::NotANumber { position });
                }
                let value: u64 = field.parse().map_err(|_| ParseGenomeError::OutOfRange {
                    position,
                    value: u64::MAX,
                })?;
                if value >= Genome::domain(position) as u64 {
                    return Err(ParseGenomeError::OutOfRange { position, value });
                }
                genes[position] = value as u8;
            }
        } else {
            let count = text.chars().count();
            if count != GENOME_LEN {
                return Err(ParseGenomeError::Arity { found: count });
            }
            for (position, ch) in text.chars().enumerate() {
                let value = ch
                    .to_digit(10)
                    .ok_or(ParseGenomeError::NotANumber { position })?;
                genes[position] = value as u8;
            }
        }
        Ok(Genome(genes))
    }
}
