//! Linear algebra over GF(2) for widths up to 64 bits.
//!
//! Vectors are bit-packed into a `u64`. Bit `i` is the coefficient of the
//! `i`-th coordinate; the string form prints bit `width - 1` first, so
//! `"110"` is the vector with bits 2 and 1 set.
//!
//! Elimination always pivots on the lowest-index set bit, which makes the
//! null-space basis canonical and its ordering deterministic.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_WIDTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Gf2Error {
    #[error("width {0} is outside 1..=64")]
    InvalidWidth(usize),
    #[error("value {value:#x} does not fit in {width} bits")]
    ValueTooWide { value: u64, width: usize },
    #[error("width mismatch: {left} vs {right}")]
    WidthMismatch { left: usize, right: usize },
    #[error("cannot parse bit string {0:?}")]
    Parse(String),
}

#[inline]
pub(crate) fn mask(width: usize) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// A fixed-width vector in Z_2^n.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BitVector {
    bits: u64,
    width: u8,
}

impl BitVector {
    pub fn new(bits: u64, width: usize) -> Result<Self, Gf2Error> {
        if width == 0 || width > MAX_WIDTH {
            return Err(Gf2Error::InvalidWidth(width));
        }
        if bits & !mask(width) != 0 {
            return Err(Gf2Error::ValueTooWide { value: bits, width });
        }
        Ok(Self {
            bits,
            width: width as u8,
        })
    }

    pub fn zero(width: usize) -> Result<Self, Gf2Error> {
        Self::new(0, width)
    }

    /// The `i`-th standard basis vector.
    pub fn unit(i: usize, width: usize) -> Result<Self, Gf2Error> {
        if i >= width {
            return Err(Gf2Error::ValueTooWide {
                value: 1u64.checked_shl(i as u32).unwrap_or(0),
                width,
            });
        }
        Self::new(1 << i, width)
    }

    #[inline]
    pub fn bits(&self) -> u64 {
        self.bits
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width as usize
    }

    #[inline]
    pub fn is_zero(&self) -> bool {
        self.bits == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        i < self.width() && (self.bits >> i) & 1 == 1
    }

    pub fn xor(&self, other: &Self) -> Result<Self, Gf2Error> {
        self.check_width(other)?;
        Ok(Self {
            bits: self.bits ^ other.bits,
            width: self.width,
        })
    }

    /// Index of the lowest set bit, if any.
    #[inline]
    pub fn lowest_set_bit(&self) -> Option<usize> {
        (self.bits != 0).then(|| self.bits.trailing_zeros() as usize)
    }

    fn check_width(&self, other: &Self) -> Result<(), Gf2Error> {
        if self.width != other.width {
            return Err(Gf2Error::WidthMismatch {
                left: self.width(),
                right: other.width(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in (0..self.width()).rev() {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVector({self})")
    }
}

impl FromStr for BitVector {
    type Err = Gf2Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() || s.len() > MAX_WIDTH {
            return Err(Gf2Error::Parse(s.to_string()));
        }
        let mut bits = 0u64;
        for c in s.chars() {
            bits <<= 1;
            match c {
                '0' => {}
                '1' => bits |= 1,
                _ => return Err(Gf2Error::Parse(s.to_string())),
            }
        }
        Self::new(bits, s.len())
    }
}

/// Inner product over GF(2): parity of the bitwise AND.
pub fn dot(u: &BitVector, v: &BitVector) -> Result<bool, Gf2Error> {
    u.check_width(v)?;
    Ok((u.bits & v.bits).count_ones() % 2 == 1)
}

/// A list of equal-width row vectors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitMatrix {
    width: usize,
    rows: Vec<BitVector>,
}

impl BitMatrix {
    pub fn new(width: usize) -> Result<Self, Gf2Error> {
        if width == 0 || width > MAX_WIDTH {
            return Err(Gf2Error::InvalidWidth(width));
        }
        Ok(Self {
            width,
            rows: Vec::new(),
        })
    }

    pub fn from_rows(width: usize, rows: impl IntoIterator<Item = BitVector>) -> Result<Self, Gf2Error> {
        let mut m = Self::new(width)?;
        for r in rows {
            m.push(r)?;
        }
        Ok(m)
    }

    pub fn identity(width: usize) -> Result<Self, Gf2Error> {
        let rows = (0..width)
            .map(|i| BitVector::unit(i, width))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_rows(width, rows)
    }

    pub fn push(&mut self, row: BitVector) -> Result<(), Gf2Error> {
        if row.width() != self.width {
            return Err(Gf2Error::WidthMismatch {
                left: self.width,
                right: row.width(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn rows(&self) -> &[BitVector] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Reduced row echelon form as `(pivot column, row bits)` pairs, sorted
    /// by pivot. Each pivot column is clear in every other reduced row.
    fn reduced(&self) -> Vec<(usize, u64)> {
        let mut basis: Vec<(usize, u64)> = Vec::new();
        for row in &self.rows {
            let mut v = row.bits;
            for &(p, b) in &basis {
                if (v >> p) & 1 == 1 {
                    v ^= b;
                }
            }
            if v == 0 {
                continue;
            }
            let p = v.trailing_zeros() as usize;
            for (_, b) in basis.iter_mut() {
                if (*b >> p) & 1 == 1 {
                    *b ^= v;
                }
            }
            basis.push((p, v));
        }
        basis.sort_unstable_by_key(|&(p, _)| p);
        basis
    }
}

pub fn rank(m: &BitMatrix) -> usize {
    m.reduced().len()
}

/// Canonical basis of `{v : row · v = 0 for every row}`.
///
/// One vector per free (non-pivot) column in ascending column order; the
/// vector for free column `f` has bit `f` set, no other free bits, and the
/// pivot bits forced by the reduced rows.
pub fn null_space_basis(m: &BitMatrix) -> Vec<BitVector> {
    let reduced = m.reduced();
    let pivot_mask = reduced.iter().fold(0u64, |acc, &(p, _)| acc | (1 << p));
    (0..m.width)
        .filter(|&f| (pivot_mask >> f) & 1 == 0)
        .map(|f| {
            let mut v = 1u64 << f;
            for &(p, b) in &reduced {
                if (b >> f) & 1 == 1 {
                    v |= 1 << p;
                }
            }
            BitVector {
                bits: v,
                width: m.width as u8,
            }
        })
        .collect()
}

/// Every nonzero element of the span of `basis`, in binary counting order
/// over the basis coefficients.
pub fn span_nonzero(basis: &[BitVector]) -> impl Iterator<Item = BitVector> + '_ {
    let k = basis.len();
    let count: u64 = if k >= 64 { u64::MAX } else { (1u64 << k) - 1 };
    (1..=count).map(move |c| {
        let bits = basis
            .iter()
            .enumerate()
            .filter(|(i, _)| (c >> i) & 1 == 1)
            .fold(0u64, |acc, (_, b)| acc ^ b.bits);
        BitVector {
            bits,
            width: basis[0].width,
        }
    })
}
