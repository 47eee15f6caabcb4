//! Fixed-width bit strings and linear algebra over GF(2).
//!
//! Bit `0` is the leftmost character of the textual form and the first action
//! an agent performs. Internally a [`BitString`] of width `w` keeps bit `i` at
//! integer position `w - 1 - i`, so [`BitString::value`] reads the string as a
//! big-endian binary number (`"101"` is `5`).

use std::fmt;
use std::ops::BitXor;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Widest supported bit string.
pub const MAX_WIDTH: usize = 64;

fn mask(width: usize) -> u64 {
    if width == 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// A bit vector of width `1..=64`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitString {
    width: u8,
    bits: u64,
}

impl BitString {
    /// Builds a string from its big-endian integer value.
    ///
    /// # Panics
    /// If `width` is outside `1..=64` or `value` does not fit.
    #[must_use]
    pub fn new(width: usize, value: u64) -> Self {
        assert!((1..=MAX_WIDTH).contains(&width), "bit width {width} out of range");
        assert!(value & !mask(width) == 0, "value {value:#x} exceeds width {width}");
        Self { width: width as u8, bits: value }
    }

    #[must_use]
    pub fn zeros(width: usize) -> Self {
        Self::new(width, 0)
    }

    #[must_use]
    pub fn ones(width: usize) -> Self {
        Self::new(width, mask(width))
    }

    /// Canonical basis vector with a single `1` at index `i`.
    #[must_use]
    pub fn unit(width: usize, i: usize) -> Self {
        let mut b = Self::zeros(width);
        b.set(i, true);
        b
    }

    /// Builds a string from bits in index order.
    ///
    /// # Panics
    /// If `bits` is empty or longer than 64.
    #[must_use]
    pub fn from_bits(bits: &[bool]) -> Self {
        let mut b = Self::zeros(bits.len());
        for (i, &v) in bits.iter().enumerate() {
            b.set(i, v);
        }
        b
    }

    #[inline]
    #[must_use]
    pub fn width(&self) -> usize {
        self.width as usize
    }

    /// Big-endian integer value.
    #[inline]
    #[must_use]
    pub fn value(&self) -> u64 {
        self.bits
    }

    #[inline]
    #[must_use]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.width(), "bit index {i} out of range for width {}", self.width);
        (self.bits >> (self.width() - 1 - i)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: bool) {
        assert!(i < self.width(), "bit index {i} out of range for width {}", self.width);
        let m = 1u64 << (self.width() - 1 - i);
        if v {
            self.bits |= m;
        } else {
            self.bits &= !m;
        }
    }

    #[inline]
    #[must_use]
    pub fn is_zero(&self) -> bool {
        self.bits == 0
    }

    #[must_use]
    pub fn weight(&self) -> u32 {
        self.bits.count_ones()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.width()).map(move |i| self.get(i))
    }

    /// First `k` bits. `k` must be in `1..=width`.
    #[must_use]
    pub fn prefix(&self, k: usize) -> Self {
        assert!(k >= 1 && k <= self.width(), "prefix length {k} invalid");
        Self::new(k, self.bits >> (self.width() - k))
    }

    /// Bits from index `start` to the end. `start` must leave at least one bit.
    #[must_use]
    pub fn suffix_from(&self, start: usize) -> Self {
        assert!(start < self.width(), "suffix start {start} invalid");
        let w = self.width() - start;
        Self::new(w, self.bits & mask(w))
    }

    /// `self ∘ other`.
    #[must_use]
    pub fn concat(&self, other: &Self) -> Self {
        let w = self.width() + other.width();
        assert!(w <= MAX_WIDTH, "concatenated width {w} too large");
        Self::new(w, (self.bits << other.width()) | other.bits)
    }

    /// Inner product modulo two. Panics on width mismatch.
    #[inline]
    #[must_use]
    pub fn dot2(&self, other: &Self) -> bool {
        dot2(self, other)
    }

    /// Every string of the given width, in increasing numeric order.
    pub fn all(width: usize) -> impl Iterator<Item = Self> {
        assert!(width <= 24, "enumeration limited to width 24");
        (0..(1u64 << width)).map(move |v| Self::new(width, v))
    }
}

/// Inner product `Σ xᵢ yᵢ mod 2`.
///
/// # Panics
/// If the widths differ.
#[inline]
#[must_use]
pub fn dot2(x: &BitString, y: &BitString) -> bool {
    assert_eq!(x.width, y.width, "dot2 width mismatch");
    (x.bits & y.bits).count_ones() & 1 == 1
}

impl BitXor for BitString {
    type Output = BitString;

    fn bitxor(self, rhs: Self) -> Self {
        assert_eq!(self.width, rhs.width, "xor width mismatch");
        Self { width: self.width, bits: self.bits ^ rhs.bits }
    }
}

impl BitXor for &BitString {
    type Output = BitString;

    fn bitxor(self, rhs: Self) -> BitString {
        *self ^ *rhs
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({self})")
    }
}

impl FromStr for BitString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.is_empty() || s.len() > MAX_WIDTH {
            return Err(Error::Parse(format!("bit string length {} not in 1..=64", s.len())));
        }
        let mut bits = 0u64;
        for c in s.chars() {
            bits = (bits << 1)
                | match c {
                    '0' => 0,
                    '1' => 1,
                    _ => return Err(Error::Parse(format!("invalid bit character {c:?}"))),
                };
        }
        Ok(Self::new(s.len(), bits))
    }
}

impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// GF(2) matrices
// ---------------------------------------------------------------------------

/// A dense matrix over GF(2) with at most 64 columns; each row is a [`BitString`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gf2Matrix {
    cols: usize,
    rows: Vec<BitString>,
}

impl Gf2Matrix {
    /// Empty matrix with `cols` columns and no rows.
    #[must_use]
    pub fn new(cols: usize) -> Self {
        assert!((1..=MAX_WIDTH).contains(&cols), "column count {cols} out of range");
        Self { cols, rows: Vec::new() }
    }

    /// # Panics
    /// If any row width differs from `cols`.
    #[must_use]
    pub fn from_rows(cols: usize, rows: Vec<BitString>) -> Self {
        let mut m = Self::new(cols);
        for r in rows {
            m.push_row(r);
        }
        m
    }

    #[must_use]
    pub fn identity(n: usize) -> Self {
        Self::from_rows(n, (0..n).map(|i| BitString::unit(n, i)).collect())
    }

    pub fn push_row(&mut self, row: BitString) {
        assert_eq!(row.width(), self.cols, "row width mismatch");
        self.rows.push(row);
    }

    #[must_use]
    pub fn rows(&self) -> &[BitString] {
        &self.rows
    }

    #[must_use]
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    #[must_use]
    pub fn n_cols(&self) -> usize {
        self.cols
    }

    /// `M v`, one bit per row.
    #[must_use]
    pub fn mul_vec(&self, v: &BitString) -> Vec<bool> {
        self.rows.iter().map(|r| dot2(r, v)).collect()
    }

    /// Reduced row echelon form with leftmost pivots; returns `(rows, pivot columns)`.
    fn rref(&self) -> (Vec<u64>, Vec<usize>) {
        let mut rows: Vec<u64> = self.rows.iter().map(BitString::value).collect();
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..self.cols {
            let bit = 1u64 << (self.cols - 1 - c);
            let Some(p) = (r..rows.len()).find(|&i| rows[i] & bit != 0) else {
                continue;
            };
            rows.swap(r, p);
            let pivot_row = rows[r];
            for (i, row) in rows.iter_mut().enumerate() {
                if i != r && *row & bit != 0 {
                    *row ^= pivot_row;
                }
            }
            pivots.push(c);
            r += 1;
            if r == rows.len() {
                break;
            }
        }
        rows.truncate(r);
        (rows, pivots)
    }

    #[must_use]
    pub fn rank(&self) -> usize {
        self.rref().1.len()
    }

    /// Basis of `{v : M v = 0}`, one vector per free column in increasing column order.
    #[must_use]
    pub fn nullspace(&self) -> Vec<BitString> {
        gf2_nullspace(self)
    }
}

/// Basis of the right nullspace of `m`.
///
/// Gaussian elimination picks the leftmost available pivot in each column, so the
/// returned basis is a deterministic function of the matrix.
#[must_use]
pub fn gf2_nullspace(m: &Gf2Matrix) -> Vec<BitString> {
    let (rows, pivots) = m.rref();
    let cols = m.cols;
    let col_bit = |c: usize| 1u64 << (cols - 1 - c);
    (0..cols)
        .filter(|c| !pivots.contains(c))
        .map(|free| {
            let mut v = col_bit(free);
            for (row, &pc) in rows.iter().zip(&pivots) {
                if row & col_bit(free) != 0 {
                    v |= col_bit(pc);
                }
            }
            BitString::new(cols, v)
        })
        .collect()
}

/// Incrementally maintained row space, used to track rank while sampling.
#[derive(Clone, Debug)]
pub struct Gf2Span {
    cols: usize,
    // Echelon rows keyed by their leading bit.
    basis: Vec<u64>,
}

impl Gf2Span {
    #[must_use]
    pub fn new(cols: usize) -> Self {
        assert!((1..=MAX_WIDTH).contains(&cols));
        Self { cols, basis: Vec::new() }
    }

    /// Inserts `v`; returns `true` if it was independent of the current span.
    pub fn insert(&mut self, v: &BitString) -> bool {
        assert_eq!(v.width(), self.cols);
        let mut x = v.value();
        for &b in &self.basis {
            let lead = 63 - b.leading_zeros();
            if x >> lead & 1 == 1 {
                x ^= b;
            }
        }
        if x == 0 {
            return false;
        }
        self.basis.push(x);
        self.basis.sort_unstable_by(|a, b| b.cmp(a));
        true
    }

    #[must_use]
    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    #[must_use]
    pub fn to_matrix(&self) -> Gf2Matrix {
        Gf2Matrix::from_rows(
            self.cols,
            self.basis.iter().map(|&b| BitString::new(self.cols, b)).collect(),
        )
    }
}
