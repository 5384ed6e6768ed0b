//! GF(2) vectors and matrices.
//!
//! Bit ordering convention used across the whole workspace: index 0 is the
//! leftmost printed bit and the lowest qubit index. A `BitVec` serializes as a
//! plain 0/1 string in that order.

use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum F2Error {
    /// Two operands had incompatible dimensions.
    Dimension { expected: usize, got: usize },
    /// A string held a character other than '0'/'1'.
    BadDigit(char),
}

impl fmt::Display for F2Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            F2Error::Dimension { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            F2Error::BadDigit(c) => write!(f, "invalid GF(2) digit {c:?}"),
        }
    }
}

impl std::error::Error for F2Error {}

/// A length-tagged vector over GF(2), bit-packed into 64-bit words.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitVec {
    len: usize,
    words: Vec<u64>,
}

fn word_count(len: usize) -> usize {
    len.div_ceil(64)
}

impl BitVec {
    pub fn zeros(len: usize) -> Self {
        BitVec {
            len,
            words: vec![0; word_count(len)],
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut v = Self::zeros(len);
        for w in v.words.iter_mut() {
            *w = u64::MAX;
        }
        v.mask_tail();
        v
    }

    /// Builds from 0/1 values, index 0 first.
    pub fn from_bits(bits: &[u8]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            v.set(i, b & 1);
        }
        v
    }

    pub fn from_str01(s: &str) -> Result<Self, F2Error> {
        let mut v = Self::zeros(s.chars().count());
        for (i, c) in s.chars().enumerate() {
            match c {
                '0' => {}
                '1' => v.set(i, 1),
                other => return Err(F2Error::BadDigit(other)),
            }
        }
        Ok(v)
    }

    /// The standard basis vector e_i.
    pub fn unit(len: usize, i: usize) -> Self {
        let mut v = Self::zeros(len);
        v.set(i, 1);
        v
    }

    /// Interprets the low `len` bits of `value` with index 0 as the most
    /// significant bit, so that `from_index(k, i)` is the binary expansion
    /// of `i` used for Hadamard generator rows.
    pub fn from_index(len: usize, value: u128) -> Self {
        let mut v = Self::zeros(len);
        for i in 0..len {
            if (value >> (len - 1 - i)) & 1 == 1 {
                v.set(i, 1);
            }
        }
        v
    }

    /// Inverse of [`BitVec::from_index`]; requires `len <= 128`.
    pub fn to_index(&self) -> u128 {
        assert!(self.len <= 128, "index conversion limited to 128 bits");
        let mut acc = 0u128;
        for i in 0..self.len {
            acc = (acc << 1) | self.get(i) as u128;
        }
        acc
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> u8 {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        ((self.words[i / 64] >> (i % 64)) & 1) as u8
    }

    pub fn set(&mut self, i: usize, b: u8) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        if b & 1 == 1 {
            self.words[i / 64] |= 1 << (i % 64);
        } else {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        self.words[i / 64] ^= 1 << (i % 64);
    }

    fn mask_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    fn check_len(&self, other: &Self) -> Result<(), F2Error> {
        if self.len != other.len {
            return Err(F2Error::Dimension {
                expected: self.len,
                got: other.len,
            });
        }
        Ok(())
    }

    /// Σ u_i v_i mod 2.
    pub fn inner(&self, other: &Self) -> Result<u8, F2Error> {
        self.check_len(other)?;
        let mut acc = 0u32;
        for (a, b) in self.words.iter().zip(&other.words) {
            acc ^= (a & b).count_ones();
        }
        Ok((acc & 1) as u8)
    }

    pub fn xor(&self, other: &Self) -> Result<Self, F2Error> {
        self.check_len(other)?;
        let mut out = self.clone();
        for (w, o) in out.words.iter_mut().zip(&other.words) {
            *w ^= o;
        }
        Ok(out)
    }

    pub fn and(&self, other: &Self) -> Result<Self, F2Error> {
        self.check_len(other)?;
        let mut out = self.clone();
        for (w, o) in out.words.iter_mut().zip(&other.words) {
            *w &= o;
        }
        Ok(out)
    }

    /// Elementwise complement.
    pub fn not(&self) -> Self {
        let mut out = self.clone();
        for w in out.words.iter_mut() {
            *w = !*w;
        }
        out.mask_tail();
        out
    }

    pub fn popcount(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    /// Hamming distance.
    pub fn dist(&self, other: &Self) -> Result<usize, F2Error> {
        self.check_len(other)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum())
    }

    pub fn iter_bits(&self) -> impl Iterator<Item = u8> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    /// Indices with a set bit, ascending.
    pub fn support(&self) -> Vec<usize> {
        (0..self.len).filter(|&i| self.get(i) == 1).collect()
    }

    /// Concatenation, `self` first.
    pub fn concat(&self, other: &Self) -> Self {
        let mut out = Self::zeros(self.len + other.len);
        for i in 0..self.len {
            out.set(i, self.get(i));
        }
        for i in 0..other.len {
            out.set(self.len + i, other.get(i));
        }
        out
    }

    pub fn slice(&self, start: usize, len: usize) -> Self {
        assert!(start + len <= self.len);
        let mut out = Self::zeros(len);
        for i in 0..len {
            out.set(i, self.get(start + i));
        }
        out
    }

    /// Tensor (Kronecker) product: result index i·|other|+j holds u_i·v_j.
    pub fn tensor(&self, other: &Self) -> Self {
        let mut out = Self::zeros(self.len * other.len);
        for i in 0..self.len {
            if self.get(i) == 1 {
                for j in 0..other.len {
                    if other.get(j) == 1 {
                        out.set(i * other.len + j, 1);
                    }
                }
            }
        }
        out
    }
}

impl fmt::Display for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter_bits() {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVec({self})")
    }
}

impl Serialize for BitVec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for BitVec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        BitVec::from_str01(&s).map_err(D::Error::custom)
    }
}

/// Row-major GF(2) matrix.
#[derive(Clone, PartialEq, Eq)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    data: Vec<BitVec>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        BitMatrix {
            rows,
            cols,
            data: vec![BitVec::zeros(cols); rows],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i].set(i, 1);
        }
        m
    }

    pub fn from_rows(rows: Vec<BitVec>) -> Result<Self, F2Error> {
        let cols = rows.first().map_or(0, |r| r.len());
        for r in &rows {
            if r.len() != cols {
                return Err(F2Error::Dimension {
                    expected: cols,
                    got: r.len(),
                });
            }
        }
        Ok(BitMatrix {
            rows: rows.len(),
            cols,
            data: rows,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &BitVec {
        &self.data[i]
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.data[i].get(j)
    }

    pub fn set(&mut self, i: usize, j: usize, b: u8) {
        self.data[i].set(j, b);
    }

    pub fn mat_vec(&self, s: &BitVec) -> Result<BitVec, F2Error> {
        if s.len() != self.cols {
            return Err(F2Error::Dimension {
                expected: self.cols,
                got: s.len(),
            });
        }
        let mut out = BitVec::zeros(self.rows);
        for i in 0..self.rows {
            out.set(i, self.data[i].inner(s)?);
        }
        Ok(out)
    }

    /// Rank over GF(2) by Gaussian elimination on a copy.
    pub fn rank(&self) -> usize {
        let mut rows: Vec<BitVec> = self.data.clone();
        let mut rank = 0;
        for col in 0..self.cols {
            let pivot = (rank..rows.len()).find(|&r| rows[r].get(col) == 1);
            if let Some(p) = pivot {
                rows.swap(rank, p);
                let pivot_row = rows[rank].clone();
                for (r, row) in rows.iter_mut().enumerate() {
                    if r != rank && row.get(col) == 1 {
                        *row = row.xor(&pivot_row).unwrap();
                    }
                }
                rank += 1;
                if rank == rows.len() {
                    break;
                }
            }
        }
        rank
    }
}

impl fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BitMatrix {}x{}", self.rows, self.cols)?;
        for r in &self.data {
            writeln!(f, "  {r}")?;
        }
        Ok(())
    }
}

/// Solves `M·x = b` over GF(2) where rows of `M` are given as bit vectors over
/// the unknowns. Returns `None` when inconsistent, otherwise one solution and
/// the nullity (number of free variables).
pub fn solve_affine(rows: &[BitVec], rhs: &BitVec, unknowns: usize) -> Option<(BitVec, usize)> {
    assert_eq!(rows.len(), rhs.len());
    // Augmented elimination.
    let mut aug: Vec<(BitVec, u8)> = rows
        .iter()
        .zip(rhs.iter_bits())
        .map(|(r, b)| (r.clone(), b))
        .collect();
    let mut pivots: Vec<(usize, usize)> = Vec::new(); // (row, col)
    let mut rank = 0;
    for col in 0..unknowns {
        let pivot = (rank..aug.len()).find(|&r| aug[r].0.get(col) == 1);
        if let Some(p) = pivot {
            aug.swap(rank, p);
            let (prow, pb) = aug[rank].clone();
            for (r, (row, b)) in aug.iter_mut().enumerate() {
                if r != rank && row.get(col) == 1 {
                    *row = row.xor(&prow).unwrap();
                    *b ^= pb;
                }
            }
            pivots.push((rank, col));
            rank += 1;
        }
    }
    // Inconsistency: a zero row with rhs 1.
    for (row, b) in &aug {
        if row.is_zero() && *b == 1 {
            return None;
        }
    }
    let mut x = BitVec::zeros(unknowns);
    for &(r, c) in &pivots {
        x.set(c, aug[r].1);
    }
    Some((x, unknowns - rank))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_index() {
        for k in 1..=6 {
            for i in 0..(1u128 << k) {
                let v = BitVec::from_index(k, i);
                assert_eq!(v.to_index(), i);
            }
        }
    }

    #[test]
    fn solve_affine_small() {
        // x0 + x1 = 1, x1 = 1  ->  x = (0,1)
        let rows = vec![BitVec::from_bits(&[1, 1]), BitVec::from_bits(&[0, 1])];
        let rhs = BitVec::from_bits(&[1, 1]);
        let (x, nullity) = solve_affine(&rows, &rhs, 2).unwrap();
        assert_eq!(x, BitVec::from_bits(&[0, 1]));
        assert_eq!(nullity, 0);

        // Inconsistent: x0 = 0 and x0 = 1.
        let rows = vec![BitVec::from_bits(&[1, 0]), BitVec::from_bits(&[1, 0])];
        let rhs = BitVec::from_bits(&[0, 1]);
        assert!(solve_affine(&rows, &rhs, 2).is_none());
    }
}
