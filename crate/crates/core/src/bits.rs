//! Fixed-width bit vectors.
//!
//! Bit `i` of a vector corresponds to bit `i` of its integer value, so
//! `BitVector::from_u64(0b110, 3)` has bits `[0, 1, 1]`.

use std::fmt;
use std::ops::{BitXor, BitXorAssign, Index};

use rand::Rng;

use crate::error::WidthMismatch;

#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct BitVector {
    bits: Vec<bool>,
}

impl BitVector {
    pub fn zeros(width: usize) -> Self {
        BitVector { bits: vec![false; width] }
    }

    pub fn ones(width: usize) -> Self {
        BitVector { bits: vec![true; width] }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        BitVector { bits }
    }

    /// Low `width` bits of `value`. Widths above 64 are zero-extended.
    pub fn from_u64(value: u64, width: usize) -> Self {
        let bits = (0..width)
            .map(|i| i < 64 && (value >> i) & 1 == 1)
            .collect();
        BitVector { bits }
    }

    pub fn from_u128(value: u128, width: usize) -> Self {
        let bits = (0..width)
            .map(|i| i < 128 && (value >> i) & 1 == 1)
            .collect();
        BitVector { bits }
    }

    /// Parses an MSB-first string of `0`/`1` characters.
    pub fn from_bit_str(s: &str) -> Option<Self> {
        let mut bits = Vec::with_capacity(s.len());
        for c in s.chars().rev() {
            match c {
                '0' => bits.push(false),
                '1' => bits.push(true),
                '_' => {}
                _ => return None,
            }
        }
        Some(BitVector { bits })
    }

    pub fn random<R: Rng + ?Sized>(width: usize, rng: &mut R) -> Self {
        BitVector {
            bits: (0..width).map(|_| rng.gen()).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn set(&mut self, i: usize, value: bool) {
        self.bits[i] = value;
    }

    pub fn flip(&mut self, i: usize) {
        self.bits[i] = !self.bits[i];
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.bits.iter().copied()
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_zero(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Integer value of the low 64 bits.
    pub fn to_u64(&self) -> u64 {
        self.bits
            .iter()
            .take(64)
            .enumerate()
            .fold(0u64, |acc, (i, &b)| acc | ((b as u64) << i))
    }

    pub fn to_u128(&self) -> u128 {
        self.bits
            .iter()
            .take(128)
            .enumerate()
            .fold(0u128, |acc, (i, &b)| acc | ((b as u128) << i))
    }

    /// `self` occupies the high bits, `low` the low bits.
    pub fn concat_high(&self, low: &BitVector) -> BitVector {
        let mut bits = low.bits.clone();
        bits.extend_from_slice(&self.bits);
        BitVector { bits }
    }

    pub fn slice(&self, start: usize, len: usize) -> BitVector {
        BitVector {
            bits: self.bits[start..start + len].to_vec(),
        }
    }

    pub fn checked_xor(&self, other: &BitVector) -> Result<BitVector, WidthMismatch> {
        WidthMismatch::check(self.width(), other.width())?;
        Ok(self ^ other)
    }

    /// MSB-first binary string.
    pub fn to_bit_string(&self) -> String {
        self.bits.iter().rev().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

impl Index<usize> for BitVector {
    type Output = bool;

    fn index(&self, i: usize) -> &bool {
        &self.bits[i]
    }
}

impl BitXor for &BitVector {
    type Output = BitVector;

    /// Panics on width mismatch; use [`BitVector::checked_xor`] at API boundaries.
    fn bitxor(self, rhs: &BitVector) -> BitVector {
        assert_eq!(self.width(), rhs.width(), "xor of unequal widths");
        BitVector {
            bits: self.bits.iter().zip(&rhs.bits).map(|(a, b)| a ^ b).collect(),
        }
    }
}

impl BitXorAssign<&BitVector> for BitVector {
    fn bitxor_assign(&mut self, rhs: &BitVector) {
        assert_eq!(self.width(), rhs.width(), "xor of unequal widths");
        for (a, b) in self.bits.iter_mut().zip(&rhs.bits) {
            *a ^= b;
        }
    }
}

impl FromIterator<bool> for BitVector {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        BitVector {
            bits: iter.into_iter().collect(),
        }
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVector({}b{})", self.width(), self.to_bit_string())
    }
}

impl fmt::Display for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bit_string())
    }
}
