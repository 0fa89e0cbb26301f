//! Fixed-length boolean vectors: a propositional state. The currency
//! between the neural and the symbolic halves of the system.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::ndcore::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LatentBitVector {
    n: u32,
    // bit j lives in words[j / 64] at position j % 64; unused high bits
    // of the last word are always zero (required for Eq/Hash/Ord).
    words: Vec<u64>,
}

impl LatentBitVector {
    pub fn zeros(n: usize) -> Self {
        LatentBitVector {
            n: n as u32,
            words: vec![0; n.div_ceil(64)],
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (j, b) in bits.iter().enumerate() {
            if *b {
                v.set(j, true);
            }
        }
        v
    }

    /// Bit j set iff data[j] > threshold.
    pub fn from_f32_threshold(data: &[f32], threshold: f32) -> Self {
        let mut v = Self::zeros(data.len());
        for (j, x) in data.iter().enumerate() {
            if *x > threshold {
                v.set(j, true);
            }
        }
        v
    }

    pub fn len(&self) -> usize {
        self.n as usize
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, j: usize) -> bool {
        debug_assert!(j < self.n as usize);
        (self.words[j / 64] >> (j % 64)) & 1 == 1
    }

    pub fn set(&mut self, j: usize, value: bool) {
        debug_assert!(j < self.n as usize);
        let mask = 1u64 << (j % 64);
        if value {
            self.words[j / 64] |= mask;
        } else {
            self.words[j / 64] &= !mask;
        }
    }

    pub fn flip(&mut self, j: usize) {
        self.words[j / 64] ^= 1u64 << (j % 64);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Hamming distance. Errors on length mismatch.
    pub fn hamming(&self, other: &Self) -> Result<usize> {
        if self.n != other.n {
            return Err(Error::Length {
                expected: self.len(),
                actual: other.len(),
            });
        }
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum())
    }

    /// Indices where the two vectors differ.
    pub fn diff_indices(&self, other: &Self) -> Result<Vec<usize>> {
        if self.n != other.n {
            return Err(Error::Length {
                expected: self.len(),
                actual: other.len(),
            });
        }
        let mut out = Vec::new();
        for j in 0..self.len() {
            if self.get(j) != other.get(j) {
                out.push(j);
            }
        }
        Ok(out)
    }

    /// Concatenation: self's bits followed by other's.
    pub fn concat(&self, other: &Self) -> Self {
        let mut v = Self::zeros(self.len() + other.len());
        for j in 0..self.len() {
            v.set(j, self.get(j));
        }
        for j in 0..other.len() {
            v.set(self.len() + j, other.get(j));
        }
        v
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.len()).map(|j| self.get(j)).collect()
    }

    pub fn to_f32_vec(&self) -> Vec<f32> {
        (0..self.len()).map(|j| if self.get(j) { 1.0 } else { 0.0 }).collect()
    }

    pub fn to_tensor_row(&self) -> Tensor {
        Tensor::new(vec![1, self.len()], self.to_f32_vec())
    }

    /// Packed little-endian bytes, LSB first within each byte.
    pub fn to_packed_bytes(&self) -> Vec<u8> {
        let nbytes = self.len().div_ceil(8);
        let mut out = vec![0u8; nbytes];
        for j in 0..self.len() {
            if self.get(j) {
                out[j / 8] |= 1 << (j % 8);
            }
        }
        out
    }

    pub fn from_packed_bytes(n: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != n.div_ceil(8) {
            return Err(Error::Length {
                expected: n.div_ceil(8),
                actual: bytes.len(),
            });
        }
        let mut v = Self::zeros(n);
        for j in 0..n {
            if (bytes[j / 8] >> (j % 8)) & 1 == 1 {
                v.set(j, true);
            }
        }
        Ok(v)
    }
}

impl fmt::Display for LatentBitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for j in 0..self.len() {
            write!(f, "{}", if self.get(j) { '1' } else { '0' })?;
        }
        Ok(())
    }
}

impl FromStr for LatentBitVector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut v = LatentBitVector::zeros(s.len());
        for (j, c) in s.chars().enumerate() {
            match c {
                '0' => {}
                '1' => v.set(j, true),
                other => {
                    return Err(Error::Format(format!(
                        "invalid bit character '{other}' in bitvector string"
                    )))
                }
            }
        }
        Ok(v)
    }
}
