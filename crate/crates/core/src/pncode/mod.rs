//! Binary pseudo-noise codes: LFSR m-sequences, correlation metrics and
//! per-tag codebooks.

mod codebook;
mod lfsr;

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};

pub use codebook::{build_codebook, sliding_peak, Codebook, CodebookEntry};
pub use lfsr::{is_maximal, lfsr_msequence, primitive_taps, Lfsr};

/// Ordered bits in transmission order. Each element is 0 or 1.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitSequence(Vec<u8>);

impl BitSequence {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return invalid(format!("bit value {b} is not 0 or 1"));
        }
        Ok(Self(bits))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0; len])
    }

    pub fn from_bools(bits: impl IntoIterator<Item = bool>) -> Self {
        Self(bits.into_iter().map(u8::from).collect())
    }

    /// Expands bytes LSB-first, the BLE on-air order.
    pub fn from_bytes_lsb_first(bytes: &[u8]) -> Self {
        Self(bytes.iter().flat_map(|&byte| (0..8).map(move |i| (byte >> i) & 1)).collect())
    }

    /// Packs LSB-first into bytes. Length must be a multiple of 8.
    pub fn to_bytes_lsb_first(&self) -> Result<Vec<u8>> {
        if !self.0.len().is_multiple_of(8) {
            return invalid(format!("{} bits do not fill whole bytes", self.0.len()));
        }
        Ok(self.0.chunks(8).map(|c| c.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | (b << i))).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.0
    }

    pub fn get(&self, i: usize) -> Option<u8> {
        self.0.get(i).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = u8> + '_ {
        self.0.iter().copied()
    }

    pub fn ones(&self) -> usize {
        self.0.iter().filter(|&&b| b == 1).count()
    }

    pub fn complement(&self) -> Self {
        Self(self.0.iter().map(|b| b ^ 1).collect())
    }

    pub fn prefix(&self, n: usize) -> Self {
        Self(self.0[..n.min(self.0.len())].to_vec())
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self(self.0[range].to_vec())
    }

    pub fn concat(&self, other: &BitSequence) -> Self {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Self(v)
    }

    /// Rotates left so that element `shift` becomes the first.
    pub fn rotate_left(&self, shift: usize) -> Self {
        let mut v = self.0.clone();
        if !v.is_empty() {
            let n = v.len();
            v.rotate_left(shift % n);
        }
        Self(v)
    }

    /// Packs into u64 words, bit `i` of the sequence at bit `i % 64` of word `i / 64`.
    pub fn to_words(&self) -> Vec<u64> {
        let mut words = vec![0u64; self.0.len().div_ceil(64)];
        for (i, &b) in self.0.iter().enumerate() {
            words[i / 64] |= u64::from(b) << (i % 64);
        }
        words
    }
}

impl fmt::Display for BitSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitSequence[{}](", self.0.len())?;
        fmt::Display::fmt(self, f)?;
        f.write_str(")")
    }
}

impl FromStr for BitSequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => invalid(format!("unexpected character {other:?} in bit string")),
            })
            .collect::<Result<Vec<u8>>>()
            .map(Self)
    }
}

impl From<BitSequence> for Vec<u8> {
    fn from(b: BitSequence) -> Self {
        b.0
    }
}

/// Number of positions where `a` and `b` agree.
pub fn correlate_aligned(a: &BitSequence, b: &BitSequence) -> Result<u32> {
    if a.is_empty() || b.is_empty() {
        return invalid("correlation of an empty sequence");
    }
    if a.len() != b.len() {
        return invalid(format!("length mismatch: {} vs {}", a.len(), b.len()));
    }
    Ok(a.iter().zip(b.iter()).filter(|(x, y)| x == y).count() as u32)
}

/// Periodic autocorrelation with bits mapped 0 -> -1, 1 -> +1.
pub fn periodic_autocorrelation(code: &BitSequence, shift: usize) -> Result<i64> {
    let n = code.len();
    if n == 0 {
        return invalid("autocorrelation of an empty sequence");
    }
    if shift >= n {
        return invalid(format!("shift {shift} out of range for length {n}"));
    }
    let s = code.as_slice();
    Ok((0..n).map(|i| if s[i] == s[(i + shift) % n] { 1 } else { -1 }).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_sequences_score_full_length() {
        let code = lfsr_msequence(8, 0xB8, 1).unwrap().concat(&BitSequence::zeros(1));
        assert_eq!(code.len(), 256);
        assert_eq!(correlate_aligned(&code, &code).unwrap(), 256);
        assert_eq!(correlate_aligned(&code, &code.complement()).unwrap(), 0);
    }

    #[test]
    fn correlation_rejects_bad_lengths() {
        let a = BitSequence::zeros(8);
        assert!(correlate_aligned(&a, &BitSequence::zeros(7)).is_err());
        assert!(correlate_aligned(&BitSequence::default(), &BitSequence::default()).is_err());
    }

    #[test]
    fn constant_sequence_autocorrelation() {
        let ones = BitSequence::new(vec![1; 8]).unwrap();
        assert_eq!(periodic_autocorrelation(&ones, 3).unwrap(), 8);
        assert!(periodic_autocorrelation(&ones, 8).is_err());
    }

    #[test]
    fn parse_and_print() {
        let b: BitSequence = "0110".parse().unwrap();
        assert_eq!(b.as_slice(), &[0, 1, 1, 0]);
        assert_eq!(b.to_string(), "0110");
        assert!("01x".parse::<BitSequence>().is_err());
        assert!(BitSequence::new(vec![0, 2]).is_err());
    }

    #[test]
    fn byte_packing_is_lsb_first() {
        let b = BitSequence::from_bytes_lsb_first(&[0x01, 0x80]);
        assert_eq!(b.to_string(), "1000000000000001");
        assert_eq!(b.to_bytes_lsb_first().unwrap(), vec![0x01, 0x80]);
    }

    proptest! {
        #[test]
        fn complement_partitions_length(bits in proptest::collection::vec(0u8..2, 1..300)) {
            let a = BitSequence::new(bits).unwrap();
            let b = a.rotate_left(3);
            let total = correlate_aligned(&a, &b).unwrap() + correlate_aligned(&a, &b.complement()).unwrap();
            prop_assert_eq!(total as usize, a.len());
            prop_assert_eq!(correlate_aligned(&a, &b).unwrap(), correlate_aligned(&b, &a).unwrap());
        }
    }
}
