use crate::error::{invalid, Error, Result};

use super::BitSequence;

/// Largest degree for which [`is_maximal`] walks the state cycle.
pub const MAX_CHECKED_DEGREE: u32 = 20;

/// Fibonacci (external feedback) LFSR.
///
/// `taps` holds bit `k - 1` for each term `x^k` of the feedback polynomial,
/// `1 <= k <= degree`; the constant term is implied. Bit `i` of the state is
/// the output `i` steps ahead, so the emitted bit is stage 0.
///
/// For `x^8 + x^6 + x^5 + x^4 + 1` the mask is `0xB8`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lfsr {
    degree: u32,
    taps: u32,
    feedback: u64,
    state: u64,
}

impl Lfsr {
    pub fn new(degree: u32, taps: u32, seed: u64) -> Result<Self> {
        if !(2..=32).contains(&degree) {
            return invalid(format!("LFSR degree {degree} outside 2..=32"));
        }
        let top = 1u64 << (degree - 1);
        if u64::from(taps) & top == 0 || u64::from(taps) >> degree != 0 {
            return invalid(format!("taps {taps:#x} do not describe a degree-{degree} polynomial"));
        }
        if seed == 0 {
            return invalid("LFSR seed must be non-zero");
        }
        if seed >> degree != 0 {
            return invalid(format!("seed {seed:#x} wider than {degree} stages"));
        }
        // x^k for k < degree taps stage k; x^0 taps stage 0.
        let feedback = 1 | ((u64::from(taps) & (top - 1)) << 1);
        Ok(Self { degree, taps, feedback, state: seed })
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn taps(&self) -> u32 {
        self.taps
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn period_bound(&self) -> u64 {
        (1u64 << self.degree) - 1
    }

    /// Emits stage 0 and shifts in the feedback bit.
    pub fn step(&mut self) -> u8 {
        let out = (self.state & 1) as u8;
        let fb = (self.state & self.feedback).count_ones() as u64 & 1;
        self.state = (self.state >> 1) | (fb << (self.degree - 1));
        out
    }
}

impl Iterator for Lfsr {
    type Item = u8;

    fn next(&mut self) -> Option<u8> {
        Some(self.step())
    }
}

/// First `2^degree - 1` output bits of the LFSR.
pub fn lfsr_msequence(degree: u32, taps: u32, seed: u64) -> Result<BitSequence> {
    let lfsr = Lfsr::new(degree, taps, seed)?;
    let n = lfsr.period_bound() as usize;
    BitSequence::new(lfsr.take(n).collect())
}

/// True iff the state cycle through a non-zero state has length `2^degree - 1`.
///
/// A mask that is not a degree-`degree` polynomial is reported as not maximal.
pub fn is_maximal(degree: u32, taps: u32) -> Result<bool> {
    if !(2..=32).contains(&degree) {
        return invalid(format!("LFSR degree {degree} outside 2..=32"));
    }
    if degree > MAX_CHECKED_DEGREE {
        return Err(Error::Unsupported(format!("cycle walk limited to degree <= {MAX_CHECKED_DEGREE}, got {degree}")));
    }
    let mut lfsr = match Lfsr::new(degree, taps, 1) {
        Ok(l) => l,
        Err(_) => return Ok(false),
    };
    let full = lfsr.period_bound();
    let mut len = 0u64;
    loop {
        lfsr.step();
        len += 1;
        if lfsr.state() == 1 {
            break;
        }
    }
    Ok(len == full)
}

/// All maximal tap masks of the given degree, in ascending mask order.
pub fn primitive_taps(degree: u32) -> Result<Vec<u32>> {
    if !(2..=MAX_CHECKED_DEGREE).contains(&degree) {
        return Err(Error::Unsupported(format!("primitive search limited to degree 2..={MAX_CHECKED_DEGREE}")));
    }
    let top = 1u32 << (degree - 1);
    let mut out = Vec::new();
    for low in 0..top {
        let taps = top | low;
        if is_maximal(degree, taps)? {
            out.push(taps);
        }
    }
    Ok(out)
}
