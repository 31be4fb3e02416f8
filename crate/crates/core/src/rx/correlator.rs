use crate::error::{invalid, Result};
use crate::pncode::{BitSequence, Codebook};
use crate::DETECT_BITS;

const WORDS: usize = DETECT_BITS / 64;

/// A local correlation maximum for one codebook entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hit {
    pub entry: usize,
    pub score: u32,
    /// Bit index one past the last bit of the matched window.
    pub end: u64,
}

/// Bit-serial correlator against every codebook entry at once.
///
/// The trailing 256 bits live in a 4-word shift register (oldest at bit 0
/// of word 0), so each score is 256 minus the popcount of a 256-bit XOR.
/// Hits at or above the threshold are held until no better score can turn
/// up within the dedup window, then released in order.
#[derive(Debug, Clone)]
pub struct SlidingCorrelator {
    patterns: Vec<[u64; WORDS]>,
    window: [u64; WORDS],
    filled: usize,
    scores: Vec<u32>,
    bits_seen: u64,
    threshold: u32,
    dedup: u64,
    pending: Vec<Option<Hit>>,
}

fn pack(seq: &BitSequence) -> [u64; WORDS] {
    let mut w = [0u64; WORDS];
    w.copy_from_slice(&seq.to_words());
    w
}

impl SlidingCorrelator {
    pub fn new(codebook: &Codebook, threshold: u32, dedup_window_bits: usize) -> Result<Self> {
        if codebook.is_empty() {
            return invalid("codebook is empty");
        }
        let patterns: Vec<_> = codebook.entries().iter().map(|e| pack(&e.code)).collect();
        Ok(Self {
            scores: vec![0; patterns.len()],
            pending: vec![None; patterns.len()],
            patterns,
            window: [0; WORDS],
            filled: 0,
            bits_seen: 0,
            threshold,
            dedup: dedup_window_bits as u64,
        })
    }

    /// Shifts in one bit and refreshes the scores. Returns whether a full
    /// 256-bit window is available.
    pub fn step(&mut self, bit: u8) -> bool {
        for i in 0..WORDS - 1 {
            self.window[i] = (self.window[i] >> 1) | (self.window[i + 1] << 63);
        }
        self.window[WORDS - 1] = (self.window[WORDS - 1] >> 1) | (u64::from(bit & 1) << 63);
        self.bits_seen += 1;
        self.filled = (self.filled + 1).min(DETECT_BITS);
        if self.filled < DETECT_BITS {
            return false;
        }
        for (score, p) in self.scores.iter_mut().zip(&self.patterns) {
            let diff: u32 = (0..WORDS).map(|i| (self.window[i] ^ p[i]).count_ones()).sum();
            *score = DETECT_BITS as u32 - diff;
        }
        true
    }

    /// Scores of the most recent full window, one per codebook entry.
    pub fn scores(&self) -> &[u32] {
        &self.scores
    }

    pub fn bits_seen(&self) -> u64 {
        self.bits_seen
    }

    pub fn push(&mut self, bit: u8, hits: &mut Vec<Hit>) {
        let full = self.step(bit);
        let now = self.bits_seen;
        let first = hits.len();
        for entry in 0..self.patterns.len() {
            if let Some(p) = self.pending[entry] {
                if now - p.end >= self.dedup {
                    hits.push(p);
                    self.pending[entry] = None;
                }
            }
            if !full || self.scores[entry] < self.threshold {
                continue;
            }
            let hit = Hit { entry, score: self.scores[entry], end: now };
            match self.pending[entry] {
                Some(p) if p.score >= hit.score => {}
                _ => self.pending[entry] = Some(hit),
            }
        }
        hits[first..].sort_by_key(|h| (h.end, h.entry));
    }

    /// Releases held hits at end of stream.
    pub fn flush(&mut self, hits: &mut Vec<Hit>) {
        let first = hits.len();
        hits.extend(self.pending.iter_mut().filter_map(Option::take));
        hits[first..].sort_by_key(|h| (h.end, h.entry));
    }
}

/// Upper tail `P(X >= t)` for `X ~ Binomial(n, 1/2)`.
pub fn binomial_tail(n: u32, t: u32) -> f64 {
    if t > n {
        return 0.0;
    }
    // log C(n, k) built up incrementally to stay finite for n = 256
    let mut log_c = 0.0f64;
    let mut total = 0.0f64;
    let base = n as f64 * 0.5f64.ln();
    for k in 0..=n {
        if k > 0 {
            log_c += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        if k >= t {
            total += (log_c + base).exp();
        }
    }
    total
}
