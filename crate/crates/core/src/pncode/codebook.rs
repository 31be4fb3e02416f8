use std::collections::HashSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::frame::{self, TagFrame, CODE_BITS, DETECT_BITS, PREAMBLE_BITS};

use super::{lfsr_msequence, primitive_taps, BitSequence};

const CODEBOOK_DEGREE: u32 = 8;
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodebookEntry {
    pub tag_id: String,
    /// 256-bit detection sequence (preamble then code).
    pub code: BitSequence,
}

impl CodebookEntry {
    pub fn frame(&self) -> Result<TagFrame> {
        frame::assemble_frame(&self.code.slice(PREAMBLE_BITS..DETECT_BITS))
    }
}

/// Per-tag detection sequences with a screened cross-correlation bound.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "CodebookJson", try_from = "CodebookJson")]
pub struct Codebook {
    entries: Vec<CodebookEntry>,
    max_cross_correlation: u32,
}

impl Codebook {
    /// Validates entry shape and recomputes the pairwise bound.
    pub fn new(entries: Vec<CodebookEntry>) -> Result<Self> {
        if entries.is_empty() {
            return invalid("codebook has no entries");
        }
        let mut ids = HashSet::new();
        let mut codes = HashSet::new();
        for e in &entries {
            if e.code.len() != DETECT_BITS {
                return invalid(format!("tag {} code has {} bits, want {DETECT_BITS}", e.tag_id, e.code.len()));
            }
            if e.code != frame::build_detect_sequence(&e.code.slice(PREAMBLE_BITS..DETECT_BITS))? {
                return invalid(format!("tag {} code does not start with its preamble", e.tag_id));
            }
            if !ids.insert(e.tag_id.as_str()) {
                return invalid(format!("duplicate tag id {}", e.tag_id));
            }
            if !codes.insert(&e.code) {
                return invalid(format!("tag {} duplicates another code", e.tag_id));
            }
        }
        let mut book = Self { entries, max_cross_correlation: 0 };
        book.max_cross_correlation = book.recompute_max_cross()?;
        Ok(book)
    }

    pub fn entries(&self) -> &[CodebookEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_cross_correlation(&self) -> u32 {
        self.max_cross_correlation
    }

    pub fn get(&self, tag_id: &str) -> Option<&CodebookEntry> {
        self.entries.iter().find(|e| e.tag_id == tag_id)
    }

    /// Worst pairwise score over aligned and sliding alignments, both directions.
    pub fn recompute_max_cross(&self) -> Result<u32> {
        let packed: Vec<Candidate> =
            self.entries.iter().map(|e| Candidate::from_detect(&e.code)).collect::<Result<_>>()?;
        let mut worst = 0;
        for i in 0..packed.len() {
            for j in i + 1..packed.len() {
                worst = worst.max(packed[i].pair_peak(&packed[j], u32::MAX));
            }
        }
        Ok(worst)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Bits stored with 256 zero bits of padding on each side plus a validity
/// mask, so any 64-bit window in the padded range is two word reads.
#[derive(Debug, Clone)]
struct PaddedBits {
    bits: Vec<u64>,
    valid: Vec<u64>,
}

const PAD: usize = 256;

impl PaddedBits {
    fn new(seq: &BitSequence) -> Self {
        let words = (PAD + seq.len() + PAD).div_ceil(64) + 1;
        let mut bits = vec![0u64; words];
        let mut valid = vec![0u64; words];
        for (i, b) in seq.iter().enumerate() {
            let p = PAD + i;
            bits[p / 64] |= u64::from(b) << (p % 64);
            valid[p / 64] |= 1 << (p % 64);
        }
        Self { bits, valid }
    }

    fn read(words: &[u64], p: usize) -> u64 {
        let (w, s) = (p / 64, p % 64);
        if s == 0 {
            words[w]
        } else {
            (words[w] >> s) | (words[w + 1] << (64 - s))
        }
    }

    /// 64 bits starting at sequence position `start` (may be negative).
    fn window(&self, start: isize) -> (u64, u64) {
        let p = (PAD as isize + start) as usize;
        (Self::read(&self.bits, p), Self::read(&self.valid, p))
    }
}

/// Peak match count of `pattern` slid across `stream`, counting only
/// overlapping positions. Offsets run from `-(pattern.len() - 1)` to
/// `stream.len() - 1`, so every partial overlap is covered.
pub fn sliding_peak(pattern: &BitSequence, stream: &BitSequence) -> Result<u32> {
    if pattern.is_empty() || stream.is_empty() {
        return invalid("sliding correlation of an empty sequence");
    }
    if pattern.len() > PAD {
        return invalid(format!("pattern longer than {PAD} bits"));
    }
    let padded = PaddedBits::new(stream);
    Ok(peak_over_offsets(&pattern.to_words(), pattern.len(), &padded, stream.len(), u32::MAX))
}

fn peak_over_offsets(
    pattern: &[u64],
    pattern_len: usize,
    stream: &PaddedBits,
    stream_len: usize,
    stop_above: u32,
) -> u32 {
    let mut peak = 0;
    for off in -(pattern_len as isize - 1)..stream_len as isize {
        let mut matches = 0;
        for (w, &a) in pattern.iter().enumerate() {
            let (b, mut valid) = stream.window(off + 64 * w as isize);
            let remaining = pattern_len - 64 * w;
            if remaining < 64 {
                valid &= (1u64 << remaining) - 1;
            }
            matches += (!(a ^ b) & valid).count_ones();
        }
        peak = peak.max(matches);
        if peak > stop_above {
            break;
        }
    }
    peak
}

/// A candidate tag: its detection sequence packed, plus its full on-air frame
/// (with CRC) padded for sliding comparison.
struct Candidate {
    detect: BitSequence,
    detect_words: Vec<u64>,
    frame: PaddedBits,
}

impl Candidate {
    fn from_code(code248: &BitSequence) -> Result<Self> {
        let f = frame::assemble_frame(code248)?;
        let on_air = frame::flatten_to_bits(&f);
        Ok(Self {
            detect: f.detect_sequence().clone(),
            detect_words: f.detect_sequence().to_words(),
            frame: PaddedBits::new(&on_air),
        })
    }

    fn from_detect(code256: &BitSequence) -> Result<Self> {
        Self::from_code(&code256.slice(PREAMBLE_BITS..DETECT_BITS))
    }

    /// Worst of: aligned score, self pattern over other's frame, other's
    /// pattern over self's frame. Stops early once `limit` is exceeded.
    fn pair_peak(&self, other: &Candidate, limit: u32) -> u32 {
        let aligned =
            self.detect_words.iter().zip(&other.detect_words).map(|(a, b)| (!(a ^ b)).count_ones()).sum::<u32>();
        if aligned > limit {
            return aligned;
        }
        let frame_len = frame::FRAME_BITS;
        let ab = peak_over_offsets(&self.detect_words, DETECT_BITS, &other.frame, frame_len, limit);
        if ab > limit {
            return ab.max(aligned);
        }
        let ba = peak_over_offsets(&other.detect_words, DETECT_BITS, &self.frame, frame_len, limit);
        aligned.max(ab).max(ba)
    }
}

/// Seeded greedy search over degree-8 m-sequences (every primitive
/// polynomial, every cyclic shift, truncated to 248 bits). A candidate is
/// kept when its aligned and sliding scores against every kept code stay
/// within `max_cross`.
pub fn build_codebook(n_tags: usize, seed: u64, max_cross: u32) -> Result<Codebook> {
    if n_tags == 0 {
        return invalid("need at least one tag");
    }
    if !(128..256).contains(&max_cross) {
        return invalid(format!("max_cross {max_cross} outside 128..256"));
    }

    let mut pool: Vec<(u32, usize)> = Vec::new();
    for taps in primitive_taps(CODEBOOK_DEGREE)? {
        for shift in 0..(1usize << CODEBOOK_DEGREE) - 1 {
            pool.push((taps, shift));
        }
    }
    pool.shuffle(&mut crate::seed::rng(seed, 0x636f_6465));

    let mut kept: Vec<Candidate> = Vec::with_capacity(n_tags.min(pool.len()));
    let mut worst = 0;
    for (taps, shift) in pool {
        let mseq = lfsr_msequence(CODEBOOK_DEGREE, taps, 1)?;
        let cand = Candidate::from_code(&mseq.rotate_left(shift).prefix(CODE_BITS))?;
        let mut cand_worst = 0;
        let ok = kept.iter().all(|k| {
            let p = cand.pair_peak(k, max_cross);
            cand_worst = cand_worst.max(p);
            p <= max_cross
        });
        if ok {
            worst = worst.max(cand_worst);
            kept.push(cand);
            if kept.len() == n_tags {
                break;
            }
        }
    }
    if kept.len() < n_tags {
        return Err(Error::CapacityExceeded { requested: n_tags, achieved: kept.len() });
    }

    let width = (n_tags - 1).to_string().len().max(3);
    let entries = kept
        .into_iter()
        .enumerate()
        .map(|(i, c)| CodebookEntry { tag_id: format!("tag-{i:0width$}"), code: c.detect })
        .collect();
    Ok(Codebook { entries, max_cross_correlation: worst })
}

#[derive(Serialize, Deserialize)]
struct CodebookJson {
    version: u32,
    max_cross_correlation: u32,
    entries: Vec<EntryJson>,
}

#[derive(Serialize, Deserialize)]
struct EntryJson {
    tag_id: String,
    bits: String,
}

impl From<Codebook> for CodebookJson {
    fn from(c: Codebook) -> Self {
        Self {
            version: FORMAT_VERSION,
            max_cross_correlation: c.max_cross_correlation,
            entries: c.entries.into_iter().map(|e| EntryJson { tag_id: e.tag_id, bits: e.code.to_string() }).collect(),
        }
    }
}

impl TryFrom<CodebookJson> for Codebook {
    type Error = Error;

    fn try_from(j: CodebookJson) -> Result<Self> {
        if j.version != FORMAT_VERSION {
            return invalid(format!("unsupported codebook version {}", j.version));
        }
        let entries = j
            .entries
            .into_iter()
            .map(|e| Ok(CodebookEntry { code: e.bits.parse()?, tag_id: e.tag_id }))
            .collect::<Result<Vec<_>>>()?;
        let book = Codebook::new(entries)?;
        if book.max_cross_correlation > j.max_cross_correlation {
            return invalid(format!(
                "stated max_cross_correlation {} but entries reach {}",
                j.max_cross_correlation, book.max_cross_correlation
            ));
        }
        Ok(Codebook { max_cross_correlation: j.max_cross_correlation, ..book })
    }
}
