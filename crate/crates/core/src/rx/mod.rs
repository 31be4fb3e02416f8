//! The streaming receiver: power squelch, frequency-translating FIR, GMSK
//! demodulation and a sliding bit correlator that turns correlation peaks
//! into detection events.

mod correlator;
mod receiver;
mod squelch;
mod xlating;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::pncode::{BitSequence, Codebook};
use crate::SYMBOL_RATE_HZ;

pub use correlator::{binomial_tail, Hit, SlidingCorrelator};
pub use receiver::{run_receiver, Receiver, ReceiverConfig};
pub use squelch::{power_squelch, PowerSquelch, SquelchOutput, SquelchParams};
pub use xlating::{lowpass_taps, xlating_fir, XlatingFir, XlatingFirParams};

/// One correlation peak at or above the detection threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub tag_id: String,
    pub score: u32,
    /// Bit index one past the end of the matched 256-bit window.
    pub sample_offset: u64,
    /// Mean power over the frame, dBFS. Absent when the correlator runs on bits alone.
    pub rssi_db: Option<f64>,
    pub t_sec: f64,
    /// Input sample at which the matched window ends, when known.
    #[serde(skip)]
    pub input_sample: Option<u64>,
}

impl DetectionEvent {
    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub codebook: Codebook,
    pub threshold: u32,
    pub dedup_window_bits: usize,
}

impl DetectorConfig {
    pub fn new(codebook: Codebook) -> Self {
        Self { codebook, threshold: crate::DEFAULT_THRESHOLD, dedup_window_bits: crate::frame::FRAME_BITS }
    }

    pub fn with_threshold(mut self, threshold: u32) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 128 && self.threshold <= 256) {
            return invalid(format!("threshold {} outside (128, 256]", self.threshold));
        }
        if self.dedup_window_bits == 0 {
            return invalid("dedup window must be at least one bit");
        }
        if self.codebook.is_empty() {
            return invalid("codebook is empty");
        }
        Ok(())
    }

    fn correlator(&self) -> Result<SlidingCorrelator> {
        self.validate()?;
        SlidingCorrelator::new(&self.codebook, self.threshold, self.dedup_window_bits)
    }
}

fn bit_event(config: &DetectorConfig, hit: &Hit) -> DetectionEvent {
    DetectionEvent {
        tag_id: config.codebook.entries()[hit.entry].tag_id.clone(),
        score: hit.score,
        sample_offset: hit.end,
        rssi_db: None,
        t_sec: hit.end as f64 / SYMBOL_RATE_HZ,
        input_sample: None,
    }
}

/// Runs the correlator and peak picker over an already demodulated bit stream.
pub fn sliding_correlate(bits: &BitSequence, config: &DetectorConfig) -> Result<Vec<DetectionEvent>> {
    let mut corr = config.correlator()?;
    let mut hits = Vec::new();
    for b in bits.iter() {
        corr.push(b, &mut hits);
    }
    corr.flush(&mut hits);
    Ok(hits.iter().map(|h| bit_event(config, h)).collect())
}
