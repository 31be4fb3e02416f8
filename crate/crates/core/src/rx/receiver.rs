use std::collections::VecDeque;

use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::modem::{Boxcar, DcBlocker, GmskParams, IqBuffer, MuellerMuller, QuadratureDemod, TimingRecoveryParams};
use crate::{DETECT_BITS, SYMBOL_RATE_HZ};

use super::correlator::{Hit, SlidingCorrelator};
use super::squelch::{map_to_input, PowerSquelch, SquelchParams};
use super::xlating::{XlatingFir, XlatingFirParams};
use super::{DetectionEvent, DetectorConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverConfig {
    pub sample_rate: f64,
    pub squelch: SquelchParams,
    pub fir: XlatingFirParams,
    pub gmsk: GmskParams,
    pub timing: TimingRecoveryParams,
    pub dc_window: usize,
    /// Post-discriminator moving average length in samples; 1 disables it.
    pub smoothing_samples: usize,
    pub detector: DetectorConfig,
}

impl ReceiverConfig {
    pub const DEFAULT_SAMPLE_RATE: f64 = 4.0e6;
    pub const DEFAULT_DC_WINDOW: usize = 256;

    pub fn new(detector: DetectorConfig) -> Self {
        Self {
            sample_rate: Self::DEFAULT_SAMPLE_RATE,
            squelch: SquelchParams::default(),
            fir: XlatingFirParams::default(),
            gmsk: GmskParams::default(),
            timing: TimingRecoveryParams::default(),
            dc_window: Self::DEFAULT_DC_WINDOW,
            smoothing_samples: GmskParams::default().samples_per_symbol,
            detector,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.squelch.validate()?;
        self.fir.validate(self.sample_rate)?;
        self.gmsk.validate()?;
        self.timing.validate()?;
        self.detector.validate()?;
        let after_fir = self.sample_rate / self.fir.decimation as f64;
        let want = self.gmsk.sample_rate();
        if (after_fir - want).abs() > 1e-9 * want {
            return invalid(format!(
                "{} S/s after decimation by {} does not give {} samples per symbol",
                self.sample_rate, self.fir.decimation, self.gmsk.samples_per_symbol
            ));
        }
        Ok(())
    }
}

/// Push-driven receiver. Feed buffers of any size with [`Receiver::push`];
/// state carries across calls. [`Receiver::finish`] releases events still
/// held by the peak picker.
#[derive(Debug)]
pub struct Receiver {
    squelch: PowerSquelch,
    fir: XlatingFir,
    demod: QuadratureDemod,
    dc: DcBlocker,
    smooth: Boxcar,
    mm: MuellerMuller,
    correlator: SlidingCorrelator,
    tag_ids: Vec<String>,
    decimation: u64,
    smooth_delay: u64,
    group_delay: u64,
    /// squelch output samples per bit
    samples_per_bit: u64,
    marks: Vec<(u64, u64)>,
    /// power of recent squelch-passed samples; `powers[0]` is sample `powers_base`
    powers: VecDeque<f64>,
    powers_base: u64,
    powers_cap: usize,
    /// squelch-output index at each recent bit; `bit_pos[0]` is bit `bits_base`
    bit_pos: VecDeque<u64>,
    bits_base: u64,
    bits_cap: usize,
    scratch: Scratch,
}

#[derive(Debug, Default)]
struct Scratch {
    gated: Vec<Complex64>,
    filtered: Vec<Complex64>,
    soft: Vec<f64>,
    flat: Vec<f64>,
    smooth: Vec<f64>,
    symbols: Vec<f64>,
    positions: Vec<u64>,
    hits: Vec<Hit>,
}

impl Receiver {
    pub fn new(config: &ReceiverConfig) -> Result<Self> {
        config.validate()?;
        let fir = XlatingFir::new(&config.fir, config.sample_rate)?;
        let samples_per_bit = (config.sample_rate / SYMBOL_RATE_HZ).round().max(1.0) as u64;
        let bits_cap = config.detector.dedup_window_bits + 2 * DETECT_BITS + Self::CHUNK;
        Ok(Self {
            squelch: PowerSquelch::new(&config.squelch)?,
            group_delay: fir.group_delay() as u64,
            fir,
            demod: QuadratureDemod::new(&config.gmsk)?,
            dc: DcBlocker::new(config.dc_window)?,
            smooth: Boxcar::new(config.smoothing_samples)?,
            mm: MuellerMuller::new(config.timing)?,
            correlator: config.detector.correlator()?,
            tag_ids: config.detector.codebook.entries().iter().map(|e| e.tag_id.clone()).collect(),
            decimation: config.fir.decimation as u64,
            smooth_delay: (config.smoothing_samples as u64 * config.fir.decimation as u64) / 2,
            samples_per_bit,
            marks: Vec::new(),
            powers: VecDeque::new(),
            powers_base: 0,
            powers_cap: bits_cap * samples_per_bit as usize + 2 * Self::CHUNK,
            bit_pos: VecDeque::new(),
            bits_base: 0,
            bits_cap,
            scratch: Scratch::default(),
        })
    }

    /// How far an event's `input_sample` may sit from the true end of the
    /// matched bits: FIR group delay plus a few symbols of timing slack.
    pub fn offset_tolerance_samples(&self) -> u64 {
        self.group_delay + 4 * self.samples_per_bit
    }

    pub fn bits_demodulated(&self) -> u64 {
        self.correlator.bits_seen()
    }

    pub fn push(&mut self, input: &[Complex64], events: &mut Vec<DetectionEvent>) {
        // bounded chunks keep the history rings long enough for every event
        for chunk in input.chunks(Self::CHUNK) {
            self.push_chunk(chunk, events);
        }
    }

    const CHUNK: usize = 4096;

    fn push_chunk(&mut self, input: &[Complex64], events: &mut Vec<DetectionEvent>) {
        let mut s = std::mem::take(&mut self.scratch);
        s.gated.clear();
        self.squelch.process(input, &mut s.gated, &mut self.marks);
        self.powers.extend(s.gated.iter().map(|x| x.norm_sqr()));
        while self.powers.len() > self.powers_cap {
            self.powers.pop_front();
            self.powers_base += 1;
        }

        s.filtered.clear();
        self.fir.process(&s.gated, &mut s.filtered);
        s.soft.clear();
        self.demod.process(&s.filtered, &mut s.soft);
        s.flat.clear();
        self.dc.process(&s.soft, &mut s.flat);
        s.smooth.clear();
        self.smooth.process(&s.flat, &mut s.smooth);
        s.symbols.clear();
        s.positions.clear();
        self.mm.process(&s.smooth, &mut s.symbols, Some(&mut s.positions));

        s.hits.clear();
        for (&y, &p) in s.symbols.iter().zip(&s.positions) {
            // discriminator value p spans filter outputs p and p + 1; the
            // moving average lags by half its length
            let gated_index = ((p + 1) * self.decimation).saturating_sub(self.group_delay + self.smooth_delay);
            self.bit_pos.push_back(gated_index);
            if self.bit_pos.len() > self.bits_cap {
                self.bit_pos.pop_front();
                self.bits_base += 1;
            }
            self.correlator.push(u8::from(y >= 0.0), &mut s.hits);
        }
        events.extend(s.hits.iter().map(|h| self.event(h)));
        self.prune_marks();
        self.scratch = s;
    }

    pub fn finish(&mut self, events: &mut Vec<DetectionEvent>) {
        let mut hits = Vec::new();
        self.correlator.flush(&mut hits);
        events.extend(hits.iter().map(|h| self.event(h)));
    }

    fn bit_position(&self, bit: u64) -> Option<u64> {
        let k = bit.checked_sub(self.bits_base)?;
        self.bit_pos.get(k as usize).copied()
    }

    fn event(&self, hit: &Hit) -> DetectionEvent {
        let first = self.bit_position(hit.end - DETECT_BITS as u64);
        let last = self.bit_position(hit.end - 1);
        let half_bit = self.samples_per_bit / 2;
        let rssi_db = match (first, last) {
            (Some(a), Some(b)) => {
                let lo = a.saturating_sub(half_bit).max(self.powers_base);
                let hi = (b + half_bit).min(self.powers_base + self.powers.len() as u64);
                (hi > lo).then(|| {
                    let range = (lo - self.powers_base) as usize..(hi - self.powers_base) as usize;
                    let sum: f64 = self.powers.range(range).sum();
                    10.0 * (sum / (hi - lo) as f64).max(1e-30).log10()
                })
            }
            _ => None,
        };
        let input_sample = last.and_then(|b| map_to_input(&self.marks, b)).map(|i| i + half_bit);
        DetectionEvent {
            tag_id: self.tag_ids[hit.entry].clone(),
            score: hit.score,
            sample_offset: hit.end,
            rssi_db,
            t_sec: hit.end as f64 / SYMBOL_RATE_HZ,
            input_sample,
        }
    }

    /// Drops squelch marks older than anything an event can still refer to.
    fn prune_marks(&mut self) {
        let oldest = self.bit_pos.front().copied().unwrap_or(0).min(self.powers_base);
        let keep_from = self.marks.iter().rposition(|(out, _)| *out <= oldest).unwrap_or(0);
        if keep_from > 0 {
            self.marks.drain(..keep_from);
        }
    }
}

/// Runs the whole receive chain over one buffer.
pub fn run_receiver(iq: &IqBuffer, config: &ReceiverConfig) -> Result<Vec<DetectionEvent>> {
    if (iq.sample_rate() - config.sample_rate).abs() > 1e-9 * config.sample_rate {
        return invalid(format!(
            "buffer at {} S/s but receiver configured for {} S/s",
            iq.sample_rate(),
            config.sample_rate
        ));
    }
    let mut rx = Receiver::new(config)?;
    let mut events = Vec::new();
    rx.push(iq.samples(), &mut events);
    rx.finish(&mut events);
    Ok(events)
}
