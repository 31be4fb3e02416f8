//! Monte Carlo plumbing: synthesize tag bursts, push them through the
//! channel and receiver, and turn detection counts into Pd curves and range
//! predictions.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{apply_channel, distance_for_snr, AntennaPattern, ChannelParams, Drive, LinkBudget};
use crate::error::{invalid, Result};
use crate::frame::flatten_to_bits;
use crate::modem::{modulate_burst, GmskParams, IqBuffer};
use crate::pncode::{BitSequence, Codebook};
use crate::rx::{run_receiver, DetectorConfig, ReceiverConfig};
use crate::seed;
use crate::DETECT_BITS;

/// Framing of a transmitted burst inside the capture buffer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BurstShape {
    pub center_offset_hz: f64,
    pub lead_in_symbols: usize,
    pub tail_symbols: usize,
    /// Silent samples before and after the burst; they carry only noise.
    pub pad_before: usize,
    pub pad_after: usize,
}

impl Default for BurstShape {
    fn default() -> Self {
        Self { center_offset_hz: 1.0e6, lead_in_symbols: 32, tail_symbols: 16, pad_before: 2000, pad_after: 2000 }
    }
}

/// Clean burst for `bits` and the sample at which the detect sequence ends.
pub fn clean_burst(bits: &BitSequence, gmsk: &GmskParams, shape: &BurstShape) -> Result<(IqBuffer, usize)> {
    let fs = gmsk.sample_rate();
    let (burst, layout) =
        modulate_burst(bits, gmsk, fs, shape.center_offset_hz, shape.lead_in_symbols, shape.tail_symbols)?;
    let zero = Complex64::new(0.0, 0.0);
    let mut samples = Vec::with_capacity(shape.pad_before + burst.len() + shape.pad_after);
    samples.resize(shape.pad_before, zero);
    samples.extend_from_slice(burst.samples());
    samples.resize(samples.len() + shape.pad_after, zero);
    let end = shape.pad_before + layout.data_start + DETECT_BITS.min(bits.len()) * gmsk.samples_per_symbol;
    Ok((IqBuffer::new(samples, fs)?, end))
}

/// Burst through the channel: what the receiver hears.
pub fn transmit(
    bits: &BitSequence,
    gmsk: &GmskParams,
    shape: &BurstShape,
    channel: &ChannelParams,
    budget: &LinkBudget,
    pattern: &AntennaPattern,
) -> Result<IqBuffer> {
    let (clean, _) = clean_burst(bits, gmsk, shape)?;
    apply_channel(&clean, channel, budget, pattern)
}

/// Per-trial random impairments, drawn uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Impairments {
    pub max_cfo_hz: f64,
    pub max_clock_ppm: f64,
    /// Random fractional timing phase in [0, samples_per_symbol).
    pub random_timing: bool,
    pub random_phase: bool,
}

impl Default for Impairments {
    fn default() -> Self {
        Self { max_cfo_hz: 0.0, max_clock_ppm: 0.0, random_timing: true, random_phase: true }
    }
}

impl Impairments {
    pub fn none() -> Self {
        Self { random_timing: false, random_phase: false, ..Self::default() }
    }

    fn apply(&self, p: &mut ChannelParams, rng: &mut impl Rng, sps: usize) {
        if self.max_cfo_hz > 0.0 {
            p.cfo_hz = rng.random_range(-self.max_cfo_hz..=self.max_cfo_hz);
        }
        if self.max_clock_ppm > 0.0 {
            p.clock_offset_ppm = rng.random_range(-self.max_clock_ppm..=self.max_clock_ppm);
        }
        if self.random_timing {
            p.timing_offset_samples = rng.random_range(0.0..sps as f64);
        }
        if self.random_phase {
            p.phase_rad = rng.random_range(0.0..2.0 * PI);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialConfig {
    pub codebook: Codebook,
    pub gmsk: GmskParams,
    pub shape: BurstShape,
    pub budget: LinkBudget,
    pub pattern: AntennaPattern,
    pub impairments: Impairments,
    pub noise_floor_dbfs: f64,
    pub receiver: ReceiverConfig,
}

impl TrialConfig {
    pub fn new(codebook: Codebook) -> Self {
        Self {
            receiver: ReceiverConfig::new(DetectorConfig::new(codebook.clone())),
            codebook,
            gmsk: GmskParams::default(),
            shape: BurstShape::default(),
            budget: LinkBudget::default(),
            pattern: AntennaPattern::default(),
            impairments: Impairments::default(),
            noise_floor_dbfs: ChannelParams::DEFAULT_NOISE_FLOOR_DBFS,
        }
    }
}

/// Result of one transmitted frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub tag_index: usize,
    /// At least one event carried the transmitted tag id.
    pub detected: bool,
    /// Best score for the transmitted tag, 0 when not detected.
    pub best_score: u32,
    pub rssi_db: Option<f64>,
    /// Events naming any other tag.
    pub wrong_tag_events: usize,
}

/// Trial runner with the clean bursts of every tag precomputed.
#[derive(Debug, Clone)]
pub struct TrialRunner {
    config: TrialConfig,
    bursts: Vec<IqBuffer>,
}

impl TrialRunner {
    pub fn new(config: TrialConfig) -> Result<Self> {
        config.receiver.validate()?;
        let bursts = config
            .codebook
            .entries()
            .iter()
            .map(|e| Ok(clean_burst(&flatten_to_bits(&e.frame()?), &config.gmsk, &config.shape)?.0))
            .collect::<Result<_>>()?;
        Ok(Self { config, bursts })
    }

    pub fn config(&self) -> &TrialConfig {
        &self.config
    }

    /// One frame from tag `tag_index`, impairments drawn from `seed`.
    pub fn run(&self, tag_index: usize, drive: Drive, seed: u64) -> Result<TrialOutcome> {
        let Some(burst) = self.bursts.get(tag_index) else {
            return invalid(format!("tag index {tag_index} outside the codebook"));
        };
        let mut params = ChannelParams::with_snr(f64::INFINITY, seed::derive(seed, 1));
        params.drive = drive;
        params.noise_floor_dbfs = self.config.noise_floor_dbfs;
        let mut rng = seed::rng(seed, 2);
        self.config.impairments.apply(&mut params, &mut rng, self.config.gmsk.samples_per_symbol);
        let rx = apply_channel(burst, &params, &self.config.budget, &self.config.pattern)?;
        let events = run_receiver(&rx, &self.config.receiver)?;

        let tag_id = &self.config.codebook.entries()[tag_index].tag_id;
        let best = events.iter().filter(|e| &e.tag_id == tag_id).max_by_key(|e| e.score);
        Ok(TrialOutcome {
            tag_index,
            detected: best.is_some(),
            best_score: best.map_or(0, |e| e.score),
            rssi_db: best.and_then(|e| e.rssi_db),
            wrong_tag_events: events.iter().filter(|e| &e.tag_id != tag_id).count(),
        })
    }

    /// `trials` frames at one drive level, tags and impairments drawn from
    /// `seed`. Runs in parallel; the result order follows the trial index.
    pub fn run_many(&self, drive: Drive, trials: usize, seed: u64) -> Result<Vec<TrialOutcome>> {
        let n_tags = self.bursts.len() as u64;
        (0..trials as u64)
            .into_par_iter()
            .map(|t| {
                let s = seed::derive(seed, t);
                self.run((seed::derive(s, 0) % n_tags) as usize, drive, s)
            })
            .collect()
    }
}

/// Detection probability at one SNR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdPoint {
    pub snr_db: f64,
    pub trials: usize,
    pub detections: usize,
    pub pd: f64,
}

/// Monte Carlo Pd over an SNR grid; every bin has its own derived seed.
pub fn pd_curve(runner: &TrialRunner, snrs_db: &[f64], trials: usize, seed: u64) -> Result<Vec<PdPoint>> {
    if trials == 0 {
        return invalid("at least one trial per SNR is needed");
    }
    snrs_db
        .iter()
        .enumerate()
        .map(|(i, &snr)| {
            let outcomes = runner.run_many(Drive::Snr(snr), trials, seed::derive(seed, i as u64))?;
            let detections = outcomes.iter().filter(|o| o.detected).count();
            Ok(PdPoint { snr_db: snr, trials, detections, pd: detections as f64 / trials as f64 })
        })
        .collect()
}

/// Evenly spaced grid from `start` to `stop` inclusive.
pub fn snr_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && start.is_finite() && stop.is_finite() && stop >= start) {
        return invalid(format!("bad SNR grid {start}..{stop} step {step}"));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

/// Weighted least-squares non-decreasing fit (pool adjacent violators).
pub fn isotonic_fit(values: &[f64], weights: &[f64]) -> Vec<f64> {
    // blocks of (mean, weight, count)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 && blocks[blocks.len() - 2].0 > blocks[blocks.len() - 1].0 {
            let (m2, w2, c2) = blocks.pop().unwrap_or_default();
            let (m1, w1, c1) = blocks.pop().unwrap_or_default();
            let w = w1 + w2;
            let m = if w > 0.0 { (m1 * w1 + m2 * w2) / w } else { (m1 + m2) / 2.0 };
            blocks.push((m, w, c1 + c2));
        }
    }
    blocks.iter().flat_map(|&(m, _, c)| std::iter::repeat_n(m, c)).collect()
}

/// Whether the raw curve is non-decreasing up to Monte Carlo noise: every
/// point lies within `z` binomial standard errors (floored at one trial's
/// worth) of its isotonic fit.
pub fn is_monotone_within_noise(curve: &[PdPoint], z: f64) -> bool {
    let values: Vec<f64> = curve.iter().map(|p| p.pd).collect();
    let weights: Vec<f64> = curve.iter().map(|p| p.trials as f64).collect();
    let fit = isotonic_fit(&values, &weights);
    curve.iter().zip(&fit).all(|(p, &f)| {
        let n = p.trials as f64;
        let se = (f * (1.0 - f) / n).sqrt().max(1.0 / n);
        (p.pd - f).abs() <= z * se
    })
}

/// Lowest SNR at which the isotonic fit of the curve reaches `pd_target`,
/// linearly interpolated between grid points.
pub fn snr_at_pd(curve: &[PdPoint], pd_target: f64) -> Option<f64> {
    let values: Vec<f64> = curve.iter().map(|p| p.pd).collect();
    let weights: Vec<f64> = curve.iter().map(|p| p.trials as f64).collect();
    let fit = isotonic_fit(&values, &weights);
    let k = fit.iter().position(|&v| v >= pd_target)?;
    if k == 0 {
        return Some(curve[0].snr_db);
    }
    let (x0, x1, y0, y1) = (curve[k - 1].snr_db, curve[k].snr_db, fit[k - 1], fit[k]);
    Some(x0 + (pd_target - y0) / (y1 - y0) * (x1 - x0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeConfig {
    pub pd_target: f64,
    pub trials: usize,
    pub snr_min_db: f64,
    pub snr_max_db: f64,
    pub snr_step_db: f64,
    pub seed: u64,
}

impl Default for RangeConfig {
    fn default() -> Self {
        Self { pd_target: 0.9, trials: 200, snr_min_db: -2.0, snr_max_db: 16.0, snr_step_db: 0.5, seed: 0 }
    }
}

impl RangeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pd_target > 0.0 && self.pd_target < 1.0) {
            return invalid(format!("Pd target {} outside (0, 1)", self.pd_target));
        }
        if self.trials == 0 {
            return invalid("at least one trial per SNR is needed");
        }
        snr_grid(self.snr_min_db, self.snr_max_db, self.snr_step_db).map(|_| ())
    }
}

/// Link-budget range prediction from a measured Pd curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeReport {
    pub pd_target: f64,
    pub trials_per_bin: usize,
    pub curve: Vec<PdPoint>,
    /// SNR at which Pd reaches the target.
    pub snr_star_db: f64,
    /// Boresight distance at which the link budget gives `snr_star_db`.
    pub predicted_range_m: f64,
    /// Distances for Pd 0.99 and Pd 0.5: ranges over which the link goes
    /// from reliable to marginal.
    pub plausible_interval_m: [f64; 2],
    pub budget: LinkBudget,
    pub pattern: AntennaPattern,
}

pub fn predict_range(runner: &TrialRunner, config: &RangeConfig) -> Result<RangeReport> {
    config.validate()?;
    let grid = snr_grid(config.snr_min_db, config.snr_max_db, config.snr_step_db)?;
    let curve = pd_curve(runner, &grid, config.trials, config.seed)?;
    let unreached = |pd: f64| {
        crate::Error::InvalidArgument(format!("Pd {pd} not reached by {} dB; widen the SNR grid", config.snr_max_db))
    };
    let snr_star = snr_at_pd(&curve, config.pd_target).ok_or_else(|| unreached(config.pd_target))?;
    let budget = runner.config().budget;
    let pattern = runner.config().pattern;
    let d = |snr: f64| distance_for_snr(&budget, &pattern, snr);
    // the highest-SNR bin stands in when 0.99 is not reached inside the grid
    let snr_reliable = snr_at_pd(&curve, 0.99).unwrap_or(config.snr_max_db);
    let snr_marginal = snr_at_pd(&curve, 0.5).ok_or_else(|| unreached(0.5))?;
    Ok(RangeReport {
        pd_target: config.pd_target,
        trials_per_bin: config.trials,
        snr_star_db: snr_star,
        predicted_range_m: d(snr_star)?,
        plausible_interval_m: [d(snr_reliable)?, d(snr_marginal)?],
        curve,
        budget,
        pattern,
    })
}
