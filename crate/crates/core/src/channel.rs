//! RF link model: antenna pattern, free-space path loss, link budget, and
//! an impairment channel (delay, sample-clock offset, carrier offset, AWGN).
//!
//! SNR is always quoted over the receiver noise bandwidth
//! ([`LinkBudget::noise_bandwidth_hz`]), not per sample.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::modem::IqBuffer;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;
const THERMAL_NOISE_DBM_HZ: f64 = -174.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkBudget {
    pub tx_power_dbm: f64,
    pub tx_gain_dbi: f64,
    pub rx_gain_dbi: f64,
    pub frequency_hz: f64,
    pub noise_figure_db: f64,
    pub noise_bandwidth_hz: f64,
}

impl Default for LinkBudget {
    fn default() -> Self {
        Self {
            tx_power_dbm: 8.0,
            tx_gain_dbi: 0.0,
            rx_gain_dbi: 16.0,
            frequency_hz: 2.480e9,
            noise_figure_db: 7.0,
            noise_bandwidth_hz: 1.2e6,
        }
    }
}

impl LinkBudget {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.tx_power_dbm,
            self.tx_gain_dbi,
            self.rx_gain_dbi,
            self.frequency_hz,
            self.noise_figure_db,
            self.noise_bandwidth_hz,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return invalid("link budget fields must be finite");
        }
        if self.frequency_hz <= 0.0 || self.noise_bandwidth_hz <= 0.0 {
            return invalid("frequency and noise bandwidth must be positive");
        }
        Ok(())
    }

    /// kTB noise plus noise figure, in dBm.
    pub fn noise_floor_dbm(&self) -> f64 {
        THERMAL_NOISE_DBM_HZ + 10.0 * self.noise_bandwidth_hz.log10() + self.noise_figure_db
    }
}

/// Directional receive antenna: parabolic main lobe (in dB) clamped at a
/// flat side-lobe floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AntennaPattern {
    pub boresight_gain_dbi: f64,
    pub beamwidth_3db_deg: f64,
    pub sidelobe_floor_db: f64,
}

impl Default for AntennaPattern {
    fn default() -> Self {
        Self { boresight_gain_dbi: 16.0, beamwidth_3db_deg: 28.0, sidelobe_floor_db: 20.0 }
    }
}

impl AntennaPattern {
    pub fn validate(&self) -> Result<()> {
        if !(self.boresight_gain_dbi.is_finite() && self.beamwidth_3db_deg > 0.0 && self.sidelobe_floor_db >= 0.0) {
            return invalid("antenna pattern needs finite gain, positive beamwidth, non-negative floor");
        }
        Ok(())
    }
}

/// Wraps an angle into [-180, 180).
pub fn wrap_degrees(deg: f64) -> f64 {
    (deg + 180.0).rem_euclid(360.0) - 180.0
}

/// Gain towards `azimuth_deg` off boresight:
/// `G0 - min(12 (az / beamwidth)^2, floor)`.
pub fn pattern_gain(pattern: &AntennaPattern, azimuth_deg: f64) -> f64 {
    let az = if (-180.0..=180.0).contains(&azimuth_deg) { azimuth_deg } else { wrap_degrees(azimuth_deg) };
    let x = az / pattern.beamwidth_3db_deg;
    pattern.boresight_gain_dbi - (12.0 * x * x).min(pattern.sidelobe_floor_db)
}

/// Free-space path loss `20 log10(4 pi d f / c)`.
pub fn fspl_db(distance_m: f64, frequency_hz: f64) -> Result<f64> {
    if !(distance_m > 0.0 && distance_m.is_finite()) {
        return invalid(format!("distance {distance_m} m must be positive"));
    }
    if !(frequency_hz > 0.0) {
        return invalid(format!("frequency {frequency_hz} Hz must be positive"));
    }
    Ok(20.0 * distance_m.log10() + 20.0 * frequency_hz.log10() + 20.0 * (4.0 * PI / SPEED_OF_LIGHT).log10())
}

pub fn rx_snr_db(budget: &LinkBudget, pattern: &AntennaPattern, distance_m: f64, azimuth_deg: f64) -> Result<f64> {
    budget.validate()?;
    let loss = fspl_db(distance_m, budget.frequency_hz)?;
    Ok(budget.tx_power_dbm + budget.tx_gain_dbi + pattern_gain(pattern, azimuth_deg) - loss - budget.noise_floor_dbm())
}

/// Distance at which boresight SNR equals `snr_db`.
pub fn distance_for_snr(budget: &LinkBudget, pattern: &AntennaPattern, snr_db: f64) -> Result<f64> {
    let at_1m = rx_snr_db(budget, pattern, 1.0, 0.0)?;
    Ok(10f64.powf((at_1m - snr_db) / 20.0))
}

/// How the received signal level is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Drive {
    /// Target SNR in dB; `f64::INFINITY` disables noise and scaling.
    Snr(f64),
    /// SNR from the link budget at this range and azimuth off boresight.
    Distance { distance_m: f64, azimuth_deg: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub drive: Drive,
    pub cfo_hz: f64,
    pub phase_rad: f64,
    /// Fractional delay in samples, applied by windowed-sinc interpolation.
    pub timing_offset_samples: f64,
    /// Receiver sample clock error, parts per million (positive = fast).
    pub clock_offset_ppm: f64,
    /// Per-sample complex noise power across the full sample bandwidth.
    pub noise_floor_dbfs: f64,
    pub rng_seed: u64,
}

impl ChannelParams {
    pub const DEFAULT_NOISE_FLOOR_DBFS: f64 = -45.0;

    pub fn with_snr(snr_db: f64, rng_seed: u64) -> Self {
        Self {
            drive: Drive::Snr(snr_db),
            cfo_hz: 0.0,
            phase_rad: 0.0,
            timing_offset_samples: 0.0,
            clock_offset_ppm: 0.0,
            noise_floor_dbfs: Self::DEFAULT_NOISE_FLOOR_DBFS,
            rng_seed,
        }
    }

    pub fn with_distance(distance_m: f64, azimuth_deg: f64, rng_seed: u64) -> Self {
        Self { drive: Drive::Distance { distance_m, azimuth_deg }, ..Self::with_snr(f64::INFINITY, rng_seed) }
    }

    pub fn validate(&self) -> Result<()> {
        match self.drive {
            Drive::Snr(s) if s.is_nan() || s == f64::NEG_INFINITY => return invalid("SNR must be a number or +inf"),
            Drive::Distance { distance_m, azimuth_deg }
                if !(distance_m > 0.0 && distance_m.is_finite() && azimuth_deg.is_finite()) =>
            {
                return invalid("distance must be positive and azimuth finite")
            }
            _ => {}
        }
        let finite =
            [self.cfo_hz, self.phase_rad, self.timing_offset_samples, self.clock_offset_ppm, self.noise_floor_dbfs];
        if finite.iter().any(|v| !v.is_finite()) {
            return invalid("channel offsets and noise floor must be finite");
        }
        if self.timing_offset_samples < 0.0 {
            return invalid("timing offset must be non-negative");
        }
        if self.clock_offset_ppm.abs() >= 1e5 {
            return invalid("clock offset beyond 10%");
        }
        Ok(())
    }

    /// Target SNR in dB implied by the drive mode.
    pub fn target_snr_db(&self, budget: &LinkBudget, pattern: &AntennaPattern) -> Result<f64> {
        match self.drive {
            Drive::Snr(s) => Ok(s),
            Drive::Distance { distance_m, azimuth_deg } => rx_snr_db(budget, pattern, distance_m, azimuth_deg),
        }
    }
}

const SINC_HALF_WIDTH: isize = 16;

fn windowed_sinc(u: f64) -> f64 {
    let k = SINC_HALF_WIDTH as f64;
    if u.abs() >= k {
        return 0.0;
    }
    let sinc = if u == 0.0 { 1.0 } else { (PI * u).sin() / (PI * u) };
    // Blackman
    let w = 0.42 + 0.5 * (PI * u / k).cos() + 0.08 * (2.0 * PI * u / k).cos();
    sinc * w
}

/// Samples `x` at fractional positions `n * rate - delay`, zero outside.
fn resample(x: &[Complex64], delay: f64, rate: f64) -> Vec<Complex64> {
    if x.is_empty() {
        return Vec::new();
    }
    if delay == 0.0 && rate == 1.0 {
        return x.to_vec();
    }
    let out_len = (((x.len() - 1) as f64 + delay) / rate).floor() as usize + 1;
    (0..out_len)
        .map(|n| {
            let t = n as f64 * rate - delay;
            let base = t.floor();
            let frac = t - base;
            let base = base as isize;
            if frac == 0.0 {
                return usize::try_from(base).ok().and_then(|i| x.get(i).copied()).unwrap_or_default();
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for k in -SINC_HALF_WIDTH + 1..=SINC_HALF_WIDTH {
                let i = base + k;
                if i >= 0 && (i as usize) < x.len() {
                    acc += x[i as usize] * windowed_sinc(k as f64 - frac);
                }
            }
            acc
        })
        .collect()
}

/// Mean power between the first and last non-zero sample, so silent
/// padding around a burst does not dilute the signal level.
pub fn active_power(x: &[Complex64]) -> f64 {
    let first = x.iter().position(|s| s.norm_sqr() > 0.0);
    let last = x.iter().rposition(|s| s.norm_sqr() > 0.0);
    match (first, last) {
        (Some(a), Some(b)) => x[a..=b].iter().map(|s| s.norm_sqr()).sum::<f64>() / (b - a + 1) as f64,
        _ => 0.0,
    }
}

/// Applies, in order: fractional delay and clock offset, carrier offset and
/// phase, amplitude scaling to the target SNR, then AWGN.
///
/// Noise power per sample is fixed at `noise_floor_dbfs`; the signal is
/// scaled so that its power over the noise bandwidth share of that noise
/// gives the target SNR. With an infinite SNR the signal is left unscaled
/// and no noise is added.
pub fn apply_channel(
    iq: &IqBuffer,
    params: &ChannelParams,
    budget: &LinkBudget,
    pattern: &AntennaPattern,
) -> Result<IqBuffer> {
    params.validate()?;
    budget.validate()?;
    pattern.validate()?;
    let fs = iq.sample_rate();
    if budget.noise_bandwidth_hz > fs {
        return invalid("noise bandwidth exceeds the sample rate");
    }
    let snr_db = params.target_snr_db(budget, pattern)?;

    let rate = 1.0 + params.clock_offset_ppm * 1e-6;
    let mut y = resample(iq.samples(), params.timing_offset_samples, rate);

    if params.cfo_hz != 0.0 || params.phase_rad != 0.0 {
        let w = 2.0 * PI * params.cfo_hz / fs;
        for (n, s) in y.iter_mut().enumerate() {
            *s *= Complex64::from_polar(1.0, w * n as f64 + params.phase_rad);
        }
    }

    if snr_db.is_finite() {
        let noise_power = 10f64.powf(params.noise_floor_dbfs / 10.0);
        let in_band_noise = noise_power * budget.noise_bandwidth_hz / fs;
        let target = in_band_noise * 10f64.powf(snr_db / 10.0);
        let current = active_power(iq.samples());
        let gain = if current > 0.0 { (target / current).sqrt() } else { 0.0 };
        let normal = Normal::new(0.0, (noise_power / 2.0).sqrt()).expect("finite sigma");
        let mut rng = crate::seed::rng(params.rng_seed, 0x6177_676e);
        for s in y.iter_mut() {
            *s = *s * gain + Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
        }
    }
    IqBuffer::new(y, fs)
}

/// Noise-only buffer at the given floor; what a receiver hears with no tag.
pub fn noise_only(len: usize, sample_rate: f64, noise_floor_dbfs: f64, seed: u64) -> Result<IqBuffer> {
    let normal = Normal::new(0.0, (10f64.powf(noise_floor_dbfs / 10.0) / 2.0).sqrt())
        .map_err(|e| crate::Error::InvalidArgument(e.to_string()))?;
    let mut rng = crate::seed::rng(seed, 0x6e6f_6973);
    let s = (0..len).map(|_| Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng))).collect();
    IqBuffer::new(s, sample_rate)
}
