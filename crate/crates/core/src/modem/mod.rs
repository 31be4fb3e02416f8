//! GMSK baseband modem.
//!
//! The transmit side is a Gaussian-filtered NRZ frequency modulator; the
//! receive side is a quadrature discriminator followed by running-mean DC
//! removal (carrier offset shows up as DC), Mueller and Muller timing
//! recovery, and a sign slicer.

mod demod;
mod modulate;
mod timing;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use demod::{quadrature_demod, remove_dc, slice, Boxcar, DcBlocker, QuadratureDemod};
pub use modulate::{gaussian_taps, gmsk_modulate, modulate_burst, BurstLayout};
pub use timing::{mm_timing_recovery, MuellerMuller};

/// Complex baseband samples at a known sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct IqBuffer {
    samples: Vec<Complex64>,
    sample_rate: f64,
}

impl IqBuffer {
    pub fn new(samples: Vec<Complex64>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return invalid(format!("sample rate {sample_rate} must be positive and finite"));
        }
        if let Some(i) = samples.iter().position(|s| !(s.re.is_finite() && s.im.is_finite())) {
            return invalid(format!("non-finite sample at index {i}"));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn empty(sample_rate: f64) -> Result<Self> {
        Self::new(Vec::new(), sample_rate)
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean |x|^2, or 0 for an empty buffer.
    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmskParams {
    pub samples_per_symbol: usize,
    pub bt: f64,
    pub modulation_index: f64,
    pub gaussian_span_symbols: usize,
}

impl Default for GmskParams {
    fn default() -> Self {
        Self { samples_per_symbol: 4, bt: 0.5, modulation_index: 0.5, gaussian_span_symbols: 4 }
    }
}

impl GmskParams {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_symbol < 2 {
            return invalid("samples_per_symbol must be at least 2");
        }
        if !(self.bt > 0.0 && self.bt <= 1.0) {
            return invalid(format!("BT {} outside (0, 1]", self.bt));
        }
        if !(0.25..=1.0).contains(&self.modulation_index) {
            return invalid(format!("modulation index {} outside [0.25, 1]", self.modulation_index));
        }
        if self.gaussian_span_symbols == 0 {
            return invalid("Gaussian span must be at least one symbol");
        }
        Ok(())
    }

    /// Sample rate implied by the 1 Msym/s BLE symbol rate.
    pub fn sample_rate(&self) -> f64 {
        crate::SYMBOL_RATE_HZ * self.samples_per_symbol as f64
    }

    /// Peak frequency deviation in Hz: h * Rs / 2.
    pub fn deviation_hz(&self) -> f64 {
        self.modulation_index * crate::SYMBOL_RATE_HZ / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimingRecoveryParams {
    pub gain_mu: f64,
    pub omega: f64,
    pub omega_relative_limit: f64,
    /// Loop gain on omega; `0.25 * gain_mu^2` by default.
    pub gain_omega: f64,
    /// Initial fractional sampling phase in [0, 1).
    pub mu: f64,
}

impl Default for TimingRecoveryParams {
    fn default() -> Self {
        let gain_mu = 0.55;
        Self { gain_mu, omega: 4.0, omega_relative_limit: 0.005, gain_omega: 0.25 * gain_mu * gain_mu, mu: 0.5 }
    }
}

impl TimingRecoveryParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gain_mu > 0.0 && self.gain_mu < 1.0) {
            return invalid(format!("gain_mu {} outside (0, 1)", self.gain_mu));
        }
        if !(self.omega > 1.0) {
            return invalid(format!("omega {} must exceed 1", self.omega));
        }
        if !(self.omega_relative_limit >= 0.0 && self.gain_omega >= 0.0) {
            return invalid("omega limit and gain must be non-negative");
        }
        if !(0.0..1.0).contains(&self.mu) {
            return invalid(format!("initial mu {} outside [0, 1)", self.mu));
        }
        Ok(())
    }
}
