use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::modem::IqBuffer;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct XlatingFirParams {
    /// Frequency moved to 0 Hz.
    pub center_offset_hz: f64,
    /// Low-pass cutoff (6 dB point, centre of the transition band).
    pub cutoff_hz: f64,
    pub transition_hz: f64,
    pub decimation: usize,
}

impl Default for XlatingFirParams {
    fn default() -> Self {
        Self { center_offset_hz: 1.0e6, cutoff_hz: 750e3, transition_hz: 250e3, decimation: 1 }
    }
}

impl XlatingFirParams {
    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        if !(self.cutoff_hz > 0.0 && self.transition_hz > 0.0) {
            return invalid("cutoff and transition must be positive");
        }
        if self.cutoff_hz + self.transition_hz >= sample_rate / 2.0 {
            return invalid(format!(
                "cutoff {} + transition {} reaches Nyquist at {} S/s",
                self.cutoff_hz, self.transition_hz, sample_rate
            ));
        }
        if self.decimation == 0 {
            return invalid("decimation must be at least 1");
        }
        if !self.center_offset_hz.is_finite() || self.center_offset_hz.abs() >= sample_rate / 2.0 {
            return invalid("centre offset outside the sampled band");
        }
        Ok(())
    }
}

/// Hamming-windowed sinc low-pass, odd length `~3.3 fs / transition`, unit DC gain.
pub fn lowpass_taps(sample_rate: f64, cutoff_hz: f64, transition_hz: f64) -> Vec<f64> {
    let mut n = (3.3 * sample_rate / transition_hz).ceil() as usize;
    if n.is_multiple_of(2) {
        n += 1;
    }
    let mid = (n - 1) as f64 / 2.0;
    let fc = cutoff_hz / sample_rate;
    let mut taps: Vec<f64> = (0..n)
        .map(|i| {
            let m = i as f64 - mid;
            let ideal = if m == 0.0 { 2.0 * fc } else { (2.0 * PI * fc * m).sin() / (PI * m) };
            let w = 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos();
            ideal * w
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Mixer, low-pass FIR and decimator in one streaming block.
#[derive(Debug, Clone)]
pub struct XlatingFir {
    taps: Vec<f64>,
    decimation: usize,
    rotator: Complex64,
    phasor: Complex64,
    history: Vec<Complex64>,
    /// input samples until the next output
    skip: usize,
    since_renorm: usize,
}

impl XlatingFir {
    pub fn new(params: &XlatingFirParams, sample_rate: f64) -> Result<Self> {
        params.validate(sample_rate)?;
        let taps = lowpass_taps(sample_rate, params.cutoff_hz, params.transition_hz);
        Ok(Self {
            history: vec![Complex64::new(0.0, 0.0); taps.len() - 1],
            taps,
            decimation: params.decimation,
            rotator: Complex64::from_polar(1.0, -2.0 * PI * params.center_offset_hz / sample_rate),
            phasor: Complex64::new(1.0, 0.0),
            skip: 0,
            since_renorm: 0,
        })
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Group delay in input samples.
    pub fn group_delay(&self) -> usize {
        (self.taps.len() - 1) / 2
    }

    pub fn process(&mut self, input: &[Complex64], out: &mut Vec<Complex64>) {
        let n_hist = self.taps.len() - 1;
        let mut buf = std::mem::take(&mut self.history);
        buf.reserve(input.len());
        for &x in input {
            buf.push(x * self.phasor);
            self.phasor *= self.rotator;
            self.since_renorm += 1;
            if self.since_renorm == 1024 {
                self.phasor /= self.phasor.norm();
                self.since_renorm = 0;
            }
        }
        let mut i = n_hist;
        while i < buf.len() {
            if self.skip == 0 {
                let window = &buf[i - n_hist..=i];
                // taps are symmetric, so convolution equals correlation
                let acc = window.iter().zip(&self.taps).fold(Complex64::new(0.0, 0.0), |acc, (s, t)| acc + s * t);
                out.push(acc);
                self.skip = self.decimation;
            }
            self.skip -= 1;
            i += 1;
        }
        let keep = buf.len() - n_hist;
        buf.drain(..keep);
        self.history = buf;
    }
}

pub fn xlating_fir(iq: &IqBuffer, params: &XlatingFirParams) -> Result<IqBuffer> {
    let mut fir = XlatingFir::new(params, iq.sample_rate())?;
    let mut out = Vec::with_capacity(iq.len() / params.decimation + 1);
    fir.process(iq.samples(), &mut out);
    IqBuffer::new(out, iq.sample_rate() / params.decimation as f64)
}
