use std::collections::VecDeque;
use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::pncode::BitSequence;

use super::{GmskParams, IqBuffer};

/// Streaming FM discriminator scaled so the nominal deviation maps to 1.0.
#[derive(Debug, Clone)]
pub struct QuadratureDemod {
    gain: f64,
    prev: Option<Complex64>,
}

impl QuadratureDemod {
    pub fn new(params: &GmskParams) -> Result<Self> {
        params.validate()?;
        // deviation h*Rs/2 per sample is pi*h/sps radians
        let gain = params.samples_per_symbol as f64 / (PI * params.modulation_index);
        Ok(Self { gain, prev: None })
    }

    pub fn process(&mut self, input: &[Complex64], out: &mut Vec<f64>) {
        for &x in input {
            if let Some(p) = self.prev {
                out.push((x * p.conj()).arg() * self.gain);
            }
            self.prev = Some(x);
        }
    }

    pub fn reset(&mut self) {
        self.prev = None;
    }
}

/// Instantaneous frequency in units of the nominal deviation; one value
/// fewer than the input.
pub fn quadrature_demod(iq: &IqBuffer, params: &GmskParams) -> Result<Vec<f64>> {
    let mut d = QuadratureDemod::new(params)?;
    let mut out = Vec::with_capacity(iq.len().saturating_sub(1));
    d.process(iq.samples(), &mut out);
    Ok(out)
}

/// Subtracts the mean of the trailing `window` inputs (fewer at start-up).
/// Inputs enter the mean clipped to +/-[`DcBlocker::CLIP`], so discriminator
/// spikes from low-amplitude samples cannot bias the estimate for a whole window.
#[derive(Debug, Clone)]
pub struct DcBlocker {
    window: usize,
    history: VecDeque<f64>,
    sum: f64,
    since_resum: usize,
}

impl DcBlocker {
    pub const MIN_WINDOW: usize = 16;
    /// A valid GMSK signal never exceeds 1 plus the carrier offset.
    pub const CLIP: f64 = 1.5;

    pub fn new(window: usize) -> Result<Self> {
        if window < Self::MIN_WINDOW {
            return invalid(format!("DC window {window} below {}", Self::MIN_WINDOW));
        }
        Ok(Self { window, history: VecDeque::with_capacity(window), sum: 0.0, since_resum: 0 })
    }

    pub fn process(&mut self, input: &[f64], out: &mut Vec<f64>) {
        for &x in input {
            if self.history.len() == self.window {
                self.sum -= self.history.pop_front().unwrap_or(0.0);
            }
            let c = x.clamp(-Self::CLIP, Self::CLIP);
            self.history.push_back(c);
            self.sum += c;
            self.since_resum += 1;
            if self.since_resum >= 1 << 16 {
                // bound floating-point drift of the running sum
                self.sum = self.history.iter().sum();
                self.since_resum = 0;
            }
            out.push(x - self.sum / self.history.len() as f64);
        }
    }
}

pub fn remove_dc(soft: &[f64], window: usize) -> Result<Vec<f64>> {
    let mut dc = DcBlocker::new(window)?;
    let mut out = Vec::with_capacity(soft.len());
    dc.process(soft, &mut out);
    Ok(out)
}

/// Moving average over the trailing `len` inputs. Run over one symbol after
/// the discriminator it acts as an integrate-and-dump without the dump,
/// cutting discriminator noise before timing recovery.
#[derive(Debug, Clone)]
pub struct Boxcar {
    history: VecDeque<f64>,
    len: usize,
    sum: f64,
}

impl Boxcar {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 {
            return invalid("boxcar length must be at least 1");
        }
        Ok(Self { history: VecDeque::with_capacity(len), len, sum: 0.0 })
    }

    pub fn process(&mut self, input: &[f64], out: &mut Vec<f64>) {
        if self.len == 1 {
            out.extend_from_slice(input);
            return;
        }
        for &x in input {
            if self.history.len() == self.len {
                self.sum -= self.history.pop_front().unwrap_or(0.0);
            }
            self.history.push_back(x);
            // recomputed rather than running, so rounding cannot accumulate
            self.sum = self.history.iter().sum();
            out.push(self.sum / self.len as f64);
        }
    }
}

/// Sign slicer: values >= 0 become 1.
pub fn slice(soft: &[f64]) -> BitSequence {
    BitSequence::from_bools(soft.iter().map(|&v| v >= 0.0))
}
