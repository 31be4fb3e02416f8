use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::modem::IqBuffer;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SquelchParams {
    /// Gate threshold on smoothed power, dB relative to full scale.
    pub threshold_db: f64,
    pub averaging_alpha: f64,
    /// Samples kept open after the last above-threshold sample.
    pub hang_samples: usize,
}

impl Default for SquelchParams {
    fn default() -> Self {
        Self { threshold_db: -40.0, averaging_alpha: 0.01, hang_samples: 4096 }
    }
}

impl SquelchParams {
    pub fn validate(&self) -> Result<()> {
        if !self.threshold_db.is_finite() {
            return invalid("squelch threshold must be finite");
        }
        if !(self.averaging_alpha > 0.0 && self.averaging_alpha <= 1.0) {
            return invalid(format!("squelch alpha {} outside (0, 1]", self.averaging_alpha));
        }
        Ok(())
    }
}

/// Power squelch that compacts the stream: gated samples are dropped, and
/// each time the gate opens a `(output index, input index)` mark is emitted
/// so positions in the compacted stream can be mapped back.
#[derive(Debug, Clone)]
pub struct PowerSquelch {
    alpha: f64,
    threshold: f64,
    hang: usize,
    power: f64,
    hang_left: usize,
    open: bool,
    consumed: u64,
    produced: u64,
}

impl PowerSquelch {
    pub fn new(params: &SquelchParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            alpha: params.averaging_alpha,
            threshold: 10f64.powf(params.threshold_db / 10.0),
            hang: params.hang_samples,
            power: 0.0,
            hang_left: 0,
            open: false,
            consumed: 0,
            produced: 0,
        })
    }

    pub fn process(&mut self, input: &[Complex64], out: &mut Vec<Complex64>, marks: &mut Vec<(u64, u64)>) {
        for &x in input {
            self.power = (1.0 - self.alpha) * self.power + self.alpha * x.norm_sqr();
            let pass = if self.power >= self.threshold {
                self.hang_left = self.hang;
                true
            } else if self.hang_left > 0 {
                self.hang_left -= 1;
                true
            } else {
                false
            };
            if pass {
                if !self.open {
                    marks.push((self.produced, self.consumed));
                }
                out.push(x);
                self.produced += 1;
            }
            self.open = pass;
            self.consumed += 1;
        }
    }
}

/// Gated output plus the segment marks needed to map back to input time.
#[derive(Debug, Clone, PartialEq)]
pub struct SquelchOutput {
    pub iq: IqBuffer,
    /// `(output index, input index)` at the start of every passed run.
    pub segments: Vec<(u64, u64)>,
}

impl SquelchOutput {
    pub fn input_index(&self, output_index: u64) -> Option<u64> {
        map_to_input(&self.segments, output_index)
    }
}

pub(crate) fn map_to_input<'a>(segments: impl IntoIterator<Item = &'a (u64, u64)>, output_index: u64) -> Option<u64> {
    segments.into_iter().take_while(|(out, _)| *out <= output_index).last().map(|(out, inp)| inp + (output_index - out))
}

pub fn power_squelch(iq: &IqBuffer, params: &SquelchParams) -> Result<SquelchOutput> {
    let mut sq = PowerSquelch::new(params)?;
    let mut out = Vec::new();
    let mut segments = Vec::new();
    sq.process(iq.samples(), &mut out, &mut segments);
    Ok(SquelchOutput { iq: IqBuffer::new(out, iq.sample_rate())?, segments })
}
