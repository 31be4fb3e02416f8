use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::pncode::BitSequence;

use super::{GmskParams, IqBuffer};

/// Gaussian frequency-pulse filter, `span * sps + 1` taps, unit DC gain.
pub fn gaussian_taps(params: &GmskParams) -> Vec<f64> {
    let sps = params.samples_per_symbol as f64;
    let n = params.gaussian_span_symbols * params.samples_per_symbol + 1;
    let half = (n - 1) as f64 / 2.0;
    // time in symbols; sigma from the 3 dB bandwidth B = BT / T
    let sigma = (2f64.ln()).sqrt() / (2.0 * PI * params.bt);
    let mut taps: Vec<f64> = (0..n)
        .map(|i| {
            let t = (i as f64 - half) / sps;
            (-t * t / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Phase-continuous FM of per-symbol frequency levels (+1, -1, or 0 for an
/// unmodulated carrier). Output length is `levels * sps + taps - 1`.
fn modulate_levels(levels: &[f64], params: &GmskParams) -> Vec<Complex64> {
    let sps = params.samples_per_symbol;
    let taps = gaussian_taps(params);
    let nrz: Vec<f64> = levels.iter().flat_map(|&l| std::iter::repeat_n(l, sps)).collect();
    let out_len = nrz.len() + taps.len() - 1;
    let step = PI * params.modulation_index / sps as f64;

    let mut phase = 0.0f64;
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len {
        let lo = n.saturating_sub(taps.len() - 1);
        let hi = n.min(nrz.len() - 1);
        let freq: f64 = (lo..=hi).map(|k| nrz[k] * taps[n - k]).sum();
        phase += step * freq;
        if phase > PI {
            phase -= 2.0 * PI;
        } else if phase < -PI {
            phase += 2.0 * PI;
        }
        out.push(Complex64::from_polar(1.0, phase));
    }
    out
}

fn check_rate(params: &GmskParams, sample_rate: f64) -> Result<()> {
    params.validate()?;
    let want = params.sample_rate();
    if (sample_rate - want).abs() > 1e-9 * want {
        return invalid(format!(
            "sample rate {sample_rate} inconsistent with {} samples/symbol at 1 Msym/s",
            params.samples_per_symbol
        ));
    }
    Ok(())
}

/// GMSK baseband for `bits` (0 -> -deviation, 1 -> +deviation), unit amplitude.
pub fn gmsk_modulate(bits: &BitSequence, params: &GmskParams, sample_rate: f64) -> Result<IqBuffer> {
    check_rate(params, sample_rate)?;
    if bits.is_empty() {
        return invalid("nothing to modulate");
    }
    let levels: Vec<f64> = bits.iter().map(|b| if b == 1 { 1.0 } else { -1.0 }).collect();
    IqBuffer::new(modulate_levels(&levels, params), sample_rate)
}

/// Where the data sits inside a burst produced by [`modulate_burst`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BurstLayout {
    /// First sample of the first data symbol, filter delay included.
    pub data_start: usize,
    pub data_symbols: usize,
    pub total_samples: usize,
}

/// A transmitted burst: unmodulated carrier ramp, GMSK data, carrier tail,
/// mixed up to `center_offset_hz` within the sample band.
pub fn modulate_burst(
    bits: &BitSequence,
    params: &GmskParams,
    sample_rate: f64,
    center_offset_hz: f64,
    lead_in_symbols: usize,
    lead_out_symbols: usize,
) -> Result<(IqBuffer, BurstLayout)> {
    check_rate(params, sample_rate)?;
    if bits.is_empty() {
        return invalid("nothing to modulate");
    }
    if !(center_offset_hz.abs() < sample_rate / 2.0) {
        return invalid(format!("offset {center_offset_hz} Hz outside the sampled band"));
    }
    let mut levels = vec![0.0; lead_in_symbols];
    levels.extend(bits.iter().map(|b| if b == 1 { 1.0 } else { -1.0 }));
    levels.extend(std::iter::repeat_n(0.0, lead_out_symbols));
    let mut samples = modulate_levels(&levels, params);

    let w = 2.0 * PI * center_offset_hz / sample_rate;
    for (n, s) in samples.iter_mut().enumerate() {
        *s *= Complex64::from_polar(1.0, w * n as f64);
    }
    let sps = params.samples_per_symbol;
    let layout = BurstLayout {
        data_start: lead_in_symbols * sps + params.gaussian_span_symbols * sps / 2,
        data_symbols: bits.len(),
        total_samples: samples.len(),
    };
    Ok((IqBuffer::new(samples, sample_rate)?, layout))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::FftPlanner;

    fn alternating(n: usize) -> BitSequence {
        BitSequence::from_bools((0..n).map(|i| i % 2 == 1))
    }

    #[test]
    fn taps_have_unit_gain_and_symmetry() {
        let taps = gaussian_taps(&GmskParams::default());
        assert_eq!(taps.len(), 17);
        assert!((taps.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..taps.len() {
            assert!((taps[i] - taps[taps.len() - 1 - i]).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_envelope_and_length() {
        let p = GmskParams::default();
        let iq = gmsk_modulate(&alternating(64), &p, 4e6).unwrap();
        assert_eq!(iq.len(), 64 * 4 + 16);
        for s in iq.samples() {
            assert!((s.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn all_ones_advance_quarter_turn_per_symbol() {
        let p = GmskParams::default();
        let bits = BitSequence::new(vec![1; 40]).unwrap();
        let iq = gmsk_modulate(&bits, &p, 4e6).unwrap();
        // unwrapped phase over 20 settled symbols
        let s = iq.samples();
        let mut total = 0.0;
        for n in 60..140 {
            total += (s[n + 1] * s[n].conj()).arg();
        }
        let per_symbol = total / 20.0;
        assert!((per_symbol - PI / 2.0).abs() < 1e-9, "{per_symbol}");
    }

    fn strongest_line_hz(iq: &IqBuffer, n: usize) -> (f64, f64) {
        let mut buf: Vec<rustfft::num_complex::Complex<f64>> =
            iq.samples()[..n].iter().map(|s| rustfft::num_complex::Complex::new(s.re, s.im)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let total: f64 = buf.iter().map(|b| b.norm_sqr()).sum();
        let peak = (0..n).max_by(|&a, &b| buf[a].norm().total_cmp(&buf[b].norm())).unwrap();
        let f = if peak > n / 2 { peak as f64 - n as f64 } else { peak as f64 } * 4e6 / n as f64;
        (f, buf[peak].norm_sqr() / total)
    }

    #[test]
    fn runs_sit_at_plus_minus_deviation() {
        let p = GmskParams::default();
        let ones = gmsk_modulate(&BitSequence::new(vec![1; 300]).unwrap(), &p, 4e6).unwrap();
        let (f, _) = strongest_line_hz(&ones, 1024);
        assert_eq!(f, 250e3);
        let zeros = gmsk_modulate(&BitSequence::zeros(300), &p, 4e6).unwrap();
        assert_eq!(strongest_line_hz(&zeros, 1024).0, -250e3);
    }

    #[test]
    fn alternating_bits_have_no_net_rotation() {
        // Frequency swings +/- each symbol, so phase oscillates around a fixed
        // point: the carrier line at 0 Hz dominates, with sidebands at 500 kHz.
        let iq = gmsk_modulate(&alternating(256), &GmskParams::default(), 4e6).unwrap();
        let (f, frac) = strongest_line_hz(&iq, 1024);
        assert_eq!(f, 0.0);
        assert!(frac > 0.8, "{frac}");
        let soft = crate::modem::quadrature_demod(&iq, &GmskParams::default()).unwrap();
        // discriminator sign follows the bits at symbol centres
        for k in 4..250 {
            let centre = k * 4 + 8 + 1;
            assert_eq!(soft[centre] >= 0.0, k % 2 == 1, "symbol {k}");
        }
    }

    #[test]
    fn spectral_containment_99_percent_within_600khz() {
        use rand::Rng;
        let mut rng = crate::seed::rng(11, 0);
        let bits = BitSequence::from_bools((0..4096).map(|_| rng.random::<bool>()));
        let iq = gmsk_modulate(&bits, &GmskParams::default(), 4e6).unwrap();
        let n = 256;
        let mut psd = vec![0.0; n];
        let fft = FftPlanner::new().plan_fft_forward(n);
        for seg in iq.samples().chunks_exact(n) {
            // Hann-windowed periodogram average
            let mut buf: Vec<rustfft::num_complex::Complex<f64>> = seg
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let w = 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos();
                    rustfft::num_complex::Complex::new(s.re * w, s.im * w)
                })
                .collect();
            fft.process(&mut buf);
            for (p, b) in psd.iter_mut().zip(&buf) {
                *p += b.norm_sqr();
            }
        }
        let total: f64 = psd.iter().sum();
        let inside: f64 = (0..n)
            .filter(|&k| {
                let f = if k > n / 2 { k as f64 - n as f64 } else { k as f64 } * 4e6 / n as f64;
                f.abs() <= 600e3
            })
            .map(|k| psd[k])
            .sum();
        assert!(inside / total >= 0.99, "in-band fraction {}", inside / total);
    }

    #[test]
    fn rejects_empty_and_bad_rate() {
        let p = GmskParams::default();
        assert!(gmsk_modulate(&BitSequence::default(), &p, 4e6).is_err());
        assert!(gmsk_modulate(&alternating(8), &p, 2e6).is_err());
    }

    #[test]
    fn burst_layout() {
        let p = GmskParams::default();
        let (iq, layout) = modulate_burst(&alternating(280), &p, 4e6, 1e6, 16, 8).unwrap();
        assert_eq!(layout.total_samples, iq.len());
        assert_eq!(iq.len(), (16 + 280 + 8) * 4 + 16);
        assert_eq!(layout.data_start, 16 * 4 + 8);
        assert!(iq.samples().iter().all(|s| (s.norm() - 1.0).abs() < 1e-12));
        assert!(modulate_burst(&alternating(8), &p, 4e6, 2.5e6, 0, 0).is_err());
    }
}
