//! File formats: headerless little-endian complex float32 IQ with a JSON
//! sidecar, codebook JSON, and atomic writes.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::modem::IqBuffer;
use crate::pncode::Codebook;

const BYTES_PER_SAMPLE: usize = 8;

/// Metadata stored next to an IQ file as `<file>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarMeta {
    pub sample_rate_hz: f64,
    pub center_freq_hz: f64,
    pub description: String,
    /// Channel SNR the capture was synthesized at, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
}

impl SidecarMeta {
    pub fn new(sample_rate_hz: f64, center_freq_hz: f64, description: impl Into<String>) -> Self {
        Self { sample_rate_hz, center_freq_hz, description: description.into(), snr_db: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return invalid(format!("sidecar sample rate {} must be positive", self.sample_rate_hz));
        }
        if !self.center_freq_hz.is_finite() {
            return invalid("sidecar centre frequency must be finite");
        }
        Ok(())
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes `bytes` to a temporary file in the target directory, then renames
/// it into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Interleaved I/Q as little-endian f32.
pub fn encode_iq(samples: &[Complex64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(samples.len() * BYTES_PER_SAMPLE);
    for s in samples {
        out.extend_from_slice(&(s.re as f32).to_le_bytes());
        out.extend_from_slice(&(s.im as f32).to_le_bytes());
    }
    out
}

pub fn decode_iq(bytes: &[u8]) -> Result<Vec<Complex64>> {
    if !bytes.len().is_multiple_of(BYTES_PER_SAMPLE) {
        return Err(Error::CorruptFile(format!(
            "{} bytes is not a whole number of complex float32 samples",
            bytes.len()
        )));
    }
    bytes
        .chunks_exact(BYTES_PER_SAMPLE)
        .enumerate()
        .map(|(i, c)| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            if !(re.is_finite() && im.is_finite()) {
                return Err(Error::CorruptFile(format!("non-finite sample at index {i}")));
            }
            Ok(Complex64::new(re.into(), im.into()))
        })
        .collect()
}

/// Writes the raw IQ file and its sidecar, both atomically.
pub fn write_iq(path: &Path, iq: &IqBuffer, meta: &SidecarMeta) -> Result<()> {
    meta.validate()?;
    if (meta.sample_rate_hz - iq.sample_rate()).abs() > 1e-9 * iq.sample_rate() {
        return invalid(format!(
            "sidecar says {} S/s but the buffer is at {} S/s",
            meta.sample_rate_hz,
            iq.sample_rate()
        ));
    }
    let range = f32::MAX as f64;
    if iq.samples().iter().any(|s| s.re.abs() > range || s.im.abs() > range) {
        return invalid("sample magnitude exceeds float32 range");
    }
    write_atomic(path, &encode_iq(iq.samples()))?;
    let json = serde_json::to_string_pretty(meta)? + "\n";
    write_atomic(&sidecar_path(path), json.as_bytes())
}

pub fn read_sidecar(path: &Path) -> Result<SidecarMeta> {
    let text = std::fs::read_to_string(sidecar_path(path))?;
    let meta: SidecarMeta = serde_json::from_str(&text)?;
    meta.validate()?;
    Ok(meta)
}

/// Reads a raw IQ file. Without an explicit rate the sidecar supplies it.
pub fn read_iq(path: &Path, sample_rate: Option<f64>) -> Result<IqBuffer> {
    let rate = match sample_rate {
        Some(r) => r,
        None => read_sidecar(path)?.sample_rate_hz,
    };
    let bytes = std::fs::read(path)?;
    IqBuffer::new(decode_iq(&bytes)?, rate)
}

/// Block-wise reader for captures too large to hold at once.
#[derive(Debug)]
pub struct IqReader {
    inner: BufReader<File>,
    remaining: u64,
    sample_rate: f64,
    index: u64,
}

impl IqReader {
    pub fn open(path: &Path, sample_rate: f64) -> Result<Self> {
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return invalid(format!("sample rate {sample_rate} must be positive"));
        }
        let file = File::open(path)?;
        let len = file.metadata()?.len();
        if len % BYTES_PER_SAMPLE as u64 != 0 {
            return Err(Error::CorruptFile(format!("{len} bytes is not a whole number of complex float32 samples")));
        }
        Ok(Self { inner: BufReader::new(file), remaining: len, sample_rate, index: 0 })
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    /// Next block of at most `max_samples`; `None` at end of file.
    pub fn read_block(&mut self, max_samples: usize) -> Result<Option<Vec<Complex64>>> {
        if self.remaining == 0 {
            return Ok(None);
        }
        let n = (max_samples.max(1) as u64).min(self.remaining / BYTES_PER_SAMPLE as u64) as usize;
        let mut buf = vec![0u8; n * BYTES_PER_SAMPLE];
        self.inner.read_exact(&mut buf)?;
        self.remaining -= buf.len() as u64;
        let block = decode_iq(&buf).map_err(|e| match e {
            Error::CorruptFile(m) => Error::CorruptFile(format!("{m} (block at sample {})", self.index)),
            other => other,
        })?;
        self.index += n as u64;
        Ok(Some(block))
    }
}

pub fn save_codebook(path: &Path, codebook: &Codebook) -> Result<()> {
    write_atomic(path, codebook.to_json()?.as_bytes())
}

pub fn load_codebook(path: &Path) -> Result<Codebook> {
    Codebook::from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_iq(n: usize, seed: u64) -> IqBuffer {
        let mut rng = crate::seed::rng(seed, 0);
        // values exactly representable in f32 so the round trip is exact
        let s = (0..n)
            .map(|_| Complex64::new(rng.random::<f32>() as f64 - 0.5, rng.random::<f32>() as f64 - 0.5))
            .collect();
        IqBuffer::new(s, 4e6).unwrap()
    }

    #[test]
    fn golden_bytes() {
        assert_eq!(encode_iq(&[Complex64::new(1.0, 0.0)]), vec![0x00, 0x00, 0x80, 0x3f, 0, 0, 0, 0]);
        assert_eq!(
            decode_iq(&[0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0xc0]).unwrap(),
            vec![Complex64::new(1.0, -2.0)]
        );
    }

    #[test]
    fn round_trip_large_buffer() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cap.cf32");
        let iq = random_iq(100_000, 1);
        write_iq(&path, &iq, &SidecarMeta::new(4e6, 2.48e9, "test")).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 800_000);
        assert_eq!(read_iq(&path, None).unwrap(), iq);
        assert_eq!(read_sidecar(&path).unwrap().description, "test");
    }

    #[test]
    fn odd_length_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.cf32");
        std::fs::write(&path, [0u8; 12]).unwrap();
        assert!(matches!(read_iq(&path, Some(4e6)), Err(Error::CorruptFile(_))));
        assert!(matches!(IqReader::open(&path, 4e6), Err(Error::CorruptFile(_))));
        let mut nan = 1.0f32.to_le_bytes().to_vec();
        nan.extend_from_slice(&f32::NAN.to_le_bytes());
        std::fs::write(&path, nan).unwrap();
        assert!(matches!(read_iq(&path, Some(4e6)), Err(Error::CorruptFile(_))));
    }

    #[test]
    fn missing_sidecar_needs_rate() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw.cf32");
        std::fs::write(&path, encode_iq(&[Complex64::new(0.5, 0.25)])).unwrap();
        assert!(read_iq(&path, None).is_err());
        assert_eq!(read_iq(&path, Some(2e6)).unwrap().len(), 1);
    }

    #[test]
    fn sidecar_rate_must_match() {
        let dir = tempfile::tempdir().unwrap();
        let iq = random_iq(10, 2);
        let path = dir.path().join("x.cf32");
        assert!(write_iq(&path, &iq, &SidecarMeta::new(2e6, 0.0, "")).is_err());
        assert!(!path.exists());
        let meta = SidecarMeta { snr_db: Some(38.7), ..SidecarMeta::new(4e6, 0.0, "") };
        write_iq(&path, &iq, &meta).unwrap();
        assert_eq!(read_sidecar(&path).unwrap(), meta);
    }

    #[test]
    fn block_reads_concatenate() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.cf32");
        let iq = random_iq(10_007, 3);
        write_iq(&path, &iq, &SidecarMeta::new(4e6, 0.0, "")).unwrap();
        let mut r = IqReader::open(&path, 4e6).unwrap();
        let mut all = Vec::new();
        while let Some(b) = r.read_block(1000).unwrap() {
            assert!(b.len() <= 1000);
            all.extend(b);
        }
        assert_eq!(all, iq.samples());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn encode_decode_inverse(v in proptest::collection::vec((-1e6f32..1e6, -1e6f32..1e6), 0..200)) {
            let s: Vec<Complex64> = v.iter().map(|&(a, b)| Complex64::new(a.into(), b.into())).collect();
            prop_assert_eq!(decode_iq(&encode_iq(&s)).unwrap(), s);
        }
    }
}
