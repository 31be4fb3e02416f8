//! Software model of a PN-coded BLE tag telemetry link.
//!
//! A tag transmits a BLE LE 1M uncoded-PHY frame whose access address and
//! PDU carry a per-tag pseudo-noise code. The receiver runs power squelch,
//! frequency translation, GMSK demodulation and a bit correlator over the
//! 256 on-air bits that make up the code. Around that sit an RF channel
//! model, a link budget, and azimuth sweeps with a directional antenna.
//!
//! Module map:
//!
//! - [`pncode`]: LFSR m-sequences, correlation metrics, per-tag codebooks
//! - [`frame`]: frame assembly, CRC-24, firmware export
//! - [`modem`]: GMSK modulator, discriminator, DC removal, M&M timing
//! - [`channel`]: impairments, free-space path loss, antenna pattern
//! - [`rx`]: the streaming receiver and its sliding correlator
//! - [`bearing`]: antenna sweeps and bearing estimation
//! - [`sim`]: Monte Carlo trials, Pd curves, range prediction
//! - [`io`]: raw IQ files, sidecars, atomic writes

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bearing;
pub mod channel;
pub mod error;
pub mod frame;
pub mod io;
pub mod modem;
pub mod pncode;
pub mod rx;
pub mod sim;

pub mod seed;

pub use error::{Error, Result};

pub use bearing::{estimate_bearing, run_sweep, SweepConfig, SweepPoint, SweepResult};
pub use channel::{apply_channel, fspl_db, pattern_gain, rx_snr_db, AntennaPattern, ChannelParams, Drive, LinkBudget};
pub use frame::{assemble_frame, build_detect_sequence, export_firmware, FirmwareExport, TagFrame};
pub use modem::{GmskParams, IqBuffer, TimingRecoveryParams};
pub use pncode::{build_codebook, correlate_aligned, BitSequence, Codebook, CodebookEntry, Lfsr};
pub use rx::{DetectionEvent, DetectorConfig, Receiver, ReceiverConfig, SquelchParams, XlatingFirParams};

/// BLE LE 1M symbol rate.
pub const SYMBOL_RATE_HZ: f64 = 1.0e6;

/// Length of the correlated on-air sequence: preamble, access address, PDU.
pub const DETECT_BITS: usize = 256;

/// Default correlation threshold (75% agreement).
pub const DEFAULT_THRESHOLD: u32 = 192;
