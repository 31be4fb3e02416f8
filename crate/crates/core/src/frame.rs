//! BLE LE 1M uncoded-PHY frames carrying a tag code.
//!
//! On air a frame is `preamble (8) | access address (32) | PDU (27 bytes) |
//! CRC (24)`, LSB-first within each byte. The first 256 bits are the
//! detection sequence the receiver correlates against; the 248 bits after
//! the preamble are the tag's code. Whitening is never applied, and the
//! two PDU header bytes are ordinary code bits.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::pncode::BitSequence;

pub const PREAMBLE_BITS: usize = 8;
pub const ACCESS_ADDRESS_BITS: usize = 32;
pub const PDU_BYTES: usize = 27;
pub const CODE_BITS: usize = ACCESS_ADDRESS_BITS + PDU_BYTES * 8;
pub const DETECT_BITS: usize = PREAMBLE_BITS + CODE_BITS;
pub const CRC_BITS: usize = 24;
pub const FRAME_BITS: usize = DETECT_BITS + CRC_BITS;

/// BLE CRC-24 generator `x^24 + x^10 + x^9 + x^6 + x^4 + x^3 + x + 1`.
pub const CRC_POLY: u32 = 0x065B;
pub const CRC_INIT: u32 = 0x55_5555;

const _: () = assert!(DETECT_BITS == 256 && FRAME_BITS == 280);

/// Alternating preamble whose last bit differs from the first access-address bit.
pub fn preamble_for(first_aa_bit: u8) -> BitSequence {
    let last = (first_aa_bit & 1) ^ 1;
    BitSequence::from_bools((0..PREAMBLE_BITS).map(|i| (last ^ ((PREAMBLE_BITS - 1 - i) as u8 & 1)) == 1))
}

fn check_code(code248: &BitSequence) -> Result<()> {
    if code248.len() != CODE_BITS {
        return invalid(format!("tag code must be {CODE_BITS} bits, got {}", code248.len()));
    }
    Ok(())
}

/// Preamble followed by the 248 code bits: the 256-bit correlation target.
pub fn build_detect_sequence(code248: &BitSequence) -> Result<BitSequence> {
    check_code(code248)?;
    Ok(preamble_for(code248.get(0).unwrap_or(0)).concat(code248))
}

/// Bit-serial CRC-24 over bits in on-air order.
///
/// The register is kept MSB-aligned: each input bit is XORed with bit 23 and
/// the result drives the generator. The CRC goes on air from bit 23 down.
pub fn crc24_bits(bits: impl IntoIterator<Item = u8>, init: u32) -> u32 {
    let mut crc = init & 0xFF_FFFF;
    for b in bits {
        let fb = ((crc >> 23) as u8 & 1) ^ (b & 1);
        crc = (crc << 1) & 0xFF_FFFF;
        if fb == 1 {
            crc ^= CRC_POLY;
        }
    }
    crc
}

/// CRC-24 over PDU bytes, each byte fed LSB-first.
pub fn crc24(pdu: &[u8], init: u32) -> u32 {
    crc24_bits(BitSequence::from_bytes_lsb_first(pdu).iter(), init)
}

/// Bit expansion of a CRC value in transmission order.
pub fn crc_to_bits(crc: u32) -> BitSequence {
    BitSequence::from_bools((0..CRC_BITS).rev().map(|i| (crc >> i) & 1 == 1))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagFrame {
    preamble: BitSequence,
    access_address: u32,
    pdu: [u8; PDU_BYTES],
    crc: u32,
    detect_sequence: BitSequence,
}

impl TagFrame {
    fn from_parts(access_address: u32, pdu: [u8; PDU_BYTES]) -> Self {
        let mut code = BitSequence::from_bytes_lsb_first(&access_address.to_le_bytes());
        code = code.concat(&BitSequence::from_bytes_lsb_first(&pdu));
        let preamble = preamble_for(code.get(0).unwrap_or(0));
        let detect_sequence = preamble.concat(&code);
        Self { preamble, access_address, pdu, crc: crc24(&pdu, CRC_INIT), detect_sequence }
    }

    pub fn preamble(&self) -> &BitSequence {
        &self.preamble
    }

    /// Access address as the integer whose LSB is transmitted first.
    pub fn access_address(&self) -> u32 {
        self.access_address
    }

    pub fn pdu(&self) -> &[u8; PDU_BYTES] {
        &self.pdu
    }

    pub fn crc(&self) -> u32 {
        self.crc
    }

    pub fn detect_sequence(&self) -> &BitSequence {
        &self.detect_sequence
    }

    /// The 248 code bits after the preamble.
    pub fn code(&self) -> BitSequence {
        self.detect_sequence.slice(PREAMBLE_BITS..DETECT_BITS)
    }
}

pub fn assemble_frame(code248: &BitSequence) -> Result<TagFrame> {
    check_code(code248)?;
    let bytes = code248.to_bytes_lsb_first()?;
    let access_address = u32::from_le_bytes(bytes[..4].try_into().expect("4 bytes"));
    let pdu: [u8; PDU_BYTES] = bytes[4..].try_into().expect("27 bytes");
    Ok(TagFrame::from_parts(access_address, pdu))
}

/// Full 280-bit transmission: detection sequence then CRC.
pub fn flatten_to_bits(frame: &TagFrame) -> BitSequence {
    frame.detect_sequence.concat(&crc_to_bits(frame.crc))
}

/// Register-level values for a radio peripheral sending this frame raw.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "FirmwareJson", try_from = "FirmwareJson")]
pub struct FirmwareExport {
    pub access_address_word: u32,
    pub pdu_bytes: [u8; PDU_BYTES],
    pub crc_init: u32,
    pub whitening_enabled: bool,
}

pub fn export_firmware(frame: &TagFrame) -> FirmwareExport {
    FirmwareExport {
        access_address_word: frame.access_address,
        pdu_bytes: frame.pdu,
        crc_init: CRC_INIT,
        whitening_enabled: false,
    }
}

impl FirmwareExport {
    /// Rebuilds the frame these register values transmit.
    pub fn to_frame(&self) -> Result<TagFrame> {
        if self.whitening_enabled {
            return invalid("whitened frames cannot carry a tag code");
        }
        if self.crc_init != CRC_INIT {
            return invalid(format!("unexpected CRC init {:#08x}", self.crc_init));
        }
        Ok(TagFrame::from_parts(self.access_address_word, self.pdu_bytes))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// C header with the PDU bytes and the access address word.
    pub fn to_c_header(&self, tag_id: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "/* Tag {tag_id}: raw BLE 1M frame, whitening disabled. */");
        out.push_str("#ifndef TAG_FRAME_H\n#define TAG_FRAME_H\n\n#include <stdint.h>\n\n");
        let _ = writeln!(out, "#define TAG_CRC_INIT 0x{:06X}u\n", self.crc_init);
        let _ = writeln!(out, "static const uint32_t tag_aa = 0x{:08X}u;\n", self.access_address_word);
        let _ = writeln!(out, "static const uint8_t tag_pdu[{PDU_BYTES}] = {{");
        for chunk in self.pdu_bytes.chunks(9) {
            let line: Vec<String> = chunk.iter().map(|b| format!("0x{b:02X}")).collect();
            let _ = writeln!(out, "    {},", line.join(", "));
        }
        out.push_str("};\n\n#endif /* TAG_FRAME_H */\n");
        out
    }
}

#[derive(Serialize, Deserialize)]
struct FirmwareJson {
    access_address: String,
    pdu_hex: String,
    crc_init: String,
    whitening: bool,
}

impl From<FirmwareExport> for FirmwareJson {
    fn from(f: FirmwareExport) -> Self {
        Self {
            access_address: format!("0x{:08X}", f.access_address_word),
            pdu_hex: f.pdu_bytes.iter().map(|b| format!("{b:02x}")).collect(),
            crc_init: format!("0x{:06X}", f.crc_init),
            whitening: f.whitening_enabled,
        }
    }
}

fn parse_hex_u32(s: &str) -> Result<u32> {
    let digits = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")).unwrap_or(s);
    u32::from_str_radix(digits, 16).map_err(|e| Error::InvalidArgument(format!("bad hex {s:?}: {e}")))
}

impl TryFrom<FirmwareJson> for FirmwareExport {
    type Error = Error;

    fn try_from(j: FirmwareJson) -> Result<Self> {
        if j.pdu_hex.len() != PDU_BYTES * 2 || !j.pdu_hex.is_ascii() {
            return invalid(format!("pdu_hex must be {} hex characters", PDU_BYTES * 2));
        }
        let mut pdu_bytes = [0u8; PDU_BYTES];
        for (i, byte) in pdu_bytes.iter_mut().enumerate() {
            let pair = &j.pdu_hex[2 * i..2 * i + 2];
            *byte = u8::from_str_radix(pair, 16)
                .map_err(|e| Error::InvalidArgument(format!("bad pdu_hex byte {pair:?}: {e}")))?;
        }
        Ok(Self {
            access_address_word: parse_hex_u32(&j.access_address)?,
            pdu_bytes,
            crc_init: parse_hex_u32(&j.crc_init)?,
            whitening_enabled: j.whitening,
        })
    }
}
