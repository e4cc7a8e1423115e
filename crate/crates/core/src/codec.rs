//! Wire protocol between the acquisition host and the device.
//!
//! The host sends a three byte poll request, `P\r\n`. The device answers
//! with one fixed-width ASCII data frame:
//!
//! ```text
//! offset  0      '$' sync
//!         1..3   sequence counter, two uppercase hex digits
//!         3..35  eight channel counts, four zero-padded decimal digits each, AN0 first
//!         35..37 checksum, two uppercase hex digits
//!         37..39 CR LF
//! ```
//!
//! The checksum is the sum of the ASCII values of bytes `1..35`, modulo 256.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of analog input channels reported in every frame.
pub const CHANNELS: usize = 8;
/// Largest code the 10-bit converter can produce.
pub const FULL_SCALE: u16 = 1023;
/// Encoded data frame length in bytes.
pub const FRAME_LEN: usize = 39;
/// Poll request sent by the host.
pub const POLL_REQUEST: [u8; 3] = *b"P\r\n";
/// Frame sync byte.
pub const SYNC: u8 = b'$';

const SEQ_OFFSET: usize = 1;
const COUNTS_OFFSET: usize = 3;
const DIGITS_PER_CHANNEL: usize = 4;
const CHECKSUM_OFFSET: usize = 35;
const TERMINATOR_OFFSET: usize = 37;

/// Errors raised when building a frame from unchecked values.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("count {value} exceeds the 10-bit full scale of {FULL_SCALE}")]
    CountOutOfRange { value: u32 },
    #[error("sequence number {value} does not fit in 8 bits")]
    SeqOutOfRange { value: u32 },
    #[error("expected {CHANNELS} channel counts, got {actual}")]
    WrongChannelCount { actual: usize },
}

/// Reasons a byte sequence is not a valid data frame. Each variant carries
/// the byte offset where validation failed.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("frame must be {FRAME_LEN} bytes, got {len}")]
    WrongLength { len: usize },
    #[error("bad sync byte 0x{found:02X} at offset {offset}")]
    BadSync { offset: usize, found: u8 },
    #[error("bad terminator byte 0x{found:02X} at offset {offset}")]
    BadTerminator { offset: usize, found: u8 },
    #[error("non-hex byte 0x{found:02X} at offset {offset}")]
    NonHex { offset: usize, found: u8 },
    #[error("non-digit byte 0x{found:02X} at offset {offset}")]
    NonDigit { offset: usize, found: u8 },
    #[error("channel {channel} count {value} at offset {offset} exceeds {FULL_SCALE}")]
    CountOutOfRange {
        offset: usize,
        channel: usize,
        value: u16,
    },
    #[error("checksum mismatch at offset {offset}: frame says 0x{found:02X}, computed 0x{computed:02X}")]
    ChecksumMismatch {
        offset: usize,
        found: u8,
        computed: u8,
    },
}

impl DecodeError {
    /// Byte offset of the failure. Length errors report offset 0.
    pub fn offset(&self) -> usize {
        match *self {
            DecodeError::WrongLength { .. } => 0,
            DecodeError::BadSync { offset, .. }
            | DecodeError::BadTerminator { offset, .. }
            | DecodeError::NonHex { offset, .. }
            | DecodeError::NonDigit { offset, .. }
            | DecodeError::CountOutOfRange { offset, .. }
            | DecodeError::ChecksumMismatch { offset, .. } => offset,
        }
    }
}

/// A single 10-bit converter code, `0..=1023`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
pub struct RawCounts(u16);

impl RawCounts {
    pub const ZERO: RawCounts = RawCounts(0);
    pub const MAX: RawCounts = RawCounts(FULL_SCALE);

    pub fn new(value: u16) -> Result<Self, FrameError> {
        if value > FULL_SCALE {
            return Err(FrameError::CountOutOfRange {
                value: u32::from(value),
            });
        }
        Ok(RawCounts(value))
    }

    #[inline]
    pub const fn get(self) -> u16 {
        self.0
    }
}

impl TryFrom<u16> for RawCounts {
    type Error = FrameError;

    fn try_from(value: u16) -> Result<Self, Self::Error> {
        RawCounts::new(value)
    }
}

impl From<RawCounts> for u16 {
    fn from(c: RawCounts) -> u16 {
        c.0
    }
}

impl fmt::Display for RawCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One device report: a wrapping sequence number and the eight channel codes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RawFrame {
    pub seq: u8,
    pub counts: [RawCounts; CHANNELS],
}

impl RawFrame {
    pub fn new(seq: u8, counts: [RawCounts; CHANNELS]) -> Self {
        RawFrame { seq, counts }
    }

    /// Builds a frame from unchecked integers, enforcing every frame invariant.
    pub fn from_raw(seq: u32, counts: &[u16]) -> Result<Self, FrameError> {
        let seq = u8::try_from(seq).map_err(|_| FrameError::SeqOutOfRange { value: seq })?;
        if counts.len() != CHANNELS {
            return Err(FrameError::WrongChannelCount {
                actual: counts.len(),
            });
        }
        let mut out = [RawCounts::ZERO; CHANNELS];
        for (slot, &c) in out.iter_mut().zip(counts) {
            *slot = RawCounts::new(c)?;
        }
        Ok(RawFrame { seq, counts: out })
    }
}

const HEX: &[u8; 16] = b"0123456789ABCDEF";

/// Mod-256 sum of the ASCII bytes covered by the checksum.
#[inline]
pub fn checksum(body: &[u8]) -> u8 {
    body.iter().fold(0u8, |acc, &b| acc.wrapping_add(b))
}

fn put_hex(dst: &mut [u8], value: u8) {
    dst[0] = HEX[usize::from(value >> 4)];
    dst[1] = HEX[usize::from(value & 0x0F)];
}

fn hex_nibble(b: u8) -> Option<u8> {
    match b {
        b'0'..=b'9' => Some(b - b'0'),
        b'A'..=b'F' => Some(b - b'A' + 10),
        _ => None,
    }
}

fn read_hex(bytes: &[u8], offset: usize) -> Result<u8, DecodeError> {
    let hi = hex_nibble(bytes[offset]).ok_or(DecodeError::NonHex {
        offset,
        found: bytes[offset],
    })?;
    let lo = hex_nibble(bytes[offset + 1]).ok_or(DecodeError::NonHex {
        offset: offset + 1,
        found: bytes[offset + 1],
    })?;
    Ok((hi << 4) | lo)
}

/// Encodes a frame into its 39-byte wire form.
pub fn encode_frame(frame: &RawFrame) -> [u8; FRAME_LEN] {
    let mut out = [0u8; FRAME_LEN];
    out[0] = SYNC;
    put_hex(&mut out[SEQ_OFFSET..], frame.seq);
    for (ch, count) in frame.counts.iter().enumerate() {
        let mut v = count.get();
        let start = COUNTS_OFFSET + ch * DIGITS_PER_CHANNEL;
        for slot in out[start..start + DIGITS_PER_CHANNEL].iter_mut().rev() {
            *slot = b'0' + (v % 10) as u8;
            v /= 10;
        }
    }
    let sum = checksum(&out[SEQ_OFFSET..CHECKSUM_OFFSET]);
    put_hex(&mut out[CHECKSUM_OFFSET..], sum);
    out[TERMINATOR_OFFSET] = b'\r';
    out[TERMINATOR_OFFSET + 1] = b'\n';
    out
}

/// Decodes one data frame. Total over arbitrary input.
pub fn decode_frame(bytes: &[u8]) -> Result<RawFrame, DecodeError> {
    if bytes.len() != FRAME_LEN {
        return Err(DecodeError::WrongLength { len: bytes.len() });
    }
    if bytes[0] != SYNC {
        return Err(DecodeError::BadSync {
            offset: 0,
            found: bytes[0],
        });
    }
    for (offset, expected) in [(TERMINATOR_OFFSET, b'\r'), (TERMINATOR_OFFSET + 1, b'\n')] {
        if bytes[offset] != expected {
            return Err(DecodeError::BadTerminator {
                offset,
                found: bytes[offset],
            });
        }
    }
    let seq = read_hex(bytes, SEQ_OFFSET)?;

    let mut counts = [RawCounts::ZERO; CHANNELS];
    for (ch, slot) in counts.iter_mut().enumerate() {
        let start = COUNTS_OFFSET + ch * DIGITS_PER_CHANNEL;
        let mut value: u16 = 0;
        for offset in start..start + DIGITS_PER_CHANNEL {
            let b = bytes[offset];
            if !b.is_ascii_digit() {
                return Err(DecodeError::NonDigit { offset, found: b });
            }
            value = value * 10 + u16::from(b - b'0');
        }
        if value > FULL_SCALE {
            return Err(DecodeError::CountOutOfRange {
                offset: start,
                channel: ch,
                value,
            });
        }
        *slot = RawCounts(value);
    }

    let found = read_hex(bytes, CHECKSUM_OFFSET)?;
    let computed = checksum(&bytes[SEQ_OFFSET..CHECKSUM_OFFSET]);
    if found != computed {
        return Err(DecodeError::ChecksumMismatch {
            offset: CHECKSUM_OFFSET,
            found,
            computed,
        });
    }
    Ok(RawFrame { seq, counts })
}

pub fn encode_poll() -> [u8; 3] {
    POLL_REQUEST
}

pub fn is_poll(bytes: &[u8]) -> bool {
    bytes == POLL_REQUEST
}
