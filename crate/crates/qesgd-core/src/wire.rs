//! Bit-exact wire encoding for quantized vectors.
//!
//! Layout (all multi-byte fields little-endian):
//!
//! ```text
//! offset  size  field
//! 0       1     magic 0x51
//! 1       1     version 0x01
//! 2       1     bit width b
//! 3       8     dimension d (u64)
//! 11      8     grid step delta (IEEE-754 binary64 bit pattern)
//! 19      .     payload: ceil(d*b/8) bytes
//! ```
//!
//! The payload packs the unsigned offsets `code + 2^(b-1)` (each `b` bits,
//! values in `[0, 2^b)`) in ascending coordinate order, least-significant-bit
//! first within each byte. Unused bits in the final byte must be zero.
//! `decode(encode(qv)) == qv` exactly, including the delta bit pattern.

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::quant::{QuantGrid, QuantizedVector, MAX_BITS};

pub const MAGIC: u8 = 0x51;
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 19;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("bad magic byte {0:#04x}, expected 0x51")]
    BadMagic(u8),
    #[error("unsupported version {0}, expected 1")]
    BadVersion(u8),
    #[error("header bit width {0} is outside 1..={MAX_BITS}")]
    HeaderBits(u8),
    #[error("header grid step is not a positive finite value")]
    HeaderDelta,
    #[error("header dimension is zero")]
    HeaderDim,
    #[error("input of {actual} bytes is shorter than the {expected}-byte header")]
    TruncatedHeader { actual: usize, expected: usize },
    #[error("payload has {actual} bytes, expected {expected}")]
    PayloadSize { actual: usize, expected: usize },
    #[error("padding bits in the final payload byte are not zero")]
    NonZeroPadding,
    #[error("decoded code at coordinate {index} is outside the signed {bits}-bit range")]
    CodeOutOfRange { index: usize, bits: u8 },
}

/// Exact encoded size: 19-byte header plus `ceil(d*b/8)` payload bytes.
pub fn encoded_len(dim: usize, bits: u8) -> usize {
    HEADER_LEN + (dim * bits as usize).div_ceil(8)
}

pub fn encode(qv: &QuantizedVector) -> Vec<u8> {
    let grid = qv.grid();
    let bits = grid.bits() as usize;
    let dim = qv.dim();
    let mut out = vec![0u8; encoded_len(dim, grid.bits())];
    out[0] = MAGIC;
    out[1] = VERSION;
    out[2] = grid.bits();
    out[3..11].copy_from_slice(&(dim as u64).to_le_bytes());
    out[11..19].copy_from_slice(&grid.delta().to_bits().to_le_bytes());

    let bias = 1i32 << (grid.bits() - 1);
    let mut bit_pos = 0usize;
    for &code in qv.codes() {
        let mut value = (code + bias) as u32;
        let mut remaining = bits;
        while remaining > 0 {
            let byte = HEADER_LEN + bit_pos / 8;
            let offset = bit_pos % 8;
            let take = (8 - offset).min(remaining);
            out[byte] |= ((value & ((1u32 << take) - 1)) as u8) << offset;
            value >>= take;
            bit_pos += take;
            remaining -= take;
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<QuantizedVector, CodecError> {
    if bytes.len() < HEADER_LEN {
        return Err(CodecError::TruncatedHeader {
            actual: bytes.len(),
            expected: HEADER_LEN,
        });
    }
    if bytes[0] != MAGIC {
        return Err(CodecError::BadMagic(bytes[0]));
    }
    if bytes[1] != VERSION {
        return Err(CodecError::BadVersion(bytes[1]));
    }
    let bits = bytes[2];
    if bits == 0 || bits > MAX_BITS {
        return Err(CodecError::HeaderBits(bits));
    }
    let dim = u64::from_le_bytes(bytes[3..11].try_into().expect("slice is 8 bytes")) as usize;
    if dim == 0 {
        return Err(CodecError::HeaderDim);
    }
    let delta = f64::from_bits(u64::from_le_bytes(
        bytes[11..19].try_into().expect("slice is 8 bytes"),
    ));
    if delta <= 0.0 || !delta.is_finite() {
        return Err(CodecError::HeaderDelta);
    }
    let expected = encoded_len(dim, bits) - HEADER_LEN;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(CodecError::PayloadSize {
            actual: payload.len(),
            expected,
        });
    }

    let bias = 1i32 << (bits - 1);
    let width = bits as usize;
    let mut codes = Vec::with_capacity(dim);
    let mut bit_pos = 0usize;
    for index in 0..dim {
        let mut value = 0u32;
        let mut got = 0usize;
        while got < width {
            let byte = payload[bit_pos / 8];
            let offset = bit_pos % 8;
            let take = (8 - offset).min(width - got);
            let chunk = (byte >> offset) & ((1u16 << take) - 1) as u8;
            value |= (chunk as u32) << got;
            got += take;
            bit_pos += take;
        }
        let code = value as i32 - bias;
        // Every b-bit pattern maps into the signed range, but guard anyway so
        // a future header change cannot smuggle invalid codes through.
        if code < -bias || code > bias - 1 {
            return Err(CodecError::CodeOutOfRange { index, bits });
        }
        codes.push(code);
    }
    // Trailing pad bits must be zero.
    if !bit_pos.is_multiple_of(8) {
        let last = payload[bit_pos / 8];
        if last >> (bit_pos % 8) != 0 {
            return Err(CodecError::NonZeroPadding);
        }
    }
    let grid = QuantGrid::new(delta, bits).expect("header fields validated above");
    Ok(QuantizedVector::new(grid, codes).expect("codes validated above"))
}
