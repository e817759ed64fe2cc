//! Token stream files.
//!
//! ```text
//! magic      b"FCST"
//! version    u16 LE (1)
//! rate       u32 LE, frame rate in centi-Hz (5000 = 50.00 Hz)
//! bits       u8, bits per token
//! count      u64 LE, number of tokens
//! payload    tokens packed LSB-first, `bits` each, no per-token alignment;
//!            ceil(count * bits / 8) bytes, trailing pad bits zero
//! ```

use std::io::{Read, Write};

use focalstream_core::quantizer::{TokenIndex, MAX_BITS};
use focalstream_core::TokenStream;

use crate::error::CliError;

pub const MAGIC: &[u8; 4] = b"FCST";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 4 + 1 + 8;

pub fn payload_len(count: u64, bits: u32) -> u64 {
    (count * bits as u64).div_ceil(8)
}

/// Frame rate as stored: rounded to 0.01 Hz.
pub fn centi_hz(frame_rate: f64) -> Result<u32, CliError> {
    let c = (frame_rate * 100.0).round();
    if !(1.0..=u32::MAX as f64).contains(&c) {
        return Err(CliError::Input(format!("frame rate {frame_rate} cannot be stored")));
    }
    Ok(c as u32)
}

pub fn pack(tokens: &[TokenIndex], bits: u32) -> Vec<u8> {
    let mut out = vec![0u8; payload_len(tokens.len() as u64, bits) as usize];
    let mut pos = 0usize;
    for t in tokens {
        for b in 0..bits {
            if t.0 >> b & 1 == 1 {
                out[pos / 8] |= 1 << (pos % 8);
            }
            pos += 1;
        }
    }
    out
}

pub fn unpack(payload: &[u8], count: u64, bits: u32) -> Vec<TokenIndex> {
    let mut tokens = Vec::with_capacity(count as usize);
    let mut pos = 0usize;
    for _ in 0..count {
        let mut v = 0u32;
        for b in 0..bits {
            if payload[pos / 8] >> (pos % 8) & 1 == 1 {
                v |= 1 << b;
            }
            pos += 1;
        }
        tokens.push(TokenIndex(v));
    }
    tokens
}

pub fn to_bytes(stream: &TokenStream) -> Result<Vec<u8>, CliError> {
    if stream.bits == 0 || stream.bits > MAX_BITS {
        return Err(CliError::Input(format!("{} bits per token is not supported", stream.bits)));
    }
    if let Some(t) = stream.tokens.iter().find(|t| (t.0 as u64) >> stream.bits != 0) {
        return Err(CliError::Input(format!("token {} does not fit in {} bits", t.0, stream.bits)));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + payload_len(stream.tokens.len() as u64, stream.bits) as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&centi_hz(stream.frame_rate)?.to_le_bytes());
    out.push(stream.bits as u8);
    out.extend_from_slice(&(stream.tokens.len() as u64).to_le_bytes());
    out.extend_from_slice(&pack(&stream.tokens, stream.bits));
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<TokenStream, CliError> {
    let bad = |msg: &str| CliError::Input(format!("token file: {msg}"));
    if bytes.len() < HEADER_LEN {
        return Err(bad("truncated header"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let rate = u32::from_le_bytes(bytes[6..10].try_into().unwrap());
    let bits = bytes[10] as u32;
    let count = u64::from_le_bytes(bytes[11..19].try_into().unwrap());
    if rate == 0 {
        return Err(bad("zero frame rate"));
    }
    if bits == 0 || bits > MAX_BITS {
        return Err(bad(&format!("{bits} bits per token")));
    }
    let payload = &bytes[HEADER_LEN..];
    let expected = count.checked_mul(bits as u64).map(|n| n.div_ceil(8));
    if expected != Some(payload.len() as u64) {
        return Err(bad(&format!("payload is {} bytes, header implies {:?}", payload.len(), expected)));
    }
    let used = count * bits as u64 % 8;
    if used != 0 && payload[payload.len() - 1] >> used != 0 {
        return Err(bad("nonzero pad bits"));
    }
    Ok(TokenStream { frame_rate: rate as f64 / 100.0, bits, tokens: unpack(payload, count, bits) })
}

pub fn write(stream: &TokenStream, mut w: impl Write) -> Result<(), CliError> {
    w.write_all(&to_bytes(stream)?)?;
    Ok(())
}

pub fn read(mut r: impl Read) -> Result<TokenStream, CliError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}
