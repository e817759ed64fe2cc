//! Binary spherical quantization (BSQ).
//!
//! A latent `z` in `R^D` is mapped to the nearest vertex of the scaled binary
//! hypercube `{±1/√D}^D`, which lies on the unit sphere. No codebook is
//! stored: the token index is the sign pattern, bit `b` set when component `b`
//! is positive (little-endian, `sign(0) = +1`).

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::{Tape, Var};

/// Largest supported latent dimension (bits per token).
pub const MAX_BITS: u32 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BsqConfig {
    bits: u32,
}

impl BsqConfig {
    pub fn new(bits: u32) -> Result<Self> {
        if !(1..=MAX_BITS).contains(&bits) {
            return Err(Error::config("codebook_bits", alloc::format!("{bits} outside 1..={MAX_BITS}")));
        }
        Ok(BsqConfig { bits })
    }

    /// Latent dimension, equal to bits per token.
    pub fn latent_dim(&self) -> usize {
        self.bits as usize
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn codebook_size(&self) -> u64 {
        1u64 << self.bits
    }
}

/// A point of `{±1/√D}^D`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryCode(Vec<f32>);

impl BinaryCode {
    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f32> {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TokenIndex(pub u32);

/// Sign pattern of `z` as a token index.
pub fn sign_index(z: &[f32]) -> TokenIndex {
    let mut idx = 0u32;
    for (b, &v) in z.iter().enumerate() {
        if v >= 0.0 {
            idx |= 1 << b;
        }
    }
    TokenIndex(idx)
}

fn code_magnitude(dim: usize) -> f32 {
    1.0 / math::sqrt(dim as f32)
}

/// Quantizes one latent: `sign(z / |z|) / √D`.
pub fn bsq_encode(z: &[f32]) -> Result<(BinaryCode, TokenIndex)> {
    if z.is_empty() || z.len() > MAX_BITS as usize {
        return Err(Error::shape("bsq_encode", alloc::format!("latent dim {}", z.len())));
    }
    if z.iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate("bsq_encode of the zero vector"));
    }
    let mag = code_magnitude(z.len());
    let code = z.iter().map(|&v| if v >= 0.0 { mag } else { -mag }).collect();
    Ok((BinaryCode(code), sign_index(z)))
}

pub fn bsq_decode(index: TokenIndex, cfg: BsqConfig) -> Result<BinaryCode> {
    if index.0 as u64 >= cfg.codebook_size() {
        return Err(Error::Format(alloc::format!("token {} out of range for {} codes", index.0, cfg.codebook_size())));
    }
    let d = cfg.latent_dim();
    let mag = code_magnitude(d);
    Ok(BinaryCode((0..d).map(|b| if index.0 >> b & 1 == 1 { mag } else { -mag }).collect()))
}

/// Straight-through quantization of the rows of `z` on a tape: the forward
/// value is the code, the gradient is that of row normalization.
pub fn bsq_ste(tape: &mut Tape, z: Var) -> Result<Var> {
    tape.bsq_ste(z)
}

/// Euclidean distance from a unit vector to its quantization.
pub fn nearest_code_distance(z: &[f32]) -> f32 {
    let mag = code_magnitude(z.len()) as f64;
    let d2: f64 = z
        .iter()
        .map(|&v| {
            let c = if v >= 0.0 { mag } else { -mag };
            (v as f64 - c) * (v as f64 - c)
        })
        .sum();
    math::sqrt64(d2) as f32
}
