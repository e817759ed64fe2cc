//! Streaming speech codec core.
//!
//! Everything in this crate is pure computation over `alloc` collections so it
//! builds for `no_std` targets. File formats, WAV handling and the command line
//! live in the `focalstream` companion crate.
//!
//! Layout:
//! - [`tensor`]: dense `f32` tensors, a reverse-mode gradient tape and Adam.
//! - [`layers`]: building blocks with an offline (tape) forward and a streaming
//!   step that carries explicit state.
//! - [`quantizer`]: binary spherical quantization and token indices.
//! - [`codec`]: configuration, model assembly, streaming sessions and latency
//!   accounting.
//! - [`distill`]: the four-stage causal distillation pipeline against a
//!   full-context teacher.
//! - [`metrics`]: codebook usage, entropy, bitrate and real-time factor.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod codec;
pub mod distill;
pub mod error;
pub mod layers;
pub(crate) mod math;
pub mod metrics;
pub mod params;
pub mod quantizer;
pub mod tensor;

pub use codec::{AudioBuffer, Codec, CodecConfig, DecodeSession, EncodeSession, TokenStream};
pub use error::{Error, Result};
pub use tensor::{Tape, Tensor, Var};
