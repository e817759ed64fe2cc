use alloc::vec::Vec;

use super::{rows_to_tokens, Codec, DecoderState, EncoderState, FocalStackState};
use crate::error::{Error, Result};
use crate::layers::RefinerState;
use crate::quantizer::TokenIndex;
use crate::tensor::Tensor;

/// Incremental encoder. Each push returns the tokens whose inputs are now
/// complete; attention chunks make them arrive in bursts of `attn_chunk`.
#[derive(Debug)]
pub struct EncodeSession<'m> {
    codec: &'m Codec,
    encoder: EncoderState,
    compressor: FocalStackState,
    samples_in: u64,
    tokens_out: u64,
    closed: bool,
}

impl<'m> EncodeSession<'m> {
    pub(super) fn new(codec: &'m Codec) -> Result<Self> {
        Ok(EncodeSession {
            codec,
            encoder: codec.encoder.new_state()?,
            compressor: codec.compressor.new_state(),
            samples_in: 0,
            tokens_out: 0,
            closed: false,
        })
    }

    fn compress(&mut self, features: Tensor) -> Result<Vec<TokenIndex>> {
        if features.rows() == 0 {
            return Ok(Vec::new());
        }
        let z = self.codec.compressor.step(&mut self.compressor, &features)?;
        let tokens = rows_to_tokens(&z);
        self.tokens_out += tokens.len() as u64;
        Ok(tokens)
    }

    pub fn push(&mut self, samples: &[f32]) -> Result<Vec<TokenIndex>> {
        if self.closed {
            return Err(Error::SessionClosed);
        }
        self.samples_in += samples.len() as u64;
        let x = Tensor::from_parts(alloc::vec![samples.len(), 1], samples.to_vec());
        let features = self.codec.encoder.step(&mut self.encoder, &x)?;
        self.compress(features)
    }

    /// Emits the tokens of the trailing partial chunk and closes the session.
    pub fn flush(&mut self) -> Result<Vec<TokenIndex>> {
        if self.closed {
            return Err(Error::SessionClosed);
        }
        self.closed = true;
        let features = self.codec.encoder.flush(&mut self.encoder)?;
        self.compress(features)
    }

    pub fn samples_in(&self) -> u64 {
        self.samples_in
    }

    pub fn tokens_out(&self) -> u64 {
        self.tokens_out
    }

    /// Floats held in streaming state.
    pub fn state_len(&self) -> usize {
        self.encoder.len_floats() + self.compressor.len_floats()
    }
}

/// Incremental decoder. Refiner chunks gate emission.
#[derive(Debug)]
pub struct DecodeSession<'m> {
    codec: &'m Codec,
    decompressor: FocalStackState,
    refiner: RefinerState,
    decoder: DecoderState,
    tokens_in: u64,
    samples_out: u64,
    closed: bool,
}

impl<'m> DecodeSession<'m> {
    pub(super) fn new(codec: &'m Codec) -> Self {
        DecodeSession {
            codec,
            decompressor: codec.decompressor.new_state(),
            refiner: codec.refiner.new_state(),
            decoder: codec.decoder.new_state(),
            tokens_in: 0,
            samples_out: 0,
            closed: false,
        }
    }

    fn synthesize(&mut self, features: Tensor) -> Result<Vec<f32>> {
        if features.rows() == 0 {
            return Ok(Vec::new());
        }
        let y = self.codec.decoder.step(&mut self.decoder, &features)?;
        self.samples_out += y.numel() as u64;
        Ok(y.into_data())
    }

    pub fn push(&mut self, tokens: &[TokenIndex]) -> Result<Vec<f32>> {
        if self.closed {
            return Err(Error::SessionClosed);
        }
        let codes = self.codec.codes(tokens)?;
        self.tokens_in += tokens.len() as u64;
        if tokens.is_empty() {
            return Ok(Vec::new());
        }
        let h = self.codec.decompressor.step(&mut self.decompressor, &codes)?;
        let h = self.codec.refiner.step(&mut self.refiner, &h)?;
        self.synthesize(h)
    }

    pub fn flush(&mut self) -> Result<Vec<f32>> {
        if self.closed {
            return Err(Error::SessionClosed);
        }
        self.closed = true;
        let h = self.codec.refiner.flush(&mut self.refiner)?;
        self.synthesize(h)
    }

    pub fn tokens_in(&self) -> u64 {
        self.tokens_in
    }

    pub fn samples_out(&self) -> u64 {
        self.samples_out
    }

    pub fn state_len(&self) -> usize {
        self.decompressor.len_floats() + self.refiner.len_floats() + self.decoder.len_floats()
    }
}
