//! Codec assembly: configuration, the encoder/bottleneck/decoder stacks,
//! offline and streaming pipelines, and latency accounting.
//!
//! Pipeline: samples → [`Encoder`] → compressor ([`FocalStack`]) → binary
//! spherical quantizer → tokens → decompressor → [`Refiner`] → [`Decoder`] →
//! samples at `frame_rate * upsample` Hz. The refiner runs on the decode side.

mod bottleneck;
mod config;
mod decoder;
mod encoder;
mod latency;
mod session;

use alloc::vec;
use alloc::vec::Vec;

pub use bottleneck::{FocalStack, FocalStackState, FocalStage};
pub use config::CodecConfig;
pub use decoder::{Decoder, DecoderState};
pub use encoder::{Encoder, EncoderLayer, EncoderState, EncoderTrace, FeatureExtractor, PositionalConv};
pub use latency::{latency_report, LatencyReport, ModuleLatency};
pub use session::{DecodeSession, EncodeSession};

use crate::error::{Error, Result};
use crate::layers::{seeded_rng, Refiner};
use crate::params::impl_params;
use crate::quantizer::{bsq_decode, sign_index, TokenIndex};
use crate::tensor::{Tape, Tensor, Var};

/// Mono PCM samples in `[-1, 1]` at a given rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub sample_rate: u32,
    pub samples: Vec<f32>,
}

impl AudioBuffer {
    pub fn new(sample_rate: u32, samples: Vec<f32>) -> Self {
        AudioBuffer { sample_rate, samples }
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// `[samples, 1]` for the tape.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_parts(vec![self.samples.len(), 1], self.samples.clone())
    }
}

/// Token indices with the rate and width needed to interpret them.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenStream {
    pub frame_rate: f64,
    pub bits: u32,
    pub tokens: Vec<TokenIndex>,
}

impl TokenStream {
    pub fn duration_s(&self) -> f64 {
        self.tokens.len() as f64 / self.frame_rate
    }
}

/// The streaming student codec.
#[derive(Debug, Clone)]
pub struct Codec {
    config: CodecConfig,
    pub encoder: Encoder,
    pub compressor: FocalStack,
    pub decompressor: FocalStack,
    pub refiner: Refiner,
    pub decoder: Decoder,
}

impl_params!(Codec { encoder, compressor, decompressor, refiner, decoder });

impl Codec {
    /// Randomly initialized model; the same seed gives the same weights.
    pub fn new(config: CodecConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded_rng(seed);
        let encoder = Encoder::new(&mut rng, &config, true)?;
        let compressor = FocalStack::compressor(&mut rng, &config)?;
        let decompressor = FocalStack::decompressor(&mut rng, &config)?;
        let refiner = Refiner::new(&mut rng, config.model_dim, config.refiner_chunk())?;
        let decoder = Decoder::new(&mut rng, &config)?;
        Ok(Codec { config, encoder, compressor, decompressor, refiner, decoder })
    }

    pub fn config(&self) -> &CodecConfig {
        &self.config
    }

    fn check_audio(&self, audio: &AudioBuffer) -> Result<()> {
        if audio.sample_rate != self.config.sample_rate {
            return Err(Error::Format(alloc::format!(
                "audio is {} Hz, model expects {} Hz",
                audio.sample_rate,
                self.config.sample_rate
            )));
        }
        Ok(())
    }

    pub fn frames_for(&self, samples: usize) -> usize {
        samples / self.config.samples_per_frame()
    }

    /// Encoder features `[frames, model_dim]`.
    pub fn encode_features(&self, audio: &AudioBuffer) -> Result<Tensor> {
        self.check_audio(audio)?;
        let frames = self.frames_for(audio.samples.len());
        if frames == 0 {
            return Ok(Tensor::zeros(&[0, self.config.model_dim]));
        }
        let mut tape = Tape::inference();
        let x = tape.constant(audio.to_tensor());
        let y = self.encoder.forward(&mut tape, x)?;
        Ok(tape.value(y).clone())
    }

    /// Compressor output before quantization, `[frames, bits]`.
    pub fn latents(&self, features: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::inference();
        let x = tape.constant(features.clone());
        let z = self.compressor.forward(&mut tape, x)?;
        Ok(tape.value(z).clone())
    }

    pub fn encode_offline(&self, audio: &AudioBuffer) -> Result<TokenStream> {
        let features = self.encode_features(audio)?;
        let tokens = if features.rows() == 0 { Vec::new() } else { rows_to_tokens(&self.latents(&features)?) };
        Ok(self.token_stream(tokens))
    }

    pub(crate) fn token_stream(&self, tokens: Vec<TokenIndex>) -> TokenStream {
        TokenStream { frame_rate: self.config.frame_rate, bits: self.config.codebook_bits, tokens }
    }

    /// Binary codes `[frames, bits]` for a token sequence.
    pub fn codes(&self, tokens: &[TokenIndex]) -> Result<Tensor> {
        let cfg = self.config.bsq()?;
        let mut data = Vec::with_capacity(tokens.len() * cfg.latent_dim());
        for &t in tokens {
            data.extend_from_slice(bsq_decode(t, cfg)?.values());
        }
        Ok(Tensor::from_parts(vec![tokens.len(), cfg.latent_dim()], data))
    }

    /// Decompressor output, optionally refined, on a tape.
    pub fn reconstruct_features(&self, tape: &mut Tape, codes: Var, refine: bool) -> Result<Var> {
        let h = self.decompressor.forward(tape, codes)?;
        if refine {
            self.refiner.forward_padded(tape, h)
        } else {
            Ok(h)
        }
    }

    pub fn decode_offline(&self, tokens: &TokenStream) -> Result<AudioBuffer> {
        self.check_tokens(tokens)?;
        let rate = self.config.output_rate();
        if tokens.tokens.is_empty() {
            return Ok(AudioBuffer::new(rate, Vec::new()));
        }
        let codes = self.codes(&tokens.tokens)?;
        let mut tape = Tape::inference();
        let c = tape.constant(codes);
        let h = self.reconstruct_features(&mut tape, c, true)?;
        let y = self.decoder.forward(&mut tape, h)?;
        Ok(AudioBuffer::new(rate, tape.value(y).data().to_vec()))
    }

    pub(crate) fn check_tokens(&self, tokens: &TokenStream) -> Result<()> {
        if tokens.bits != self.config.codebook_bits {
            return Err(Error::Format(alloc::format!(
                "stream has {}-bit tokens, model uses {}",
                tokens.bits,
                self.config.codebook_bits
            )));
        }
        Ok(())
    }

    pub fn encode_session(&self) -> Result<EncodeSession<'_>> {
        EncodeSession::new(self)
    }

    pub fn decode_session(&self) -> DecodeSession<'_> {
        DecodeSession::new(self)
    }

    pub fn latency_report(&self) -> LatencyReport {
        latency_report(&self.config)
    }
}

/// Sign-pattern token of every row.
pub fn rows_to_tokens(latents: &Tensor) -> Vec<TokenIndex> {
    (0..latents.rows()).map(|i| sign_index(latents.row(i))).collect()
}
