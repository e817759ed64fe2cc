//! Streaming throughput measurement.

use std::time::Instant;

use focalstream_core::distill::make_synthetic_dataset;
use focalstream_core::metrics::real_time_factor;
use focalstream_core::Codec;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub audio_s: f64,
    pub chunk_samples: usize,
    pub encode_s: f64,
    pub decode_s: f64,
    pub tokens: usize,
    pub samples_out: usize,
}

impl BenchResult {
    /// Audio seconds per wall-clock second for encode and decode together.
    pub fn rtf(&self) -> Result<f64, CliError> {
        Ok(real_time_factor(self.audio_s, self.encode_s + self.decode_s)?)
    }
}

/// Streams `seconds` of synthetic audio through an encode session in pushes
/// of `chunk_samples`, then the tokens through a decode session one frame at
/// a time.
pub fn stream_bench(codec: &Codec, seconds: f64, chunk_samples: usize) -> Result<BenchResult, CliError> {
    let cfg = codec.config();
    let audio = make_synthetic_dataset(0xbe7c, 1, seconds, cfg.sample_rate)?.audio(0).samples;
    let chunk = chunk_samples.max(1);

    let t0 = Instant::now();
    let mut enc = codec.encode_session()?;
    let mut tokens = Vec::new();
    for piece in audio.chunks(chunk) {
        tokens.extend(enc.push(piece)?);
    }
    tokens.extend(enc.flush()?);
    let encode_s = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let mut dec = codec.decode_session();
    let mut samples_out = 0;
    for t in &tokens {
        samples_out += dec.push(std::slice::from_ref(t))?.len();
    }
    samples_out += dec.flush()?.len();
    let decode_s = t1.elapsed().as_secs_f64();

    Ok(BenchResult {
        audio_s: audio.len() as f64 / cfg.sample_rate as f64,
        chunk_samples: chunk,
        encode_s,
        decode_s,
        tokens: tokens.len(),
        samples_out,
    })
}
