//! Mono WAV input and output.

use std::path::Path;

use focalstream_core::AudioBuffer;
use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::CliError;

/// Reads 16-bit PCM or 32-bit float mono audio.
pub fn read(path: &Path) -> Result<AudioBuffer, CliError> {
    let reader = WavReader::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(CliError::Input(format!("{}: {} channels, expected mono", path.display(), spec.channels)));
    }
    let samples = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => {
            reader.into_samples::<i16>().map(|s| s.map(|v| v as f32 / 32768.0)).collect::<Result<Vec<_>, _>>()?
        }
        (SampleFormat::Float, 32) => reader.into_samples::<f32>().collect::<Result<Vec<_>, _>>()?,
        (fmt, bits) => {
            return Err(CliError::Input(format!(
                "{}: {bits}-bit {fmt:?} samples; need 16-bit PCM or 32-bit float",
                path.display()
            )))
        }
    };
    Ok(AudioBuffer::new(spec.sample_rate, samples))
}

/// Writes 32-bit float mono audio.
pub fn write_f32(path: &Path, audio: &AudioBuffer) -> Result<(), CliError> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut w = WavWriter::create(path, spec)?;
    for &s in &audio.samples {
        w.write_sample(s)?;
    }
    w.finalize()?;
    Ok(())
}

/// Writes 16-bit PCM mono audio, clipping to `[-1, 1]`.
pub fn write_pcm16(path: &Path, audio: &AudioBuffer) -> Result<(), CliError> {
    let spec =
        WavSpec { channels: 1, sample_rate: audio.sample_rate, bits_per_sample: 16, sample_format: SampleFormat::Int };
    let mut w = WavWriter::create(path, spec)?;
    for &s in &audio.samples {
        w.write_sample((s.clamp(-1.0, 1.0) * 32767.0).round() as i16)?;
    }
    w.finalize()?;
    Ok(())
}
