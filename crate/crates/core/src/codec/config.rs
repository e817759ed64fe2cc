use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::error::{Error, Result};
use crate::quantizer::{BsqConfig, MAX_BITS};

/// Every architectural hyperparameter of the codec.
///
/// Configs round-trip through a `key=value` text form (one pair per line,
/// `#` comments, lists comma separated). A `preset=` line selects the base
/// values; later keys override it regardless of line order.
#[derive(Debug, Clone, PartialEq)]
pub struct CodecConfig {
    pub sample_rate: u32,
    /// Token rate in Hz. Given explicitly rather than derived so that rates
    /// that are not an integer division of the sample rate can be described.
    pub frame_rate: f64,
    pub extractor_kernels: Vec<usize>,
    pub extractor_strides: Vec<usize>,
    pub extractor_channels: usize,
    pub model_dim: usize,
    pub encoder_layers: usize,
    pub attn_heads: usize,
    pub encoder_ffn: usize,
    pub posemb_kernel: usize,
    pub posemb_groups: usize,
    pub attn_chunk: usize,
    pub past_window: usize,
    pub rel_buckets: usize,
    pub compressor_dims: Vec<usize>,
    pub focal_window: usize,
    pub focal_factor: usize,
    pub focal_pool: usize,
    pub codebook_bits: u32,
    /// Refiner chunk in frames; follows `attn_chunk` when unset.
    pub refiner_chunk: Option<usize>,
    pub decoder_dim: usize,
    pub decoder_ffn: usize,
    pub decoder_layers: usize,
    pub decoder_kernel: usize,
    pub upsample: usize,
}

const KEYS: &[&str] = &[
    "preset",
    "sample_rate",
    "frame_rate",
    "extractor_kernels",
    "extractor_strides",
    "extractor_channels",
    "model_dim",
    "encoder_layers",
    "attn_heads",
    "encoder_ffn",
    "posemb_kernel",
    "posemb_groups",
    "attn_chunk",
    "past_window",
    "rel_buckets",
    "compressor_dims",
    "focal_window",
    "focal_factor",
    "focal_pool",
    "codebook_bits",
    "refiner_chunk",
    "decoder_dim",
    "decoder_ffn",
    "decoder_layers",
    "decoder_kernel",
    "upsample",
];

impl Default for CodecConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl CodecConfig {
    /// Small configuration that trains on a CPU in minutes. Structural
    /// constants (frame rate, chunk, focal schedule, posemb field, upsampling)
    /// match the full-size model; widths and depths are reduced.
    pub fn desk() -> Self {
        CodecConfig {
            sample_rate: 16_000,
            frame_rate: 50.0,
            extractor_kernels: vec![10, 8, 8, 4],
            extractor_strides: vec![5, 4, 4, 4],
            extractor_channels: 32,
            model_dim: 64,
            encoder_layers: 2,
            attn_heads: 4,
            encoder_ffn: 128,
            posemb_kernel: 128,
            posemb_groups: 16,
            attn_chunk: 4,
            past_window: 64,
            rel_buckets: 32,
            compressor_dims: vec![64, 32, 32],
            focal_window: 14,
            focal_factor: 4,
            focal_pool: 14,
            codebook_bits: 8,
            refiner_chunk: None,
            decoder_dim: 64,
            decoder_ffn: 128,
            decoder_layers: 2,
            decoder_kernel: 7,
            upsample: 480,
        }
    }

    /// Full-size shape: six WavLM-large encoder layers, 1024-wide focal
    /// stages, 2048-entry codebook, 24 kHz output. Constructible but meant
    /// for accounting rather than training here.
    pub fn full() -> Self {
        CodecConfig {
            sample_rate: 16_000,
            frame_rate: 50.0,
            extractor_kernels: vec![10, 3, 3, 3, 3, 2, 2],
            extractor_strides: vec![5, 2, 2, 2, 2, 2, 2],
            extractor_channels: 512,
            model_dim: 1024,
            encoder_layers: 6,
            attn_heads: 16,
            encoder_ffn: 4096,
            posemb_kernel: 128,
            posemb_groups: 16,
            attn_chunk: 4,
            past_window: 512,
            rel_buckets: 32,
            compressor_dims: vec![1024, 1024, 1024],
            focal_window: 14,
            focal_factor: 4,
            focal_pool: 14,
            codebook_bits: 11,
            refiner_chunk: None,
            decoder_dim: 1024,
            decoder_ffn: 2048,
            decoder_layers: 8,
            decoder_kernel: 7,
            upsample: 480,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "full" => Ok(Self::full()),
            other => Err(Error::config("preset", format!("unknown preset `{other}` (expected desk or full)"))),
        }
    }

    pub fn samples_per_frame(&self) -> usize {
        self.extractor_strides.iter().product()
    }

    pub fn refiner_chunk(&self) -> usize {
        self.refiner_chunk.unwrap_or(self.attn_chunk)
    }

    pub fn bsq(&self) -> Result<BsqConfig> {
        BsqConfig::new(self.codebook_bits)
    }

    pub fn frame_ms(&self) -> f64 {
        1000.0 / self.frame_rate
    }

    /// Output sample rate of the decoder.
    pub fn output_rate(&self) -> u32 {
        libm::round(self.frame_rate * self.upsample as f64) as u32
    }

    pub fn bitrate_bps(&self) -> f64 {
        self.frame_rate * self.codebook_bits as f64
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |key: &'static str, v: usize| {
            if v == 0 {
                Err(Error::config(key, "must be >= 1"))
            } else {
                Ok(())
            }
        };
        if self.sample_rate == 0 {
            return Err(Error::config("sample_rate", "must be >= 1"));
        }
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return Err(Error::config("frame_rate", "must be positive"));
        }
        if self.extractor_kernels.is_empty() || self.extractor_kernels.len() != self.extractor_strides.len() {
            return Err(Error::config("extractor_strides", "needs one stride per extractor kernel"));
        }
        for (&k, &s) in self.extractor_kernels.iter().zip(&self.extractor_strides) {
            positive("extractor_strides", s)?;
            if k < s {
                return Err(Error::config("extractor_kernels", format!("kernel {k} shorter than stride {s}")));
            }
        }
        positive("extractor_channels", self.extractor_channels)?;
        positive("model_dim", self.model_dim)?;
        positive("encoder_layers", self.encoder_layers)?;
        positive("attn_heads", self.attn_heads)?;
        if self.model_dim % self.attn_heads != 0 {
            return Err(Error::config("attn_heads", "must divide model_dim"));
        }
        positive("encoder_ffn", self.encoder_ffn)?;
        positive("posemb_kernel", self.posemb_kernel)?;
        positive("posemb_groups", self.posemb_groups)?;
        if self.model_dim % self.posemb_groups != 0 {
            return Err(Error::config("posemb_groups", "must divide model_dim"));
        }
        positive("attn_chunk", self.attn_chunk)?;
        if self.rel_buckets < 2 {
            return Err(Error::config("rel_buckets", "must be >= 2"));
        }
        if self.compressor_dims.is_empty() || self.compressor_dims.contains(&0) {
            return Err(Error::config("compressor_dims", "needs at least one positive width"));
        }
        positive("focal_window", self.focal_window)?;
        positive("focal_factor", self.focal_factor)?;
        positive("focal_pool", self.focal_pool)?;
        if !(1..=MAX_BITS).contains(&self.codebook_bits) {
            return Err(Error::config("codebook_bits", format!("must be in 1..={MAX_BITS}")));
        }
        positive("refiner_chunk", self.refiner_chunk())?;
        positive("decoder_dim", self.decoder_dim)?;
        positive("decoder_ffn", self.decoder_ffn)?;
        positive("decoder_kernel", self.decoder_kernel)?;
        positive("upsample", self.upsample)?;
        Ok(())
    }

    /// Parses the `key=value` form and validates the result.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut pairs: Vec<(String, String)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config("line", format!("{}: expected key=value", lineno + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(Error::UnknownKey(k.to_string()));
            }
            pairs.push((k.to_string(), v.to_string()));
        }
        let mut cfg = match pairs.iter().rev().find(|(k, _)| k == "preset") {
            Some((_, v)) => Self::preset(v)?,
            None => Self::desk(),
        };
        for (k, v) in &pairs {
            if k != "preset" {
                cfg.set(k, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key from its text value without validating the whole config.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn count(key: &'static str, v: &str) -> Result<usize> {
            v.parse().map_err(|_| Error::config(key, format!("`{v}` is not a non-negative integer")))
        }
        fn list(key: &'static str, v: &str) -> Result<Vec<usize>> {
            v.split(',').map(|p| count(key, p.trim())).collect()
        }
        let key: &'static str =
            KEYS.iter().find(|k| **k == key).copied().ok_or_else(|| Error::UnknownKey(key.to_string()))?;
        match key {
            "preset" => *self = Self::preset(value)?,
            "sample_rate" => {
                self.sample_rate =
                    value.parse().map_err(|_| Error::config(key, format!("`{value}` is not a sample rate")))?
            }
            "frame_rate" => {
                self.frame_rate = value.parse().map_err(|_| Error::config(key, format!("`{value}` is not a number")))?
            }
            "extractor_kernels" => self.extractor_kernels = list(key, value)?,
            "extractor_strides" => self.extractor_strides = list(key, value)?,
            "extractor_channels" => self.extractor_channels = count(key, value)?,
            "model_dim" => self.model_dim = count(key, value)?,
            "encoder_layers" => self.encoder_layers = count(key, value)?,
            "attn_heads" => self.attn_heads = count(key, value)?,
            "encoder_ffn" => self.encoder_ffn = count(key, value)?,
            "posemb_kernel" => self.posemb_kernel = count(key, value)?,
            "posemb_groups" => self.posemb_groups = count(key, value)?,
            "attn_chunk" => self.attn_chunk = count(key, value)?,
            "past_window" => self.past_window = count(key, value)?,
            "rel_buckets" => self.rel_buckets = count(key, value)?,
            "compressor_dims" => self.compressor_dims = list(key, value)?,
            "focal_window" => self.focal_window = count(key, value)?,
            "focal_factor" => self.focal_factor = count(key, value)?,
            "focal_pool" => self.focal_pool = count(key, value)?,
            "codebook_bits" => {
                self.codebook_bits =
                    value.parse().map_err(|_| Error::config(key, format!("`{value}` is not a bit count")))?
            }
            "refiner_chunk" => self.refiner_chunk = Some(count(key, value)?),
            "decoder_dim" => self.decoder_dim = count(key, value)?,
            "decoder_ffn" => self.decoder_ffn = count(key, value)?,
            "decoder_layers" => self.decoder_layers = count(key, value)?,
            "decoder_kernel" => self.decoder_kernel = count(key, value)?,
            "upsample" => self.upsample = count(key, value)?,
            _ => unreachable!("key list and match arms agree"),
        }
        Ok(())
    }

    /// Renders every key explicitly; `from_text(to_text())` returns `self`.
    pub fn to_text(&self) -> String {
        fn join(v: &[usize]) -> String {
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
        }
        let mut s = String::new();
        let _ = writeln!(s, "sample_rate={}", self.sample_rate);
        let _ = writeln!(s, "frame_rate={}", self.frame_rate);
        let _ = writeln!(s, "extractor_kernels={}", join(&self.extractor_kernels));
        let _ = writeln!(s, "extractor_strides={}", join(&self.extractor_strides));
        let _ = writeln!(s, "extractor_channels={}", self.extractor_channels);
        let _ = writeln!(s, "model_dim={}", self.model_dim);
        let _ = writeln!(s, "encoder_layers={}", self.encoder_layers);
        let _ = writeln!(s, "attn_heads={}", self.attn_heads);
        let _ = writeln!(s, "encoder_ffn={}", self.encoder_ffn);
        let _ = writeln!(s, "posemb_kernel={}", self.posemb_kernel);
        let _ = writeln!(s, "posemb_groups={}", self.posemb_groups);
        let _ = writeln!(s, "attn_chunk={}", self.attn_chunk);
        let _ = writeln!(s, "past_window={}", self.past_window);
        let _ = writeln!(s, "rel_buckets={}", self.rel_buckets);
        let _ = writeln!(s, "compressor_dims={}", join(&self.compressor_dims));
        let _ = writeln!(s, "focal_window={}", self.focal_window);
        let _ = writeln!(s, "focal_factor={}", self.focal_factor);
        let _ = writeln!(s, "focal_pool={}", self.focal_pool);
        let _ = writeln!(s, "codebook_bits={}", self.codebook_bits);
        if let Some(c) = self.refiner_chunk {
            let _ = writeln!(s, "refiner_chunk={c}");
        }
        let _ = writeln!(s, "decoder_dim={}", self.decoder_dim);
        let _ = writeln!(s, "decoder_ffn={}", self.decoder_ffn);
        let _ = writeln!(s, "decoder_layers={}", self.decoder_layers);
        let _ = writeln!(s, "decoder_kernel={}", self.decoder_kernel);
        let _ = writeln!(s, "upsample={}", self.upsample);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for cfg in [CodecConfig::desk(), CodecConfig::full()] {
            cfg.validate().unwrap();
            assert_eq!(cfg.samples_per_frame(), 320);
            assert_eq!(CodecConfig::from_text(&cfg.to_text()).unwrap(), cfg);
        }
    }

    #[test]
    fn overrides_apply_after_preset() {
        let cfg = CodecConfig::from_text("attn_chunk=1\n# comment\npreset=full\n").unwrap();
        assert_eq!(cfg.model_dim, 1024);
        assert_eq!(cfg.attn_chunk, 1);
        assert_eq!(cfg.refiner_chunk(), 1);
    }

    #[test]
    fn unknown_and_bad_values_are_named() {
        assert_eq!(CodecConfig::from_text("chunk=4"), Err(Error::UnknownKey("chunk".into())));
        assert!(matches!(
            CodecConfig::from_text("attn_heads=3"),
            Err(Error::Config { key, .. }) if key == "attn_heads"
        ));
        assert!(matches!(
            CodecConfig::from_text("model_dim=abc"),
            Err(Error::Config { key, .. }) if key == "model_dim"
        ));
    }

    #[test]
    fn derived_quantities() {
        let cfg = CodecConfig::full();
        assert_eq!(cfg.output_rate(), 24_000);
        assert_eq!(cfg.bitrate_bps(), 550.0);
        assert_eq!(cfg.frame_ms(), 20.0);
    }
}
