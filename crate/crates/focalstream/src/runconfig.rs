//! Run settings merged from defaults, an optional `key=value` file and
//! command-line flags, in increasing precedence.
//!
//! Codec keys (see [`CodecConfig::to_text`]) and the run keys below share one
//! namespace. Unknown keys are rejected by name.

use std::path::Path;

use focalstream_core::distill::DistillConfig;
use focalstream_core::CodecConfig;

use crate::error::CliError;

const RUN_KEYS: &[&str] = &[
    "seed",
    "chunk_ms",
    "train_items",
    "heldout_items",
    "item_seconds",
    "stage1_steps",
    "stage2_steps",
    "stage3_steps",
    "stage4_steps",
    "stage1_lr",
    "stage2_lr",
    "stage3_lr",
    "stage4_lr",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub codec: CodecConfig,
    pub seed: u64,
    pub chunk_ms: f64,
    pub distill: DistillConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { codec: CodecConfig::desk(), seed: 7, chunk_ms: 20.0, distill: DistillConfig::desk(7) }
    }
}

/// Splits `key=value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Input(format!("line {}: expected key=value, got `{line}`", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse().map_err(|_| CliError::Input(format!("invalid value `{v}` for `{key}`")))
}

impl RunConfig {
    /// Applies file pairs, then flag pairs, over the defaults.
    pub fn resolve(file: &[(String, String)], flags: &[(String, String)]) -> Result<Self, CliError> {
        let pairs: Vec<&(String, String)> = file.iter().chain(flags).collect();
        let mut cfg = RunConfig::default();
        // A preset replaces every codec key, so it goes first.
        if let Some((_, name)) = pairs.iter().rev().find(|(k, _)| k == "preset") {
            cfg.codec = CodecConfig::preset(name)?;
        }
        let mut seed_set = false;
        for (k, v) in pairs.iter().map(|p| (p.0.as_str(), p.1.as_str())) {
            match k {
                "preset" => {}
                "seed" => {
                    cfg.seed = parse(k, v)?;
                    seed_set = true;
                }
                "chunk_ms" => {
                    let ms: f64 = parse(k, v)?;
                    if !(ms > 0.0 && ms.is_finite()) {
                        return Err(CliError::Input(format!("chunk_ms must be positive, got {v}")));
                    }
                    cfg.chunk_ms = ms;
                }
                "train_items" => cfg.distill.train_items = parse(k, v)?,
                "heldout_items" => cfg.distill.heldout_items = parse(k, v)?,
                "item_seconds" => cfg.distill.item_seconds = parse(k, v)?,
                _ if RUN_KEYS.contains(&k) => {
                    let stage = k.as_bytes()[5] - b'0';
                    let plan = match stage {
                        1 => &mut cfg.distill.stage1,
                        2 => &mut cfg.distill.stage2,
                        3 => &mut cfg.distill.stage3,
                        _ => &mut cfg.distill.stage4,
                    };
                    if k.ends_with("_steps") {
                        plan.steps = parse(k, v)?;
                    } else {
                        plan.lr = parse(k, v)?;
                    }
                }
                _ => cfg.codec.set(k, v)?,
            }
        }
        if seed_set {
            cfg.distill.seed = cfg.seed;
        }
        cfg.codec.validate()?;
        Ok(cfg)
    }

    pub fn load(file: Option<&Path>, flags: &[(String, String)]) -> Result<Self, CliError> {
        let file_pairs = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
                parse_pairs(&text)?
            }
            None => Vec::new(),
        };
        Self::resolve(&file_pairs, flags)
    }

    /// Samples per streaming push at the codec input rate.
    pub fn chunk_samples(&self) -> usize {
        ((self.chunk_ms / 1000.0 * self.codec.sample_rate as f64).round() as usize).max(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kv(k: &str, v: &str) -> (String, String) {
        (k.to_string(), v.to_string())
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let file = [kv("seed", "3"), kv("attn_chunk", "2"), kv("chunk_ms", "40")];
        let flags = [kv("seed", "9")];
        let c = RunConfig::resolve(&file, &flags).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.distill.seed, 9);
        assert_eq!(c.codec.attn_chunk, 2);
        assert_eq!(c.chunk_ms, 40.0);
        assert_eq!(c.codec.model_dim, CodecConfig::desk().model_dim);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::resolve(&[kv("attn_chunks", "2")], &[]).unwrap_err();
        assert!(err.to_string().contains("attn_chunks"), "{err}");
    }

    #[test]
    fn preset_applies_before_other_keys() {
        let c = RunConfig::resolve(&[kv("codebook_bits", "12"), kv("preset", "full")], &[]).unwrap();
        assert_eq!(c.codec.codebook_bits, 12);
        assert_eq!(c.codec.model_dim, CodecConfig::full().model_dim);
    }

    #[test]
    fn stage_keys() {
        let c = RunConfig::resolve(&[kv("stage3_steps", "5"), kv("stage4_lr", "0.5")], &[]).unwrap();
        assert_eq!(c.distill.stage3.steps, 5);
        assert_eq!(c.distill.stage4.lr, 0.5);
    }

    #[test]
    fn chunk_samples_at_input_rate() {
        assert_eq!(RunConfig::default().chunk_samples(), 320);
    }
}
