use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use super::CodecConfig;

/// When a module can emit output frame `t`, in terms of its input frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Emission {
    /// Frame `t` is ready once input frame `t` is.
    PerFrame,
    /// Frames are released a whole chunk at a time.
    Chunked(usize),
}

impl Emission {
    fn ready_at(self, t: usize) -> usize {
        match self {
            Emission::PerFrame => t,
            Emission::Chunked(c) => (t / c) * c + c - 1,
        }
    }

    fn period(self) -> usize {
        match self {
            Emission::PerFrame => 1,
            Emission::Chunked(c) => c,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModuleLatency {
    pub name: String,
    /// Future frames this module alone waits for.
    pub lookahead_frames: usize,
    pub lookahead_ms: f64,
    /// Receptive field into the past, in frames (fractional for the
    /// sample-level extractor).
    pub past_frames: f64,
    pub past_s: f64,
    /// Lookahead exceeds the attention-chunk budget.
    pub flagged: bool,
}

/// Latency accounting derived from a configuration alone.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyReport {
    pub frame_ms: f64,
    pub budget_frames: usize,
    pub modules: Vec<ModuleLatency>,
    /// Lookahead of the whole encode-decode path in frames.
    pub lookahead_frames: usize,
    /// `(lookahead_frames + 1) * frame_ms`: waiting for future frames plus
    /// the duration of the frame itself.
    pub total_ms: f64,
    pub bitrate_bps: f64,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn latency_report(cfg: &CodecConfig) -> LatencyReport {
    let frame_ms = cfg.frame_ms();
    let spf = cfg.samples_per_frame() as f64;
    let budget = cfg.attn_chunk.saturating_sub(1);

    let mut receptive = 1usize;
    let mut hop = 1usize;
    for (&k, &s) in cfg.extractor_kernels.iter().zip(&cfg.extractor_strides) {
        receptive += (k - 1) * hop;
        hop *= s;
    }
    let focal_field = |widths: usize| {
        let per_block: usize =
            (0..cfg.focal_factor).map(|l| cfg.focal_window + l * cfg.focal_factor - 1).sum::<usize>() + cfg.focal_pool
                - 1;
        1 + widths * per_block
    };
    let stages = cfg.compressor_dims.len();

    let mut path: Vec<(String, Emission, f64)> = Vec::new();
    path.push((String::from("extractor"), Emission::PerFrame, receptive as f64 / spf));
    path.push((String::from("posemb"), Emission::PerFrame, cfg.posemb_kernel as f64));
    for i in 0..cfg.encoder_layers {
        path.push((format!("encoder.layer{i}"), Emission::Chunked(cfg.attn_chunk), cfg.past_window as f64));
    }
    path.push((String::from("compressor"), Emission::PerFrame, focal_field(stages) as f64));
    path.push((String::from("quantizer"), Emission::PerFrame, 1.0));
    path.push((String::from("decompressor"), Emission::PerFrame, focal_field(stages) as f64));
    path.push((String::from("refiner"), Emission::Chunked(cfg.refiner_chunk()), cfg.refiner_chunk() as f64));
    path.push((
        String::from("decoder"),
        Emission::PerFrame,
        (1 + cfg.decoder_layers * (cfg.decoder_kernel - 1)) as f64,
    ));

    let period = path.iter().fold(1, |acc, (_, e, _)| acc / gcd(acc, e.period()) * e.period());
    let lookahead_frames =
        (0..period).map(|t| path.iter().fold(t, |ready, (_, e, _)| e.ready_at(ready)) - t).max().unwrap_or(0);

    let modules = path
        .into_iter()
        .map(|(name, e, past_frames)| {
            let own = e.period() - 1;
            ModuleLatency {
                name,
                lookahead_frames: own,
                lookahead_ms: own as f64 * frame_ms,
                past_frames,
                past_s: past_frames / cfg.frame_rate,
                flagged: own > budget,
            }
        })
        .collect();

    LatencyReport {
        frame_ms,
        budget_frames: budget,
        modules,
        lookahead_frames,
        total_ms: (lookahead_frames + 1) as f64 * frame_ms,
        bitrate_bps: cfg.bitrate_bps(),
    }
}

fn trim(v: f64) -> String {
    if libm::fabs(v - libm::round(v)) < 1e-9 {
        format!("{}", libm::round(v) as i64)
    } else {
        format!("{v:.2}")
    }
}

impl LatencyReport {
    pub fn flagged(&self) -> impl Iterator<Item = &ModuleLatency> {
        self.modules.iter().filter(|m| m.flagged)
    }

    pub fn module(&self, name: &str) -> Option<&ModuleLatency> {
        self.modules.iter().find(|m| m.name == name)
    }

    /// Plain-text table, one module per row, followed by the totals.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<18} {:>9} {:>12} {:>11} {:>8} flag",
            "module", "lookahead", "lookahead_ms", "past_frames", "past_s"
        );
        for m in &self.modules {
            let _ = writeln!(
                s,
                "{:<18} {:>9} {:>12} {:>11} {:>8.2} {}",
                m.name,
                m.lookahead_frames,
                trim(m.lookahead_ms),
                trim(m.past_frames),
                m.past_s,
                if m.flagged { "OVER BUDGET" } else { "" }
            );
        }
        let _ = writeln!(s, "total lookahead: {} frames", self.lookahead_frames);
        let _ = writeln!(s, "total theoretical latency: {} ms", trim(self.total_ms));
        let _ = writeln!(
            s,
            "bitrate: {} kbps ({} bps)",
            crate::metrics::format_kbps(self.bitrate_bps / 1000.0),
            trim(self.bitrate_bps)
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunked_paths_compose_without_adding() {
        let r = latency_report(&CodecConfig::full());
        assert_eq!(r.lookahead_frames, 3);
        assert_eq!(r.total_ms, 80.0);
        assert!(r.flagged().next().is_none());
    }

    #[test]
    fn misaligned_refiner_chunk_adds_and_is_flagged() {
        let mut cfg = CodecConfig::desk();
        cfg.attn_chunk = 1;
        cfg.refiner_chunk = Some(4);
        let r = latency_report(&cfg);
        assert_eq!(r.lookahead_frames, 3);
        assert_eq!(r.flagged().map(|m| m.name.as_str()).collect::<Vec<_>>(), ["refiner"]);

        cfg.attn_chunk = 3;
        let r = latency_report(&cfg);
        // Over the 12-frame period the worst frame is 6: the encoder releases
        // it with frame 8, and the refiner chunk holding 8 ends at 11.
        assert_eq!(r.lookahead_frames, 5);
    }
}
