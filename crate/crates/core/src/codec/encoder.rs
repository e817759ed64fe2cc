use alloc::vec::Vec;

use super::CodecConfig;
use crate::error::Result;
use crate::layers::{
    empty_rows, map, zip, AttnWindowState, ChunkedAttention, Conv1d, ConvState, FeedForward, Linear, Padding, Rng,
};
use crate::params::impl_params;
use crate::tensor::kernels::{self, AttnMask};
use crate::tensor::{Tape, Tensor, Var};

fn conv_padding(causal: bool) -> Padding {
    if causal {
        Padding::Causal
    } else {
        Padding::Centered
    }
}

fn attn_mask(cfg: &CodecConfig, causal: bool) -> AttnMask {
    if causal {
        AttnMask::chunked(cfg.attn_chunk, cfg.past_window)
    } else {
        AttnMask::full()
    }
}

/// Strided convolution stack from samples to frames, per-frame
/// standardization, then a projection to the model width.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    pub convs: Vec<Conv1d>,
    pub proj: Linear,
}

impl_params!(FeatureExtractor { convs, proj });

impl FeatureExtractor {
    fn new(rng: &mut Rng, cfg: &CodecConfig, causal: bool) -> Result<Self> {
        let mut convs = Vec::new();
        let mut c_in = 1;
        for (&k, &s) in cfg.extractor_kernels.iter().zip(&cfg.extractor_strides) {
            convs.push(Conv1d::new(rng, c_in, cfg.extractor_channels, k, s, 1, 1, conv_padding(causal))?);
            c_in = cfg.extractor_channels;
        }
        Ok(FeatureExtractor { convs, proj: Linear::new(rng, cfg.extractor_channels, cfg.model_dim) })
    }

    /// `[samples, 1]` to `[frames, model_dim]`.
    pub fn forward(&self, tape: &mut Tape, audio: Var) -> Result<Var> {
        let mut x = audio;
        for conv in &self.convs {
            let y = conv.forward(tape, x)?;
            x = tape.gelu(y)?;
        }
        let x = tape.standardize_rows(x)?;
        self.proj.forward(tape, x)
    }

    fn step(&self, states: &mut [ConvState], audio: &Tensor) -> Result<Tensor> {
        let mut x = audio.clone();
        for (conv, st) in self.convs.iter().zip(states) {
            x = map(&conv.step(st, &x)?, kernels::gelu);
        }
        let mut normed = x.clone();
        let c = x.cols().max(1);
        for (src, dst) in x.data().chunks_exact(c).zip(normed.data_mut().chunks_exact_mut(c)) {
            kernels::standardize_row(src, dst);
        }
        self.proj.apply(&normed)
    }
}

/// Convolutional positional embedding: `x + gelu(conv(x))` with a grouped
/// kernel spanning many frames.
#[derive(Debug, Clone)]
pub struct PositionalConv {
    pub conv: Conv1d,
}

impl_params!(PositionalConv { conv });

impl PositionalConv {
    fn new(rng: &mut Rng, cfg: &CodecConfig, causal: bool) -> Result<Self> {
        let d = cfg.model_dim;
        let conv = Conv1d::new(rng, d, d, cfg.posemb_kernel, 1, 1, cfg.posemb_groups, conv_padding(causal))?;
        Ok(PositionalConv { conv })
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let y = self.conv.forward(tape, x)?;
        let y = tape.gelu(y)?;
        tape.add(x, y)
    }

    fn step(&self, state: &mut ConvState, x: &Tensor) -> Result<Tensor> {
        let y = map(&self.conv.step(state, x)?, kernels::gelu);
        zip(x, &y, |a, b| a + b)
    }
}

#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub attn: ChunkedAttention,
    pub ffn: FeedForward,
}

impl_params!(EncoderLayer { attn, ffn });

impl EncoderLayer {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let h = self.attn.forward(tape, x)?;
        self.ffn.forward(tape, h)
    }
}

/// Intermediate encoder outputs, used as distillation targets.
#[derive(Debug, Clone)]
pub struct EncoderTrace {
    pub extracted: Var,
    pub posemb: Var,
    pub layers: Vec<Var>,
}

impl EncoderTrace {
    pub fn output(&self) -> Var {
        *self.layers.last().unwrap_or(&self.posemb)
    }
}

/// Feature extractor, positional embedding and attention layers. The causal
/// variant streams; the full-context variant is the teacher.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub extractor: FeatureExtractor,
    pub posemb: PositionalConv,
    pub layers: Vec<EncoderLayer>,
    causal: bool,
}

impl_params!(Encoder { extractor, posemb, layers });

impl Encoder {
    pub fn new(rng: &mut Rng, cfg: &CodecConfig, causal: bool) -> Result<Self> {
        let extractor = FeatureExtractor::new(rng, cfg, causal)?;
        let posemb = PositionalConv::new(rng, cfg, causal)?;
        let mut layers = Vec::with_capacity(cfg.encoder_layers);
        for _ in 0..cfg.encoder_layers {
            layers.push(EncoderLayer {
                attn: ChunkedAttention::new(
                    rng,
                    cfg.model_dim,
                    cfg.attn_heads,
                    cfg.rel_buckets,
                    cfg.past_window.max(cfg.attn_chunk),
                    attn_mask(cfg, causal),
                )?,
                ffn: FeedForward::new(rng, cfg.model_dim, cfg.encoder_ffn),
            });
        }
        Ok(Encoder { extractor, posemb, layers, causal })
    }

    pub fn is_causal(&self) -> bool {
        self.causal
    }

    /// Same weights with causal padding and chunked masks (or the reverse).
    pub fn with_context(&self, cfg: &CodecConfig, causal: bool) -> Encoder {
        let mut enc = self.clone();
        enc.causal = causal;
        for conv in &mut enc.extractor.convs {
            conv.set_padding(conv_padding(causal));
        }
        enc.posemb.conv.set_padding(conv_padding(causal));
        for layer in &mut enc.layers {
            layer.attn.set_mask(attn_mask(cfg, causal));
        }
        enc
    }

    pub fn trace(&self, tape: &mut Tape, audio: Var) -> Result<EncoderTrace> {
        let extracted = self.extractor.forward(tape, audio)?;
        let posemb = self.posemb.forward(tape, extracted)?;
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut x = posemb;
        for layer in &self.layers {
            x = layer.forward(tape, x)?;
            layers.push(x);
        }
        Ok(EncoderTrace { extracted, posemb, layers })
    }

    /// Runs the attention layers from positional-embedding output onwards.
    pub fn layers_forward(&self, tape: &mut Tape, x: Var) -> Result<Vec<Var>> {
        let mut out = Vec::with_capacity(self.layers.len());
        let mut x = x;
        for layer in &self.layers {
            x = layer.forward(tape, x)?;
            out.push(x);
        }
        Ok(out)
    }

    pub fn forward(&self, tape: &mut Tape, audio: Var) -> Result<Var> {
        Ok(self.trace(tape, audio)?.output())
    }

    pub fn new_state(&self) -> Result<EncoderState> {
        Ok(EncoderState {
            extractor: self.extractor.convs.iter().map(Conv1d::new_state).collect(),
            posemb: self.posemb.conv.new_state(),
            layers: self.layers.iter().map(|l| l.attn.new_state()).collect::<Result<_>>()?,
        })
    }

    /// Consumes `[n, 1]` samples; returns the feature frames completed so far.
    pub fn step(&self, state: &mut EncoderState, audio: &Tensor) -> Result<Tensor> {
        let x = self.extractor.step(&mut state.extractor, audio)?;
        let mut x = self.posemb.step(&mut state.posemb, &x)?;
        for (layer, st) in self.layers.iter().zip(&mut state.layers) {
            let h = layer.attn.step(st, &x)?;
            x = layer.ffn.apply(&h)?;
        }
        Ok(x)
    }

    /// Emits the frames held back by partial attention chunks. Samples short
    /// of a whole frame are dropped.
    pub fn flush(&self, state: &mut EncoderState) -> Result<Tensor> {
        let d = self.posemb.conv.geom().c_out;
        let mut x = empty_rows(d);
        for (layer, st) in self.layers.iter().zip(&mut state.layers) {
            let a = layer.attn.step(st, &x)?;
            let b = layer.attn.flush(st)?;
            let h = Tensor::concat_rows(&[a, b], d)?;
            x = layer.ffn.apply(&h)?;
        }
        Ok(x)
    }
}

#[derive(Debug, Clone)]
pub struct EncoderState {
    extractor: Vec<ConvState>,
    posemb: ConvState,
    layers: Vec<AttnWindowState>,
}

impl EncoderState {
    pub fn len_floats(&self) -> usize {
        self.extractor.iter().map(ConvState::len_floats).sum::<usize>()
            + self.posemb.len_floats()
            + self.layers.iter().map(AttnWindowState::len_floats).sum::<usize>()
    }
}
