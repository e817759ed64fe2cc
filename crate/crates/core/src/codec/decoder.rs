use alloc::vec::Vec;

use super::CodecConfig;
use crate::error::Result;
use crate::layers::{ConvNextBlock, ConvNextState, Dyt, FlattenHead, Linear, Rng};
use crate::params::impl_params;
use crate::tensor::{Tape, Tensor, Var};

/// Causal waveform decoder: input projection, ConvNeXt blocks, DyT and a
/// flatten head producing `upsample` samples per frame.
#[derive(Debug, Clone)]
pub struct Decoder {
    pub input: Linear,
    pub blocks: Vec<ConvNextBlock>,
    pub norm: Dyt,
    pub head: FlattenHead,
}

impl_params!(Decoder { input, blocks, norm, head });

impl Decoder {
    pub fn new(rng: &mut Rng, cfg: &CodecConfig) -> Result<Self> {
        let d = cfg.decoder_dim;
        let blocks = (0..cfg.decoder_layers)
            .map(|_| ConvNextBlock::new(rng, d, cfg.decoder_ffn, cfg.decoder_kernel))
            .collect::<Result<Vec<_>>>()?;
        Ok(Decoder {
            input: Linear::new(rng, cfg.model_dim, d),
            blocks,
            norm: Dyt::new(d),
            head: FlattenHead::new(rng, d, cfg.upsample),
        })
    }

    /// `[frames, model_dim]` to `[frames * upsample]` samples.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let mut h = self.input.forward(tape, x)?;
        for block in &self.blocks {
            h = block.forward(tape, h)?;
        }
        let h = self.norm.forward(tape, h)?;
        self.head.forward(tape, h)
    }

    pub fn new_state(&self) -> DecoderState {
        DecoderState { blocks: self.blocks.iter().map(ConvNextBlock::new_state).collect() }
    }

    pub fn step(&self, state: &mut DecoderState, x: &Tensor) -> Result<Tensor> {
        let mut h = self.input.apply(x)?;
        for (block, st) in self.blocks.iter().zip(&mut state.blocks) {
            h = block.step(st, &h)?;
        }
        let h = self.norm.apply(&h)?;
        self.head.apply(&h)
    }
}

#[derive(Debug, Clone)]
pub struct DecoderState {
    blocks: Vec<ConvNextState>,
}

impl DecoderState {
    pub fn len_floats(&self) -> usize {
        self.blocks.iter().map(ConvNextState::len_floats).sum()
    }
}
