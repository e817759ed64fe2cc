use alloc::vec::Vec;

use super::CodecConfig;
use crate::error::Result;
use crate::layers::{FocalBlock, FocalGeometry, FocalState, Linear, Rng};
use crate::params::impl_params;
use crate::tensor::{Tape, Tensor, Var};

#[derive(Debug, Clone)]
pub struct FocalStage {
    pub proj: Linear,
    pub block: FocalBlock,
}

impl_params!(FocalStage { proj, block });

/// Width-changing stack of focal blocks followed by an output projection.
/// The compressor maps model features down to the quantizer latent; the
/// decompressor maps codes back up.
#[derive(Debug, Clone)]
pub struct FocalStack {
    pub stages: Vec<FocalStage>,
    pub out: Linear,
}

impl_params!(FocalStack { stages, out });

fn geometry(cfg: &CodecConfig) -> FocalGeometry {
    FocalGeometry { window: cfg.focal_window, factor: cfg.focal_factor, pool: cfg.focal_pool }
}

impl FocalStack {
    pub fn new(rng: &mut Rng, d_in: usize, widths: &[usize], d_out: usize, cfg: &CodecConfig) -> Result<Self> {
        let mut stages = Vec::with_capacity(widths.len());
        let mut d = d_in;
        for &w in widths {
            stages.push(FocalStage {
                proj: Linear::new(rng, d, w),
                block: FocalBlock::new(rng, w, 2 * w, geometry(cfg))?,
            });
            d = w;
        }
        Ok(FocalStack { stages, out: Linear::new(rng, d, d_out) })
    }

    pub fn compressor(rng: &mut Rng, cfg: &CodecConfig) -> Result<Self> {
        Self::new(rng, cfg.model_dim, &cfg.compressor_dims, cfg.codebook_bits as usize, cfg)
    }

    pub fn decompressor(rng: &mut Rng, cfg: &CodecConfig) -> Result<Self> {
        let widths: Vec<usize> = cfg.compressor_dims.iter().rev().copied().collect();
        Self::new(rng, cfg.codebook_bits as usize, &widths, cfg.model_dim, cfg)
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let mut x = x;
        for stage in &self.stages {
            let h = stage.proj.forward(tape, x)?;
            x = stage.block.forward(tape, h)?;
        }
        self.out.forward(tape, x)
    }

    pub fn new_state(&self) -> FocalStackState {
        FocalStackState { stages: self.stages.iter().map(|s| s.block.new_state()).collect() }
    }

    pub fn step(&self, state: &mut FocalStackState, x: &Tensor) -> Result<Tensor> {
        let mut x = x.clone();
        for (stage, st) in self.stages.iter().zip(&mut state.stages) {
            let h = stage.proj.apply(&x)?;
            x = stage.block.step(st, &h)?;
        }
        self.out.apply(&x)
    }
}

#[derive(Debug, Clone)]
pub struct FocalStackState {
    stages: Vec<FocalState>,
}

impl FocalStackState {
    pub fn len_floats(&self) -> usize {
        self.stages.iter().map(FocalState::len_floats).sum()
    }
}
