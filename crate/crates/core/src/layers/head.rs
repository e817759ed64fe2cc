use super::{map, zip, Conv1d, ConvState, Dyt, Linear, Padding, Rng};
use crate::error::Result;
use crate::params::impl_params;
use crate::tensor::{kernels, Tape, Tensor, Var};

/// Projects every frame to `upsample` waveform samples and flattens them, so
/// sample `s` depends only on frame `s / upsample`.
#[derive(Debug, Clone)]
pub struct FlattenHead {
    pub proj: Linear,
}

impl_params!(FlattenHead { proj });

impl FlattenHead {
    pub fn new(rng: &mut Rng, dim: usize, upsample: usize) -> Self {
        FlattenHead { proj: Linear::new(rng, dim, upsample) }
    }

    pub fn upsample(&self) -> usize {
        self.proj.d_out()
    }

    /// `[frames, dim]` to `[frames * upsample]`.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let y = self.proj.forward(tape, x)?;
        let n = tape.value(y).numel();
        tape.reshape(y, &[n])
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let y = self.proj.apply(x)?;
        let n = y.numel();
        y.reshape(&[n])
    }
}

/// Causal ConvNeXt block: depthwise causal conv, DyT, pointwise expansion
/// with GELU, projection back, residual.
#[derive(Debug, Clone)]
pub struct ConvNextBlock {
    pub dwconv: Conv1d,
    pub norm: Dyt,
    pub up: Linear,
    pub down: Linear,
}

impl_params!(ConvNextBlock { dwconv, norm, up, down });

impl ConvNextBlock {
    pub fn new(rng: &mut Rng, dim: usize, hidden: usize, kernel: usize) -> Result<Self> {
        Ok(ConvNextBlock {
            dwconv: Conv1d::depthwise(rng, dim, kernel, Padding::Causal)?,
            norm: Dyt::new(dim),
            up: Linear::new(rng, dim, hidden),
            down: Linear::new(rng, hidden, dim),
        })
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let h = self.dwconv.forward(tape, x)?;
        let h = self.norm.forward(tape, h)?;
        let h = self.up.forward(tape, h)?;
        let h = tape.gelu(h)?;
        let h = self.down.forward(tape, h)?;
        tape.add(x, h)
    }

    pub fn new_state(&self) -> ConvNextState {
        ConvNextState { conv: self.dwconv.new_state() }
    }

    pub fn step(&self, state: &mut ConvNextState, x: &Tensor) -> Result<Tensor> {
        let h = self.dwconv.step(&mut state.conv, x)?;
        let h = self.norm.apply(&h)?;
        let h = map(&self.up.apply(&h)?, kernels::gelu);
        let h = self.down.apply(&h)?;
        zip(x, &h, |a, b| a + b)
    }
}

#[derive(Debug, Clone)]
pub struct ConvNextState {
    conv: ConvState,
}

impl ConvNextState {
    pub fn len_floats(&self) -> usize {
        self.conv.len_floats()
    }
}
