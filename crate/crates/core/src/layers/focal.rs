use alloc::vec::Vec;

use super::{map, mul_by_column, zip, Conv1d, ConvState, Dyt, FeedForward, Linear, Padding, Rng};
use crate::error::{Error, Result};
use crate::params::impl_params;
use crate::tensor::{kernels, Tape, Tensor, Var};

/// Kernel schedule of a focal block: level `l` of `factor` levels uses a
/// kernel of `window + l * factor` frames; the pooling conv uses `pool`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FocalGeometry {
    pub window: usize,
    pub factor: usize,
    pub pool: usize,
}

impl FocalGeometry {
    pub fn levels(&self) -> usize {
        self.factor
    }

    pub fn kernel(&self, level: usize) -> usize {
        self.window + level * self.factor
    }
}

/// Focal modulation: hierarchical depthwise causal convolutions gather
/// context at growing ranges, a moving-average conv stands in for global
/// pooling, gates mix the levels, and the mixture modulates a query
/// projection. Followed by a feed-forward block.
#[derive(Debug, Clone)]
pub struct FocalBlock {
    pub norm: Dyt,
    pub query: Linear,
    pub context: Linear,
    pub gates: Linear,
    pub levels: Vec<Conv1d>,
    pub pool: Conv1d,
    pub modulator: Linear,
    pub proj: Linear,
    pub ffn: FeedForward,
}

impl_params!(FocalBlock { norm, query, context, gates, levels, pool, modulator, proj, ffn });

impl FocalBlock {
    pub fn new(rng: &mut Rng, dim: usize, ffn_hidden: usize, geom: FocalGeometry) -> Result<Self> {
        if geom.window == 0 || geom.factor == 0 || geom.pool == 0 {
            return Err(Error::Contract("focal window, factor and pool kernel must be >= 1".into()));
        }
        let levels = (0..geom.levels())
            .map(|l| Conv1d::depthwise(rng, dim, geom.kernel(l), Padding::Causal))
            .collect::<Result<Vec<_>>>()?;
        let mut pool = Conv1d::depthwise(rng, dim, geom.pool, Padding::Causal)?;
        pool.weight.data_mut().fill(1.0 / geom.pool as f32);
        Ok(FocalBlock {
            norm: Dyt::new(dim),
            query: Linear::new(rng, dim, dim),
            context: Linear::new(rng, dim, dim),
            gates: Linear::new(rng, dim, geom.levels() + 1),
            levels,
            pool,
            modulator: Linear::new(rng, dim, dim),
            proj: Linear::new(rng, dim, dim),
            ffn: FeedForward::new(rng, dim, ffn_hidden),
        })
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let h = self.norm.forward(tape, x)?;
        let q = self.query.forward(tape, h)?;
        let mut ctx = self.context.forward(tape, h)?;
        let gates = self.gates.forward(tape, h)?;
        let mut acc: Option<Var> = None;
        for (l, conv) in self.levels.iter().enumerate() {
            let c = conv.forward(tape, ctx)?;
            ctx = tape.gelu(c)?;
            let g = tape.column(gates, l)?;
            let term = tape.mul_col(ctx, g)?;
            acc = Some(match acc {
                Some(a) => tape.add(a, term)?,
                None => term,
            });
        }
        let pooled = self.pool.forward(tape, ctx)?;
        let pooled = tape.gelu(pooled)?;
        let g = tape.column(gates, self.levels.len())?;
        let term = tape.mul_col(pooled, g)?;
        let acc = match acc {
            Some(a) => tape.add(a, term)?,
            None => term,
        };
        let m = self.modulator.forward(tape, acc)?;
        let y = tape.mul(q, m)?;
        let y = self.proj.forward(tape, y)?;
        let x = tape.add(x, y)?;
        self.ffn.forward(tape, x)
    }

    pub fn new_state(&self) -> FocalState {
        FocalState { levels: self.levels.iter().map(Conv1d::new_state).collect(), pool: self.pool.new_state() }
    }

    /// Per-frame streaming step: every input frame yields one output frame.
    pub fn step(&self, state: &mut FocalState, x: &Tensor) -> Result<Tensor> {
        let h = self.norm.apply(x)?;
        let q = self.query.apply(&h)?;
        let mut ctx = self.context.apply(&h)?;
        let gates = self.gates.apply(&h)?;
        let mut acc: Option<Tensor> = None;
        for (l, (conv, st)) in self.levels.iter().zip(&mut state.levels).enumerate() {
            ctx = map(&conv.step(st, &ctx)?, kernels::gelu);
            let term = mul_by_column(&ctx, &gates, l);
            acc = Some(match acc {
                Some(a) => zip(&a, &term, |p, q| p + q)?,
                None => term,
            });
        }
        let pooled = map(&self.pool.step(&mut state.pool, &ctx)?, kernels::gelu);
        let term = mul_by_column(&pooled, &gates, self.levels.len());
        let acc = match acc {
            Some(a) => zip(&a, &term, |p, q| p + q)?,
            None => term,
        };
        let m = self.modulator.apply(&acc)?;
        let y = self.proj.apply(&zip(&q, &m, |p, q| p * q)?)?;
        let x = zip(x, &y, |p, q| p + q)?;
        let out = self.ffn.apply(&x)?;
        if !out.is_finite() {
            return Err(Error::NonFinite("focal block"));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct FocalState {
    levels: Vec<ConvState>,
    pool: ConvState,
}

impl FocalState {
    pub fn len_floats(&self) -> usize {
        self.levels.iter().map(ConvState::len_floats).sum::<usize>() + self.pool.len_floats()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{run_offline, seeded_rng};
    use alloc::vec;

    const GEOM: FocalGeometry = FocalGeometry { window: 3, factor: 2, pool: 4 };

    fn signal(t: usize, d: usize) -> Tensor {
        Tensor::matrix(t, d, (0..t * d).map(|i| ((i * 5 % 11) as f32 - 5.0) * 0.15).collect()).unwrap()
    }

    #[test]
    fn kernel_schedule() {
        let full = FocalGeometry { window: 14, factor: 4, pool: 14 };
        let ks: Vec<usize> = (0..full.levels()).map(|l| full.kernel(l)).collect();
        assert_eq!(ks, [14, 18, 22, 26]);
    }

    #[test]
    fn pool_starts_as_moving_average() {
        let mut rng = seeded_rng(0);
        let block = FocalBlock::new(&mut rng, 1, 4, GEOM).unwrap();
        let x = Tensor::matrix(6, 1, vec![4.0, 8.0, 0.0, 4.0, 12.0, 0.0]).unwrap();
        let y = run_offline(&x, |t, v| block.pool.forward(t, v)).unwrap();
        assert_eq!(y.data(), &[1.0, 3.0, 3.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn step_matches_forward_bitwise() {
        let mut rng = seeded_rng(1);
        let block = FocalBlock::new(&mut rng, 6, 12, GEOM).unwrap();
        let x = signal(19, 6);
        let want = run_offline(&x, |t, v| block.forward(t, v)).unwrap();
        let mut st = block.new_state();
        let mut parts = Vec::new();
        for i in 0..19 {
            parts.push(block.step(&mut st, &x.slice_rows(i, i + 1)).unwrap());
        }
        let got = Tensor::concat_rows(&parts, 6).unwrap();
        assert_eq!(got.data(), want.data());
    }

    #[test]
    fn future_frames_do_not_leak() {
        let mut rng = seeded_rng(2);
        let block = FocalBlock::new(&mut rng, 4, 8, GEOM).unwrap();
        let x = signal(12, 4);
        let mut y = x.clone();
        y.data_mut()[8 * 4..].iter_mut().for_each(|v| *v += 3.0);
        let a = run_offline(&x, |t, v| block.forward(t, v)).unwrap();
        let b = run_offline(&y, |t, v| block.forward(t, v)).unwrap();
        assert_eq!(&a.data()[..8 * 4], &b.data()[..8 * 4]);
        assert_ne!(&a.data()[8 * 4..], &b.data()[8 * 4..]);
    }
}
