use alloc::vec;

use super::{map, uniform, zeros_param, zip, Rng};
use crate::error::{Error, Result};
use crate::params::impl_params;
use crate::tensor::{kernels, Tape, Tensor, Var};

/// `y = x W + b` with `W` stored `[d_in, d_out]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl_params!(Linear { weight, bias });

impl Linear {
    pub fn new(rng: &mut Rng, d_in: usize, d_out: usize) -> Self {
        let bound = libm::sqrtf(3.0 / d_in as f32);
        Linear { weight: uniform(rng, &[d_in, d_out], bound), bias: zeros_param(&[d_out]) }
    }

    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Linear { weight: zeros_param(&[d_in, d_out]), bias: zeros_param(&[d_out]) }
    }

    pub fn d_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn d_out(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let w = tape.param(&self.weight);
        let b = tape.param(&self.bias);
        let y = tape.matmul(x, w)?;
        tape.add_row(y, b)
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let (m, k, n) = (x.rows(), self.d_in(), self.d_out());
        if x.cols() != k {
            return Err(Error::shape("linear", alloc::format!("input width {} vs {}", x.cols(), k)));
        }
        let mut out = kernels::matmul(x.data(), self.weight.data(), m, k, n);
        kernels::add_row_bias(&mut out, self.bias.data());
        Ok(Tensor::from_parts(vec![m, n], out))
    }
}

/// Dynamic tanh, `gamma * tanh(alpha * x) + beta`, used in place of layer
/// normalization.
#[derive(Debug, Clone)]
pub struct Dyt {
    pub alpha: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
}

impl_params!(Dyt { alpha, gamma, beta });

impl Dyt {
    pub const DEFAULT_ALPHA: f32 = 0.5;

    pub fn new(dim: usize) -> Self {
        Dyt {
            alpha: Tensor::scalar(Self::DEFAULT_ALPHA).trainable(),
            gamma: Tensor::full(&[dim], 1.0).trainable(),
            beta: zeros_param(&[dim]),
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let a = tape.param(&self.alpha);
        let g = tape.param(&self.gamma);
        let b = tape.param(&self.beta);
        tape.dyt(x, a, g, b)
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let n = self.gamma.numel();
        if x.cols() != n {
            return Err(Error::shape("dyt", alloc::format!("input width {} vs {}", x.cols(), n)));
        }
        let a = self.alpha.data()[0];
        let (g, b) = (self.gamma.data(), self.beta.data());
        let data = x.data().iter().enumerate().map(|(i, &v)| kernels::dyt(v, a, g[i % n], b[i % n])).collect();
        Ok(Tensor::from_parts(x.shape().to_vec(), data))
    }
}

/// Pre-normalized position-wise feed-forward with a residual connection:
/// `x + down(gelu(up(dyt(x))))`.
#[derive(Debug, Clone)]
pub struct FeedForward {
    pub norm: Dyt,
    pub up: Linear,
    pub down: Linear,
}

impl_params!(FeedForward { norm, up, down });

impl FeedForward {
    pub fn new(rng: &mut Rng, dim: usize, hidden: usize) -> Self {
        FeedForward { norm: Dyt::new(dim), up: Linear::new(rng, dim, hidden), down: Linear::new(rng, hidden, dim) }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let h = self.norm.forward(tape, x)?;
        let h = self.up.forward(tape, h)?;
        let h = tape.gelu(h)?;
        let h = self.down.forward(tape, h)?;
        tape.add(x, h)
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.norm.apply(x)?;
        let h = map(&self.up.apply(&h)?, kernels::gelu);
        let h = self.down.apply(&h)?;
        zip(x, &h, |a, b| a + b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{run_offline, seeded_rng};

    #[test]
    fn dyt_scalar_examples() {
        let mut d = Dyt::new(1);
        let zero = Tensor::matrix(1, 1, vec![0.0]).unwrap();
        d.alpha.data_mut()[0] = 1.0;
        assert_eq!(d.apply(&zero).unwrap().data(), &[0.0]);

        d.alpha.data_mut()[0] = 0.5;
        d.gamma.data_mut()[0] = 2.0;
        let one = Tensor::matrix(1, 1, vec![1.0]).unwrap();
        let y = d.apply(&one).unwrap().data()[0];
        assert!((y - 2.0 * libm::tanhf(0.5)).abs() < 1e-7);
        assert!((y - 0.9242).abs() < 1e-4);

        // linear regime: gamma * alpha * x + beta
        d.beta.data_mut()[0] = 0.25;
        let small = Tensor::matrix(1, 1, vec![1e-3]).unwrap();
        let y = d.apply(&small).unwrap().data()[0];
        assert!((y - (2.0 * 0.5 * 1e-3 + 0.25)).abs() < 1e-6);
    }

    #[test]
    fn plain_and_tape_paths_agree_bitwise() {
        let mut rng = seeded_rng(3);
        let ff = FeedForward::new(&mut rng, 6, 12);
        let x = uniform(&mut rng, &[5, 6], 2.0);
        let a = ff.apply(&x).unwrap();
        let b = run_offline(&x, |t, v| ff.forward(t, v)).unwrap();
        assert_eq!(a.data(), b.data());
    }
}
