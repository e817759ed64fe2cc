//! Codec building blocks.
//!
//! Each layer has an offline forward that records onto a [`Tape`] (used for
//! training and for whole-signal inference) and, where it can stream, a `step`
//! that consumes new frames and updates an explicit state object. Both paths
//! run the same kernels in the same order, so streamed output is bitwise equal
//! to the offline result.

mod attention;
mod conv;
mod focal;
mod head;
mod linear;
mod refiner;

use alloc::vec::Vec;

use rand::Rng as _;

pub use attention::{AttnWindowState, ChunkedAttention};
pub use conv::{Conv1d, ConvState, Padding};
pub use focal::{FocalBlock, FocalGeometry, FocalState};
pub use head::{ConvNextBlock, ConvNextState, FlattenHead};
pub use linear::{Dyt, FeedForward, Linear};
pub use refiner::{Refiner, RefinerState};

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Deterministic generator used for all parameter initialization.
pub type Rng = rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}

/// Trainable tensor with entries drawn from `U(-bound, bound)`.
pub(crate) fn uniform(rng: &mut Rng, shape: &[usize], bound: f32) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f32> = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::from_parts(shape.to_vec(), data).trainable()
}

pub(crate) fn zeros_param(shape: &[usize]) -> Tensor {
    Tensor::zeros(shape).trainable()
}

/// Runs `f` on a no-grad tape and returns the value it produced.
pub fn run_offline(x: &Tensor, f: impl FnOnce(&mut Tape, Var) -> Result<Var>) -> Result<Tensor> {
    let mut tape = Tape::inference();
    let input = tape.constant(x.clone());
    let out = f(&mut tape, input)?;
    Ok(tape.value(out).clone())
}

pub(crate) fn map(t: &Tensor, f: impl Fn(f32) -> f32) -> Tensor {
    Tensor::from_parts(t.shape().to_vec(), t.data().iter().map(|&v| f(v)).collect())
}

pub(crate) fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::shape("elementwise", alloc::format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Ok(Tensor::from_parts(a.shape().to_vec(), data))
}

/// Scales each row of `a` by the matching entry of column `j` of `gates`.
pub(crate) fn mul_by_column(a: &Tensor, gates: &Tensor, j: usize) -> Tensor {
    let n = a.cols();
    let gc = gates.cols();
    let mut data = a.data().to_vec();
    for (i, row) in data.chunks_exact_mut(n.max(1)).enumerate() {
        let s = gates.data()[i * gc + j];
        row.iter_mut().for_each(|v| *v *= s);
    }
    Tensor::from_parts(a.shape().to_vec(), data)
}

pub(crate) fn empty_rows(cols: usize) -> Tensor {
    Tensor::from_parts(alloc::vec![0, cols], Vec::new())
}
