use alloc::vec::Vec;

use super::{uniform, zeros_param, zip, Rng};
use crate::error::{Error, Result};
use crate::params::impl_params;
use crate::tensor::{kernels, Tape, Tensor, Var};

/// Residual chunk-wise feed-forward layer. Frames are grouped into chunks of
/// `chunk` frames, each flattened to a `chunk * dim` vector `c`, and mapped to
/// `c + W_out gelu(W_in c + b_in) + b_out`.
///
/// `w_out` and `b_out` start at zero so the layer is the identity at
/// initialization while `w_in` still receives gradient.
#[derive(Debug, Clone)]
pub struct Refiner {
    pub w_in: Tensor,
    pub b_in: Tensor,
    pub w_out: Tensor,
    pub b_out: Tensor,
    chunk: usize,
    dim: usize,
}

impl_params!(Refiner { w_in, b_in, w_out, b_out });

impl Refiner {
    pub fn new(rng: &mut Rng, dim: usize, chunk: usize) -> Result<Self> {
        if chunk == 0 || dim == 0 {
            return Err(Error::Contract("refiner chunk and width must be >= 1".into()));
        }
        let w = chunk * dim;
        Ok(Refiner {
            w_in: uniform(rng, &[w, w], 1.0 / libm::sqrtf(w as f32)),
            b_in: zeros_param(&[w]),
            w_out: zeros_param(&[w, w]),
            b_out: zeros_param(&[w]),
            chunk,
            dim,
        })
    }

    pub fn chunk(&self) -> usize {
        self.chunk
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn check(&self, rows: usize, cols: usize) -> Result<()> {
        if cols != self.dim {
            return Err(Error::shape("refiner", alloc::format!("input width {cols} vs {}", self.dim)));
        }
        if rows % self.chunk != 0 {
            return Err(Error::Contract(alloc::format!(
                "refiner input of {rows} frames is not a multiple of chunk {}",
                self.chunk
            )));
        }
        Ok(())
    }

    /// Strict forward: the frame count must be a multiple of the chunk.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let (n, d) = (tape.value(x).rows(), tape.value(x).cols());
        self.check(n, d)?;
        let w = self.chunk * d;
        let c = tape.reshape(x, &[n / self.chunk, w])?;
        let w_in = tape.param(&self.w_in);
        let b_in = tape.param(&self.b_in);
        let w_out = tape.param(&self.w_out);
        let b_out = tape.param(&self.b_out);
        let h = tape.matmul(c, w_in)?;
        let h = tape.add_row(h, b_in)?;
        let h = tape.gelu(h)?;
        let y = tape.matmul(h, w_out)?;
        let y = tape.add_row(y, b_out)?;
        let z = tape.add(c, y)?;
        tape.reshape(z, &[n, d])
    }

    /// Zero-pads to a whole number of chunks, transforms, and drops the
    /// padded frames.
    pub fn forward_padded(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let n = tape.value(x).rows();
        let padded = n.div_ceil(self.chunk) * self.chunk;
        if padded == n {
            return self.forward(tape, x);
        }
        let p = tape.pad_rows(x, padded)?;
        let z = self.forward(tape, p)?;
        tape.slice_rows(z, 0, n)
    }

    /// Plain strict transform of whole chunks.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let (n, d) = (x.rows(), x.cols());
        self.check(n, d)?;
        let w = self.chunk * d;
        let rows = n / self.chunk;
        let mut h = kernels::matmul(x.data(), self.w_in.data(), rows, w, w);
        kernels::add_row_bias(&mut h, self.b_in.data());
        let h: Vec<f32> = h.into_iter().map(kernels::gelu).collect();
        let mut y = kernels::matmul(&h, self.w_out.data(), rows, w, w);
        kernels::add_row_bias(&mut y, self.b_out.data());
        let y = Tensor::from_parts(alloc::vec![n, d], y);
        zip(x, &y, |p, q| p + q)
    }

    pub fn new_state(&self) -> RefinerState {
        RefinerState { pending: Vec::new() }
    }

    pub fn step(&self, state: &mut RefinerState, x: &Tensor) -> Result<Tensor> {
        if x.numel() > 0 && x.cols() != self.dim {
            return Err(Error::shape("refiner step", alloc::format!("input width {} vs {}", x.cols(), self.dim)));
        }
        state.pending.extend_from_slice(x.data());
        let whole = state.pending.len() / (self.chunk * self.dim) * self.chunk;
        let ready: Vec<f32> = state.pending.drain(..whole * self.dim).collect();
        self.apply(&Tensor::from_parts(alloc::vec![whole, self.dim], ready))
    }

    pub fn flush(&self, state: &mut RefinerState) -> Result<Tensor> {
        let n = state.pending.len() / self.dim;
        if n == 0 {
            return Ok(super::empty_rows(self.dim));
        }
        let mut data = core::mem::take(&mut state.pending);
        data.resize(self.chunk * self.dim, 0.0);
        let out = self.apply(&Tensor::from_parts(alloc::vec![self.chunk, self.dim], data))?;
        Ok(out.slice_rows(0, n))
    }
}

/// Frames of the current incomplete refiner chunk.
#[derive(Debug, Clone, Default)]
pub struct RefinerState {
    pending: Vec<f32>,
}

impl RefinerState {
    pub fn len_floats(&self) -> usize {
        self.pending.len()
    }
}
