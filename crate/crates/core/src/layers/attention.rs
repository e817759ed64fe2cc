use alloc::vec::Vec;

use super::{empty_rows, map, uniform, zip, Dyt, Linear, Rng};
use crate::error::{Error, Result};
use crate::params::impl_params;
use crate::tensor::kernels::{self, AttnMask, RelativeBuckets};
use crate::tensor::{AttnSpec, Tape, Tensor, Var};

/// Pre-normalized multi-head self-attention with gated output, learned
/// relative-position bias and a residual connection.
///
/// The mask decides the context: [`AttnMask::full`] for the full-context
/// teacher, [`AttnMask::chunked`] for streaming, where a query sees its own
/// chunk and a bounded number of past frames.
#[derive(Debug, Clone)]
pub struct ChunkedAttention {
    pub norm: Dyt,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub gate: Linear,
    pub out: Linear,
    pub rel_bias: Tensor,
    spec: AttnSpec,
}

impl_params!(ChunkedAttention { norm, q, k, v, gate, out, rel_bias });

impl ChunkedAttention {
    pub fn new(
        rng: &mut Rng,
        dim: usize,
        heads: usize,
        buckets: usize,
        max_distance: usize,
        mask: AttnMask,
    ) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::Contract(alloc::format!("width {dim} not divisible into {heads} heads")));
        }
        if mask.chunk == Some(0) {
            return Err(Error::Contract("attention chunk must be >= 1".into()));
        }
        let buckets = RelativeBuckets::new(buckets, max_distance);
        Ok(ChunkedAttention {
            norm: Dyt::new(dim),
            q: Linear::new(rng, dim, dim),
            k: Linear::new(rng, dim, dim),
            v: Linear::new(rng, dim, dim),
            gate: Linear::new(rng, dim, dim),
            out: Linear::new(rng, dim, dim),
            rel_bias: uniform(rng, &[heads, buckets.num_buckets()], 0.02),
            spec: AttnSpec { heads, head_dim: dim / heads, mask, buckets },
        })
    }

    pub fn mask(&self) -> AttnMask {
        self.spec.mask
    }

    pub fn set_mask(&mut self, mask: AttnMask) {
        self.spec.mask = mask;
    }

    pub fn dim(&self) -> usize {
        self.spec.heads * self.spec.head_dim
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let h = self.norm.forward(tape, x)?;
        let q = self.q.forward(tape, h)?;
        let k = self.k.forward(tape, h)?;
        let v = self.v.forward(tape, h)?;
        let bias = tape.param(&self.rel_bias);
        let a = tape.attention(q, k, v, bias, &self.spec)?;
        let g = self.gate.forward(tape, h)?;
        let g = tape.sigmoid(g)?;
        let a = tape.mul(a, g)?;
        let y = self.out.forward(tape, a)?;
        tape.add(x, y)
    }

    pub fn new_state(&self) -> Result<AttnWindowState> {
        if self.spec.mask.chunk.is_none() {
            return Err(Error::Contract("full-context attention cannot stream".into()));
        }
        Ok(AttnWindowState { pending: Vec::new(), keys: Vec::new(), values: Vec::new(), next_frame: 0 })
    }

    /// Buffers input frames and emits outputs for every completed chunk.
    pub fn step(&self, state: &mut AttnWindowState, x: &Tensor) -> Result<Tensor> {
        let d = self.dim();
        if x.numel() > 0 && x.cols() != d {
            return Err(Error::shape("attention step", alloc::format!("input width {} vs {d}", x.cols())));
        }
        let chunk =
            self.spec.mask.chunk.ok_or_else(|| Error::Contract("full-context attention cannot stream".into()))?;
        state.pending.extend_from_slice(x.data());
        let mut parts = Vec::new();
        while state.pending.len() >= chunk * d {
            parts.push(self.process(state, chunk)?);
        }
        Tensor::concat_rows(&parts, d)
    }

    /// Emits outputs for the buffered partial chunk, if any.
    pub fn flush(&self, state: &mut AttnWindowState) -> Result<Tensor> {
        let d = self.dim();
        let rows = state.pending.len() / d;
        if rows == 0 {
            return Ok(empty_rows(d));
        }
        self.process(state, rows)
    }

    fn process(&self, state: &mut AttnWindowState, rows: usize) -> Result<Tensor> {
        let d = self.dim();
        let x = Tensor::from_parts(alloc::vec![rows, d], state.pending[..rows * d].to_vec());
        let h = self.norm.apply(&x)?;
        let q = self.q.apply(&h)?;
        let k = self.k.apply(&h)?;
        let v = self.v.apply(&h)?;
        let cached = state.keys.len() / d;
        state.keys.extend_from_slice(k.data());
        state.values.extend_from_slice(v.data());
        let a = kernels::attention_forward(
            q.data(),
            state.next_frame,
            &state.keys,
            &state.values,
            state.next_frame - cached,
            state.next_frame + rows,
            self.rel_bias.data(),
            &self.spec.buckets,
            self.spec.heads,
            self.spec.head_dim,
            self.spec.mask,
            None,
        );
        let a = Tensor::from_parts(alloc::vec![rows, d], a);
        let g = map(&self.gate.apply(&h)?, kernels::sigmoid);
        let y = self.out.apply(&zip(&a, &g, |p, q| p * q)?)?;
        let out = zip(&x, &y, |p, q| p + q)?;
        if !out.is_finite() {
            return Err(Error::NonFinite("attention"));
        }
        state.next_frame += rows;
        state.pending.drain(..rows * d);
        if let Some(past) = self.spec.mask.past {
            let total = state.keys.len() / d;
            if total > past {
                let drop = (total - past) * d;
                state.keys.drain(..drop);
                state.values.drain(..drop);
            }
        }
        Ok(out)
    }
}

/// Streaming attention state: raw frames of the current partial chunk and the
/// keys and values of at most `past` earlier frames.
#[derive(Debug, Clone)]
pub struct AttnWindowState {
    pending: Vec<f32>,
    keys: Vec<f32>,
    values: Vec<f32>,
    next_frame: usize,
}

impl AttnWindowState {
    pub fn cached_frames(&self, dim: usize) -> usize {
        self.keys.len() / dim.max(1)
    }

    pub fn pending_frames(&self, dim: usize) -> usize {
        self.pending.len() / dim.max(1)
    }

    pub fn frames_seen(&self) -> usize {
        self.next_frame
    }

    pub fn len_floats(&self) -> usize {
        self.pending.len() + self.keys.len() + self.values.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{run_offline, seeded_rng};

    fn signal(t: usize, d: usize) -> Tensor {
        Tensor::matrix(t, d, (0..t * d).map(|i| ((i * 7 % 13) as f32 - 6.0) * 0.2).collect()).unwrap()
    }

    #[test]
    fn zero_value_projection_leaves_residual() {
        let mut rng = seeded_rng(0);
        let mut attn = ChunkedAttention::new(&mut rng, 8, 2, 8, 16, AttnMask::full()).unwrap();
        attn.v.weight.data_mut().fill(0.0);
        attn.out.bias.data_mut().fill(0.0);
        let x = signal(5, 8);
        let y = run_offline(&x, |t, v| attn.forward(t, v)).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn chunked_streaming_is_bitwise_offline() {
        let mut rng = seeded_rng(1);
        let attn = ChunkedAttention::new(&mut rng, 8, 2, 8, 16, AttnMask::chunked(3, 5)).unwrap();
        let x = signal(23, 8);
        let want = run_offline(&x, |t, v| attn.forward(t, v)).unwrap();
        for split in [1usize, 2, 3, 4, 23] {
            let mut st = attn.new_state().unwrap();
            let mut parts = Vec::new();
            let mut s = 0;
            while s < 23 {
                let e = (s + split).min(23);
                parts.push(attn.step(&mut st, &x.slice_rows(s, e)).unwrap());
                assert!(st.cached_frames(8) <= 5);
                s = e;
            }
            parts.push(attn.flush(&mut st).unwrap());
            let got = Tensor::concat_rows(&parts, 8).unwrap();
            assert_eq!(got.data(), want.data(), "split {split}");
        }
    }

    #[test]
    fn outputs_wait_for_chunk_end() {
        let mut rng = seeded_rng(2);
        let attn = ChunkedAttention::new(&mut rng, 4, 1, 8, 16, AttnMask::chunked(4, 8)).unwrap();
        let mut st = attn.new_state().unwrap();
        assert_eq!(attn.step(&mut st, &signal(3, 4)).unwrap().rows(), 0);
        assert_eq!(attn.step(&mut st, &signal(1, 4)).unwrap().rows(), 4);
    }

    #[test]
    fn full_mask_refuses_to_stream() {
        let mut rng = seeded_rng(3);
        let attn = ChunkedAttention::new(&mut rng, 4, 1, 8, 16, AttnMask::full()).unwrap();
        assert!(attn.new_state().is_err());
    }
}
