//! Slice-level numeric kernels shared by the gradient tape and the streaming
//! layer steps.
//!
//! Offline and streaming paths call the same kernels in the same accumulation
//! order, which is what makes streamed outputs bitwise equal to offline ones.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// `sqrt(2/pi)` used by the tanh form of GELU.
pub const GELU_SQRT_2_OVER_PI: f32 = 0.797_884_6;
/// Cubic coefficient of the tanh form of GELU.
pub const GELU_CUBIC: f32 = 0.044_715;

/// GELU, tanh approximation: `0.5 x (1 + tanh(0.7978845608 (x + 0.044715 x^3)))`.
#[inline]
pub fn gelu(x: f32) -> f32 {
    let inner = GELU_SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
    0.5 * x * (1.0 + math::tanh(inner))
}

#[inline]
pub fn gelu_grad(x: f32) -> f32 {
    let inner = GELU_SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
    let t = math::tanh(inner);
    let d_inner = GELU_SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner
}

#[inline]
pub fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + math::exp(-x))
    } else {
        let e = math::exp(x);
        e / (1.0 + e)
    }
}

/// Dynamic tanh: `gamma * tanh(alpha * x) + beta`.
#[inline]
pub fn dyt(x: f32, alpha: f32, gamma: f32, beta: f32) -> f32 {
    gamma * math::tanh(alpha * x) + beta
}

/// `out[m x n] = a[m x k] * b[k x n]`. Each output element accumulates over
/// `k` in ascending order regardless of `m`.
/// Variance floor of [`standardize_row`]; keeps silent frames at zero.
pub const STANDARDIZE_EPS: f32 = 1e-5;

/// Writes `(x - mean) / sqrt(var + eps)` of one row into `out` and returns
/// the reciprocal standard deviation.
pub fn standardize_row(x: &[f32], out: &mut [f32]) -> f32 {
    let n = x.len().max(1) as f32;
    let mean = x.iter().sum::<f32>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
    let inv = 1.0 / libm::sqrtf(var + STANDARDIZE_EPS);
    for (o, v) in out.iter_mut().zip(x) {
        *o = (v - mean) * inv;
    }
    inv
}

pub fn matmul(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut out = vec![0.0f32; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `g[m x n] * b^T` where `b` is `k x n`.
pub fn matmul_grad_a(g: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; m * k];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            out[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `a^T * g` where `a` is `m x k` and `g` is `m x n`.
pub fn matmul_grad_b(a: &[f32], g: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; k * n];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
    out
}

/// Adds `bias` to every row of `x`.
pub fn add_row_bias(x: &mut [f32], bias: &[f32]) {
    for row in x.chunks_exact_mut(bias.len()) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

/// Geometry of a grouped, strided, dilated 1-D convolution over time-major
/// `[frames, channels]` input. Weights are `[c_out, c_in / groups, kernel]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub groups: usize,
}

impl ConvGeom {
    pub fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.stride == 0 || self.dilation == 0 || self.groups == 0 {
            return Err(Error::Contract("conv kernel, stride, dilation and groups must be >= 1".into()));
        }
        if self.c_in % self.groups != 0 || self.c_out % self.groups != 0 {
            return Err(Error::shape("conv1d", "channels not divisible by groups"));
        }
        Ok(())
    }

    /// Input frames covered by one output frame.
    pub fn span(&self) -> usize {
        self.dilation * (self.kernel - 1) + 1
    }

    pub fn out_len(&self, padded_len: usize) -> usize {
        if padded_len < self.span() {
            0
        } else {
            (padded_len - self.span()) / self.stride + 1
        }
    }

    pub fn weight_len(&self) -> usize {
        self.c_out * (self.c_in / self.groups) * self.kernel
    }
}

/// Zero-pads a time-major `[t, c]` signal with `left` and `right` frames.
pub fn pad_frames(x: &[f32], channels: usize, left: usize, right: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(x.len() + (left + right) * channels);
    out.resize(left * channels, 0.0);
    out.extend_from_slice(x);
    out.resize(out.len() + right * channels, 0.0);
    out
}

/// Valid cross-correlation over an already padded signal.
pub fn conv1d_forward(padded: &[f32], w: &[f32], bias: Option<&[f32]>, g: &ConvGeom) -> Vec<f32> {
    let padded_len = padded.len() / g.c_in;
    let t_out = g.out_len(padded_len);
    let cig = g.c_in / g.groups;
    let cog = g.c_out / g.groups;
    let mut out = vec![0.0f32; t_out * g.c_out];
    for j in 0..t_out {
        let base = j * g.stride;
        for o in 0..g.c_out {
            let grp = o / cog;
            let mut acc = bias.map_or(0.0, |b| b[o]);
            let wbase = o * cig * g.kernel;
            for ci in 0..cig {
                let ch = grp * cig + ci;
                let wrow = &w[wbase + ci * g.kernel..wbase + (ci + 1) * g.kernel];
                for (k, &wv) in wrow.iter().enumerate() {
                    acc += wv * padded[(base + k * g.dilation) * g.c_in + ch];
                }
            }
            out[j * g.c_out + o] = acc;
        }
    }
    out
}

/// Gradients of [`conv1d_forward`] with respect to the padded input, the
/// weights and the bias.
pub fn conv1d_backward(padded: &[f32], w: &[f32], grad_out: &[f32], g: &ConvGeom) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let t_out = grad_out.len() / g.c_out;
    let cig = g.c_in / g.groups;
    let cog = g.c_out / g.groups;
    let mut d_in = vec![0.0f32; padded.len()];
    let mut d_w = vec![0.0f32; w.len()];
    let mut d_b = vec![0.0f32; g.c_out];
    for j in 0..t_out {
        let base = j * g.stride;
        for o in 0..g.c_out {
            let go = grad_out[j * g.c_out + o];
            if go == 0.0 {
                continue;
            }
            d_b[o] += go;
            let grp = o / cog;
            let wbase = o * cig * g.kernel;
            for ci in 0..cig {
                let ch = grp * cig + ci;
                for k in 0..g.kernel {
                    let idx = (base + k * g.dilation) * g.c_in + ch;
                    let widx = wbase + ci * g.kernel + k;
                    d_w[widx] += go * padded[idx];
                    d_in[idx] += go * w[widx];
                }
            }
        }
    }
    (d_in, d_w, d_b)
}

/// Log-spaced relative position buckets, split by direction: half of the
/// buckets cover keys at or before the query, half cover keys after it.
/// Distances below a quarter of the bucket count get their own bucket; the
/// rest are spaced logarithmically up to `max_distance`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeBuckets {
    table: Vec<u16>,
    half: usize,
}

impl RelativeBuckets {
    pub fn new(num_buckets: usize, max_distance: usize) -> Self {
        let half = (num_buckets / 2).max(1);
        let exact = (half / 2).max(1);
        let max_distance = max_distance.max(exact + 1);
        let mut table = Vec::with_capacity(max_distance + 1);
        for n in 0..=max_distance {
            let b = if n < exact {
                n
            } else {
                let ratio = math::ln64(n as f64 / exact as f64) / math::ln64(max_distance as f64 / exact as f64);
                let v = exact + (ratio * (half - exact) as f64) as usize;
                v.min(half - 1)
            };
            table.push(b as u16);
        }
        RelativeBuckets { table, half }
    }

    pub fn num_buckets(&self) -> usize {
        2 * self.half
    }

    /// Bucket for a key at `rel = key - query` frames from the query.
    #[inline]
    pub fn bucket(&self, rel: isize) -> usize {
        let n = rel.unsigned_abs().min(self.table.len() - 1);
        let b = self.table[n] as usize;
        if rel > 0 {
            self.half + b
        } else {
            b
        }
    }
}

/// Which keys a query may see: keys up to the end of the query's chunk
/// (`chunk = None` means no lookahead limit) and no further back than
/// `past` frames before the chunk start (`None` means unbounded).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttnMask {
    pub chunk: Option<usize>,
    pub past: Option<usize>,
}

impl AttnMask {
    pub const fn full() -> Self {
        AttnMask { chunk: None, past: None }
    }

    pub const fn chunked(chunk: usize, past: usize) -> Self {
        AttnMask { chunk: Some(chunk), past: Some(past) }
    }

    /// Inclusive key range for query `t` when `known` frames exist.
    #[inline]
    pub fn key_range(&self, t: usize, known: usize) -> (usize, usize) {
        let (start, end) = match self.chunk {
            Some(c) => {
                let s = (t / c) * c;
                (s, s + c - 1)
            }
            None => (t, usize::MAX),
        };
        let lo = match (self.chunk, self.past) {
            (_, None) => 0,
            (Some(_), Some(p)) => start.saturating_sub(p),
            (None, Some(p)) => t.saturating_sub(p),
        };
        (lo, end.min(known - 1))
    }
}

/// Multi-head attention over a window of keys.
///
/// Queries `q` cover absolute frames `q_start..q_start + nq`; keys and values
/// cover `k_start..k_start + nk`. `known` is the number of frames that exist in
/// the stream so far. Rows are `[heads * head_dim]` wide, head-major. When
/// `probs` is given the softmax weights are appended query-major, then head,
/// then key.
#[allow(clippy::too_many_arguments)]
pub fn attention_forward(
    q: &[f32],
    q_start: usize,
    k: &[f32],
    v: &[f32],
    k_start: usize,
    known: usize,
    bias: &[f32],
    buckets: &RelativeBuckets,
    heads: usize,
    head_dim: usize,
    mask: AttnMask,
    mut probs: Option<&mut Vec<f32>>,
) -> Vec<f32> {
    let d = heads * head_dim;
    let nq = q.len() / d;
    let nb = buckets.num_buckets();
    let scale = 1.0 / math::sqrt(head_dim as f32);
    let mut out = vec![0.0f32; nq * d];
    let mut scores: Vec<f32> = Vec::new();
    for i in 0..nq {
        let t = q_start + i;
        let (lo, hi) = mask.key_range(t, known);
        debug_assert!(lo >= k_start, "key window starts before cached keys");
        for h in 0..heads {
            let qh = &q[i * d + h * head_dim..i * d + (h + 1) * head_dim];
            scores.clear();
            let mut max = f32::NEG_INFINITY;
            for key in lo..=hi {
                let r = key - k_start;
                let kh = &k[r * d + h * head_dim..r * d + (h + 1) * head_dim];
                let dot: f32 = qh.iter().zip(kh).map(|(a, b)| a * b).sum();
                let s = dot * scale + bias[h * nb + buckets.bucket(key as isize - t as isize)];
                max = max.max(s);
                scores.push(s);
            }
            let mut sum = 0.0f32;
            for s in scores.iter_mut() {
                *s = math::exp(*s - max);
                sum += *s;
            }
            let inv = 1.0 / sum;
            let oh = &mut out[i * d + h * head_dim..i * d + (h + 1) * head_dim];
            for (idx, key) in (lo..=hi).enumerate() {
                let p = scores[idx] * inv;
                scores[idx] = p;
                let r = key - k_start;
                let vh = &v[r * d + h * head_dim..r * d + (h + 1) * head_dim];
                for (o, &vv) in oh.iter_mut().zip(vh) {
                    *o += p * vv;
                }
            }
            if let Some(p) = probs.as_deref_mut() {
                p.extend_from_slice(&scores);
            }
        }
    }
    out
}

/// Gradients of [`attention_forward`] for the offline case where queries and
/// keys are the same `t` frames starting at 0.
#[allow(clippy::too_many_arguments)]
pub fn attention_backward(
    q: &[f32],
    k: &[f32],
    v: &[f32],
    probs: &[f32],
    grad_out: &[f32],
    buckets: &RelativeBuckets,
    heads: usize,
    head_dim: usize,
    mask: AttnMask,
) -> (Vec<f32>, Vec<f32>, Vec<f32>, Vec<f32>) {
    let d = heads * head_dim;
    let t_len = q.len() / d;
    let nb = buckets.num_buckets();
    let scale = 1.0 / math::sqrt(head_dim as f32);
    let mut dq = vec![0.0f32; q.len()];
    let mut dk = vec![0.0f32; k.len()];
    let mut dv = vec![0.0f32; v.len()];
    let mut dbias = vec![0.0f32; heads * nb];
    let mut dp: Vec<f32> = Vec::new();
    let mut offset = 0;
    for t in 0..t_len {
        let (lo, hi) = mask.key_range(t, t_len);
        let n = hi - lo + 1;
        for h in 0..heads {
            let p = &probs[offset..offset + n];
            offset += n;
            let g = &grad_out[t * d + h * head_dim..t * d + (h + 1) * head_dim];
            dp.clear();
            let mut dot_pdp = 0.0f32;
            for (idx, key) in (lo..=hi).enumerate() {
                let vh = &v[key * d + h * head_dim..key * d + (h + 1) * head_dim];
                let dpi: f32 = g.iter().zip(vh).map(|(a, b)| a * b).sum();
                dot_pdp += p[idx] * dpi;
                dp.push(dpi);
                let dvh = &mut dv[key * d + h * head_dim..key * d + (h + 1) * head_dim];
                for (o, &gv) in dvh.iter_mut().zip(g) {
                    *o += p[idx] * gv;
                }
            }
            for (idx, key) in (lo..=hi).enumerate() {
                let ds = p[idx] * (dp[idx] - dot_pdp);
                if ds == 0.0 {
                    continue;
                }
                dbias[h * nb + buckets.bucket(key as isize - t as isize)] += ds;
                let qoff = t * d + h * head_dim;
                let koff = key * d + h * head_dim;
                for c in 0..head_dim {
                    dq[qoff + c] += ds * scale * k[koff + c];
                    dk[koff + c] += ds * scale * q[qoff + c];
                }
            }
        }
    }
    (dq, dk, dv, dbias)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_reference_values() {
        assert_eq!(gelu(0.0), 0.0);
        // 0.5 * (1 + tanh(0.7978845608 * 1.044715))
        assert!((gelu(1.0) - 0.841_192).abs() < 1e-5);
        assert!((gelu(10.0) - 10.0).abs() < 1e-4);
    }

    #[test]
    fn gelu_grad_matches_central_difference() {
        for &x in &[-3.0f32, -0.7, 0.0, 0.3, 1.2, 2.5] {
            let h = 1e-3f64;
            let f = |x: f64| {
                let inner = 0.797_884_560_8 * (x + 0.044_715 * x * x * x);
                0.5 * x * (1.0 + libm::tanh(inner))
            };
            let fd = (f(x as f64 + h) - f(x as f64 - h)) / (2.0 * h);
            assert!((gelu_grad(x) as f64 - fd).abs() < 1e-4, "x={x}");
        }
    }

    #[test]
    fn buckets_are_monotone_and_bounded() {
        let b = RelativeBuckets::new(32, 512);
        assert_eq!(b.bucket(0), 0);
        assert_eq!(b.bucket(-3), 3);
        assert_eq!(b.bucket(3), 16 + 3);
        let mut prev = 0;
        for n in 0..2000isize {
            let v = b.bucket(-n);
            assert!(v >= prev && v < 16);
            prev = v;
        }
        assert_eq!(b.bucket(-100_000), 15);
    }

    #[test]
    fn chunk_mask_ranges() {
        let m = AttnMask::chunked(4, 8);
        assert_eq!(m.key_range(0, 100), (0, 3));
        assert_eq!(m.key_range(3, 100), (0, 3));
        assert_eq!(m.key_range(4, 100), (0, 7));
        assert_eq!(m.key_range(13, 100), (4, 15));
        assert_eq!(m.key_range(13, 14), (4, 13));
        assert_eq!(AttnMask::full().key_range(2, 10), (0, 9));
    }

    #[test]
    fn conv_output_length() {
        let g = ConvGeom { c_in: 1, c_out: 1, kernel: 10, stride: 5, dilation: 1, groups: 1 };
        // causal padding span - stride gives floor(t / stride) outputs
        assert_eq!(g.out_len(23 + 5), 4);
        assert_eq!(g.out_len(4 + 5), 0);
    }
}
