use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{self, AttnMask, ConvGeom, RelativeBuckets};
use super::{Tensor, TensorKey};
use crate::error::{Error, Result};
use crate::math;
use crate::params::{visit_params_mut, Parameters};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Var(usize);

/// Convolution geometry plus explicit zero padding in frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub geom: ConvGeom,
    pub pad_left: usize,
    pub pad_right: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttnSpec {
    pub heads: usize,
    pub head_dim: usize,
    pub mask: AttnMask,
    pub buckets: RelativeBuckets,
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    MulCol(Var, Var),
    Column(Var, usize),
    Scale(Var, f32),
    Gelu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Dyt {
        x: Var,
        alpha: Var,
        gamma: Var,
        beta: Var,
    },
    Conv {
        x: Var,
        w: Var,
        bias: Option<Var>,
        spec: ConvSpec,
        padded: Vec<f32>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        bias: Var,
        spec: Box<AttnSpec>,
        probs: Vec<f32>,
    },
    /// Row normalization backward; used both by `normalize_rows` and by the
    /// straight-through quantizer whose forward value differs.
    RowNormalize {
        z: Var,
        norms: Vec<f32>,
        units: Vec<f32>,
    },
    Standardize {
        x: Var,
        inv_std: Vec<f32>,
    },
    Reshape(Var),
    PadRows(Var),
    SliceRows(Var, usize),
    Mse(Var, Var),
    Sum(Var),
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Records operations in execution order so that [`Tape::backward`] can replay
/// them in reverse. One tape per forward pass; tapes are independent.
pub struct Tape {
    nodes: Vec<Node>,
    bound: BTreeMap<TensorKey, Var>,
    no_grad: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn matrix_dims(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), bound: BTreeMap::new(), no_grad: false }
    }

    /// A tape that records values only; nothing on it requires gradients.
    pub fn inference() -> Self {
        Tape { no_grad: true, ..Self::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records a value that never receives gradients.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node { value: t, requires_grad: false, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    /// Binds a parameter. The same tensor instance maps to one leaf per tape,
    /// so repeated use accumulates its gradient.
    pub fn param(&mut self, t: &Tensor) -> Var {
        if let Some(&v) = self.bound.get(&t.key()) {
            return v;
        }
        let requires_grad = t.requires_grad && !self.no_grad;
        let value = Tensor::from_parts(t.shape().to_vec(), t.data().to_vec());
        self.nodes.push(Node { value, requires_grad, op: Op::Leaf });
        let v = Var(self.nodes.len() - 1);
        self.bound.insert(t.key(), v);
        v
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        let requires_grad = !self.no_grad && inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node { value, requires_grad, op });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = matrix_dims(self.value(a));
        let (k2, n) = matrix_dims(self.value(b));
        if k != k2 {
            return Err(Error::shape("matmul", format!("[{m}x{k}] * [{k2}x{n}]")));
        }
        let out = kernels::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push("matmul", Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b), &[a, b])
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn zip_with(&mut self, name: &'static str, a: Var, b: Var, op: Op, f: impl Fn(f32, f32) -> f32) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let va = self.value(a);
        let data = va.data().iter().zip(self.value(b).data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::from_parts(va.shape().to_vec(), data);
        self.push(name, value, op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Adds a `[cols]` bias to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let va = self.value(a);
        let cols = va.cols();
        if self.value(bias).numel() != cols {
            return Err(Error::shape("add_row", format!("bias {} vs cols {}", self.value(bias).numel(), cols)));
        }
        let mut data = va.data().to_vec();
        kernels::add_row_bias(&mut data, self.value(bias).data());
        let value = Tensor::from_parts(va.shape().to_vec(), data);
        self.push("add_row", value, Op::AddRow(a, bias), &[a, bias])
    }

    /// Scales row `i` of `a` by `col[i]`; `col` is `[rows, 1]`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (m, n) = matrix_dims(self.value(a));
        if self.value(col).numel() != m {
            return Err(Error::shape("mul_col", format!("{} rows vs {}", m, self.value(col).numel())));
        }
        let c = self.value(col).data();
        let mut data = self.value(a).data().to_vec();
        for (row, &s) in data.chunks_exact_mut(n.max(1)).zip(c) {
            row.iter_mut().for_each(|v| *v *= s);
        }
        let value = Tensor::from_parts(vec![m, n], data);
        self.push("mul_col", value, Op::MulCol(a, col), &[a, col])
    }

    /// Column `j` of a matrix as `[rows, 1]`.
    pub fn column(&mut self, a: Var, j: usize) -> Result<Var> {
        let (m, n) = matrix_dims(self.value(a));
        if j >= n {
            return Err(Error::shape("column", format!("column {j} of {n}")));
        }
        let data = (0..m).map(|i| self.value(a).data()[i * n + j]).collect();
        self.push("column", Tensor::from_parts(vec![m, 1], data), Op::Column(a, j), &[a])
    }

    pub fn scale(&mut self, a: Var, s: f32) -> Result<Var> {
        let va = self.value(a);
        let value = Tensor::from_parts(va.shape().to_vec(), va.data().iter().map(|v| v * s).collect());
        self.push("scale", value, Op::Scale(a, s), &[a])
    }

    fn map(&mut self, name: &'static str, a: Var, op: Op, f: impl Fn(f32) -> f32) -> Result<Var> {
        let va = self.value(a);
        let value = Tensor::from_parts(va.shape().to_vec(), va.data().iter().map(|&v| f(v)).collect());
        self.push(name, value, op, &[a])
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        self.map("gelu", a, Op::Gelu(a), kernels::gelu)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map("sigmoid", a, Op::Sigmoid(a), kernels::sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.map("tanh", a, Op::Tanh(a), math::tanh)
    }

    /// `gamma * tanh(alpha * x) + beta` with scalar `alpha` and per-column
    /// `gamma`, `beta`.
    pub fn dyt(&mut self, x: Var, alpha: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (_, n) = matrix_dims(self.value(x));
        if self.value(alpha).numel() != 1 || self.value(gamma).numel() != n || self.value(beta).numel() != n {
            return Err(Error::shape("dyt", format!("expected scalar alpha and [{n}] gamma/beta")));
        }
        let a = self.value(alpha).data()[0];
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let vx = self.value(x);
        let mut data = Vec::with_capacity(vx.numel());
        for row in vx.data().chunks_exact(n) {
            for j in 0..n {
                data.push(kernels::dyt(row[j], a, g[j], b[j]));
            }
        }
        let value = Tensor::from_parts(vx.shape().to_vec(), data);
        self.push("dyt", value, Op::Dyt { x, alpha, gamma, beta }, &[x, alpha, gamma, beta])
    }

    /// Time-major convolution: `x` is `[frames, c_in]`, `w` is
    /// `[c_out, c_in / groups, kernel]`, the result is `[frames_out, c_out]`.
    pub fn conv1d(&mut self, x: Var, w: Var, bias: Option<Var>, spec: ConvSpec) -> Result<Var> {
        let g = spec.geom;
        g.validate()?;
        let (t, c) = matrix_dims(self.value(x));
        if c != g.c_in {
            return Err(Error::shape("conv1d", format!("input has {c} channels, kernel expects {}", g.c_in)));
        }
        if self.value(w).numel() != g.weight_len() {
            return Err(Error::shape(
                "conv1d",
                format!("weight holds {} values, geometry needs {}", self.value(w).numel(), g.weight_len()),
            ));
        }
        if let Some(b) = bias {
            if self.value(b).numel() != g.c_out {
                return Err(Error::shape("conv1d", "bias length differs from output channels"));
            }
        }
        let padded = kernels::pad_frames(self.value(x).data(), c, spec.pad_left, spec.pad_right);
        let out = kernels::conv1d_forward(&padded, self.value(w).data(), bias.map(|b| self.value(b).data()), &g);
        let t_out = g.out_len(t + spec.pad_left + spec.pad_right);
        let value = Tensor::from_parts(vec![t_out, g.c_out], out);
        let mut inputs = vec![x, w];
        inputs.extend(bias);
        self.push("conv1d", value, Op::Conv { x, w, bias, spec, padded }, &inputs)
    }

    /// Masked multi-head attention with a learned relative-position bias table
    /// `[heads, buckets]`. `q`, `k`, `v` are `[frames, heads * head_dim]`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, bias: Var, spec: &AttnSpec) -> Result<Var> {
        self.same_shape("attention", q, k)?;
        self.same_shape("attention", q, v)?;
        let (t, d) = matrix_dims(self.value(q));
        if d != spec.heads * spec.head_dim {
            return Err(Error::shape("attention", format!("width {d} vs {} heads x {}", spec.heads, spec.head_dim)));
        }
        if self.value(bias).numel() != spec.heads * spec.buckets.num_buckets() {
            return Err(Error::shape("attention", "relative bias table size"));
        }
        if t == 0 {
            return self.push("attention", Tensor::zeros(&[0, d]), Op::Leaf, &[]);
        }
        let need = !self.no_grad && [q, k, v, bias].iter().any(|x| self.requires_grad(*x));
        let mut probs = Vec::new();
        let out = kernels::attention_forward(
            self.value(q).data(),
            0,
            self.value(k).data(),
            self.value(v).data(),
            0,
            t,
            self.value(bias).data(),
            &spec.buckets,
            spec.heads,
            spec.head_dim,
            spec.mask,
            need.then_some(&mut probs),
        );
        let value = Tensor::from_parts(vec![t, d], out);
        let op = Op::Attention { q, k, v, bias, spec: Box::new(spec.clone()), probs };
        self.push("attention", value, op, &[q, k, v, bias])
    }

    fn row_norms(&self, z: Var) -> Result<(Vec<f32>, Vec<f32>)> {
        let (m, n) = matrix_dims(self.value(z));
        let data = self.value(z).data();
        let mut norms = Vec::with_capacity(m);
        let mut units = Vec::with_capacity(m * n);
        for row in data.chunks_exact(n.max(1)).take(m) {
            let norm = math::sqrt(row.iter().map(|v| v * v).sum::<f32>());
            if norm == 0.0 {
                return Err(Error::Degenerate("zero latent row"));
            }
            norms.push(norm);
            units.extend(row.iter().map(|v| v / norm));
        }
        Ok((norms, units))
    }

    /// L2-normalizes each row.
    pub fn normalize_rows(&mut self, z: Var) -> Result<Var> {
        let (norms, units) = self.row_norms(z)?;
        let value = Tensor::from_parts(self.value(z).shape().to_vec(), units.clone());
        self.push("normalize_rows", value, Op::RowNormalize { z, norms, units }, &[z])
    }

    /// Per-row standardization to zero mean and unit variance, without affine
    /// parameters.
    pub fn standardize_rows(&mut self, x: Var) -> Result<Var> {
        let (m, n) = matrix_dims(self.value(x));
        let mut out = vec![0.0f32; m * n];
        let mut inv_std = Vec::with_capacity(m);
        for (src, dst) in self.value(x).data().chunks_exact(n.max(1)).zip(out.chunks_exact_mut(n.max(1))) {
            inv_std.push(kernels::standardize_row(src, dst));
        }
        let value = Tensor::from_parts(self.value(x).shape().to_vec(), out);
        self.push("standardize_rows", value, Op::Standardize { x, inv_std }, &[x])
    }

    /// Binary spherical quantization with a straight-through backward: the
    /// forward value is `sign(z) / sqrt(D)` per row (`sign(0) = +1`), the
    /// backward is that of row normalization.
    pub fn bsq_ste(&mut self, z: Var) -> Result<Var> {
        let (norms, units) = self.row_norms(z)?;
        let (_, n) = matrix_dims(self.value(z));
        let mag = 1.0 / math::sqrt(n as f32);
        let codes = self.value(z).data().iter().map(|&v| if v >= 0.0 { mag } else { -mag }).collect();
        let value = Tensor::from_parts(self.value(z).shape().to_vec(), codes);
        self.push("bsq_ste", value, Op::RowNormalize { z, norms, units }, &[z])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape)?;
        self.push("reshape", value, Op::Reshape(a), &[a])
    }

    /// Appends zero rows so that the result has `rows` rows.
    pub fn pad_rows(&mut self, a: Var, rows: usize) -> Result<Var> {
        let (m, n) = matrix_dims(self.value(a));
        if rows < m {
            return Err(Error::shape("pad_rows", format!("{rows} < {m}")));
        }
        let mut data = self.value(a).data().to_vec();
        data.resize(rows * n, 0.0);
        self.push("pad_rows", Tensor::from_parts(vec![rows, n], data), Op::PadRows(a), &[a])
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (m, _) = matrix_dims(self.value(a));
        if start > end || end > m {
            return Err(Error::shape("slice_rows", format!("{start}..{end} of {m}")));
        }
        let value = self.value(a).slice_rows(start, end);
        self.push("slice_rows", value, Op::SliceRows(a, start), &[a])
    }

    /// Mean of squared differences.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mse", a, b)?;
        let (da, db) = (self.value(a).data(), self.value(b).data());
        if da.is_empty() {
            return Err(Error::shape("mse", "empty operands"));
        }
        let s: f32 = da.iter().zip(db).map(|(x, y)| (x - y) * (x - y)).sum();
        let value = Tensor::scalar(s / da.len() as f32);
        self.push("mse", value, Op::Mse(a, b), &[a, b])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s: f32 = self.value(a).data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).numel().max(1) as f32;
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n)
    }

    /// Reverse-mode sweep from a scalar `loss`, visiting nodes in exact
    /// reverse recording order.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f32>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads, bound: self.bound.clone() })
    }

    fn acc(&self, grads: &mut [Option<Vec<f32>>], v: Var, contrib: Vec<f32>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.iter_mut().zip(&contrib).for_each(|(e, c)| *e += c),
            slot @ None => *slot = Some(contrib),
        }
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backprop(&self, node: &Node, g: &[f32], grads: &mut [Option<Vec<f32>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = matrix_dims(self.value(*a));
                let n = self.value(*b).cols();
                if self.needs(*a) {
                    self.acc(grads, *a, kernels::matmul_grad_a(g, self.value(*b).data(), m, k, n));
                }
                if self.needs(*b) {
                    self.acc(grads, *b, kernels::matmul_grad_b(self.value(*a).data(), g, m, k, n));
                }
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, g.to_vec());
                self.acc(grads, *b, g.to_vec());
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, g.to_vec());
                self.acc(grads, *b, g.iter().map(|v| -v).collect());
            }
            Op::AddRow(a, bias) => {
                self.acc(grads, *a, g.to_vec());
                if self.needs(*bias) {
                    let n = self.value(*bias).numel();
                    let mut db = vec![0.0f32; n];
                    for row in g.chunks_exact(n) {
                        db.iter_mut().zip(row).for_each(|(d, r)| *d += r);
                    }
                    self.acc(grads, *bias, db);
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                if self.needs(*a) {
                    self.acc(grads, *a, g.iter().zip(vb).map(|(x, y)| x * y).collect());
                }
                if self.needs(*b) {
                    self.acc(grads, *b, g.iter().zip(va).map(|(x, y)| x * y).collect());
                }
            }
            Op::MulCol(a, col) => {
                let (m, n) = matrix_dims(self.value(*a));
                let c = self.value(*col).data();
                let va = self.value(*a).data();
                if self.needs(*a) {
                    let mut da = g.to_vec();
                    for (row, &s) in da.chunks_exact_mut(n.max(1)).zip(c) {
                        row.iter_mut().for_each(|v| *v *= s);
                    }
                    self.acc(grads, *a, da);
                }
                if self.needs(*col) {
                    let dc = (0..m).map(|i| (0..n).map(|j| g[i * n + j] * va[i * n + j]).sum()).collect();
                    self.acc(grads, *col, dc);
                }
            }
            Op::Column(a, j) => {
                let (m, n) = matrix_dims(self.value(*a));
                let mut da = vec![0.0f32; m * n];
                for i in 0..m {
                    da[i * n + j] = g[i];
                }
                self.acc(grads, *a, da);
            }
            Op::Scale(a, s) => self.acc(grads, *a, g.iter().map(|v| v * s).collect()),
            Op::Gelu(a) => {
                let va = self.value(*a).data();
                self.acc(grads, *a, g.iter().zip(va).map(|(gv, &x)| gv * kernels::gelu_grad(x)).collect());
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                self.acc(grads, *a, g.iter().zip(y).map(|(gv, &s)| gv * s * (1.0 - s)).collect());
            }
            Op::Tanh(a) => {
                let y = node.value.data();
                self.acc(grads, *a, g.iter().zip(y).map(|(gv, &t)| gv * (1.0 - t * t)).collect());
            }
            Op::Dyt { x, alpha, gamma, beta } => {
                let vx = self.value(*x).data();
                let n = self.value(*gamma).numel();
                let a = self.value(*alpha).data()[0];
                let gm = self.value(*gamma).data();
                let mut dx = vec![0.0f32; vx.len()];
                let mut da = 0.0f32;
                let mut dg = vec![0.0f32; n];
                let mut dbeta = vec![0.0f32; n];
                for (idx, (&xv, &gv)) in vx.iter().zip(g).enumerate() {
                    let j = idx % n;
                    let t = math::tanh(a * xv);
                    let sech2 = 1.0 - t * t;
                    dx[idx] = gv * gm[j] * a * sech2;
                    da += gv * gm[j] * xv * sech2;
                    dg[j] += gv * t;
                    dbeta[j] += gv;
                }
                self.acc(grads, *x, dx);
                self.acc(grads, *alpha, vec![da]);
                self.acc(grads, *gamma, dg);
                self.acc(grads, *beta, dbeta);
            }
            Op::Conv { x, w, bias, spec, padded } => {
                let (d_pad, d_w, d_b) = kernels::conv1d_backward(padded, self.value(*w).data(), g, &spec.geom);
                if self.needs(*x) {
                    let c = spec.geom.c_in;
                    let t = self.value(*x).rows();
                    let dx = d_pad[spec.pad_left * c..(spec.pad_left + t) * c].to_vec();
                    self.acc(grads, *x, dx);
                }
                self.acc(grads, *w, d_w);
                if let Some(b) = bias {
                    self.acc(grads, *b, d_b);
                }
            }
            Op::Attention { q, k, v, bias, spec, probs } => {
                let (dq, dk, dv, db) = kernels::attention_backward(
                    self.value(*q).data(),
                    self.value(*k).data(),
                    self.value(*v).data(),
                    probs,
                    g,
                    &spec.buckets,
                    spec.heads,
                    spec.head_dim,
                    spec.mask,
                );
                self.acc(grads, *q, dq);
                self.acc(grads, *k, dk);
                self.acc(grads, *v, dv);
                self.acc(grads, *bias, db);
            }
            Op::RowNormalize { z, norms, units } => {
                let n = self.value(*z).cols();
                let mut dz = vec![0.0f32; units.len()];
                for (r, &norm) in norms.iter().enumerate() {
                    let u = &units[r * n..(r + 1) * n];
                    let gr = &g[r * n..(r + 1) * n];
                    let dot: f32 = u.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for c in 0..n {
                        dz[r * n + c] = (gr[c] - u[c] * dot) / norm;
                    }
                }
                self.acc(grads, *z, dz);
            }
            Op::Standardize { x, inv_std } => {
                let n = node.value.cols();
                let y = node.value.data();
                let mut dx = vec![0.0f32; y.len()];
                for (r, &inv) in inv_std.iter().enumerate() {
                    let yr = &y[r * n..(r + 1) * n];
                    let gr = &g[r * n..(r + 1) * n];
                    let mean_g = gr.iter().sum::<f32>() / n as f32;
                    let mean_gy = yr.iter().zip(gr).map(|(a, b)| a * b).sum::<f32>() / n as f32;
                    for c in 0..n {
                        dx[r * n + c] = inv * (gr[c] - mean_g - yr[c] * mean_gy);
                    }
                }
                self.acc(grads, *x, dx);
            }
            Op::Reshape(a) => self.acc(grads, *a, g.to_vec()),
            Op::PadRows(a) => {
                let n = self.value(*a).numel();
                self.acc(grads, *a, g[..n].to_vec());
            }
            Op::SliceRows(a, start) => {
                let va = self.value(*a);
                let c = va.cols();
                let mut da = vec![0.0f32; va.numel()];
                da[start * c..start * c + g.len()].copy_from_slice(g);
                self.acc(grads, *a, da);
            }
            Op::Mse(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                let s = 2.0 * g[0] / va.len() as f32;
                let da: Vec<f32> = va.iter().zip(vb).map(|(x, y)| s * (x - y)).collect();
                if self.needs(*b) {
                    self.acc(grads, *b, da.iter().map(|v| -v).collect());
                }
                self.acc(grads, *a, da);
            }
            Op::Sum(a) => {
                let n = self.value(*a).numel();
                self.acc(grads, *a, vec![g[0]; n]);
            }
        }
    }
}

/// Result of [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Vec<f32>>>,
    bound: BTreeMap<TensorKey, Var>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, if `v` requires one and is
    /// reachable from the loss.
    pub fn wrt(&self, v: Var) -> Option<&[f32]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Writes gradients into every trainable parameter of `model` that was
    /// bound on the tape and reached by the loss. Frozen or unreached
    /// parameters keep `grad = None`.
    pub fn assign<P: Parameters + ?Sized>(&self, model: &mut P) {
        visit_params_mut(model, &mut |_, t| {
            if !t.requires_grad {
                t.grad = None;
                return;
            }
            t.grad = self.bound.get(&t.key()).and_then(|v| self.wrt(*v)).map(|g| g.to_vec());
        });
    }
}
