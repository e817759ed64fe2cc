//! Analytic gradients against central finite differences for every tape op.
//! Shared by the autodiff tests and the acceptance run.
//!
//! Each op output `y` is reduced to `sum(y * r)` with fixed random `r`. The
//! analytic gradient comes from the tape; the numeric one perturbs each input
//! element by `±H` and reduces in f64. Agreement is measured norm-wise:
//! `|analytic - numeric| / max(|analytic|, |numeric|)`.

use focalstream_core::tensor::kernels::{AttnMask, ConvGeom, RelativeBuckets};
use focalstream_core::tensor::{AttnSpec, ConvSpec};
use focalstream_core::{Result, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f32 = 1e-3;
pub const TOL: f64 = 1e-3;

pub fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f32) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

fn forward(inputs: &[Tensor], f: &dyn Fn(&mut Tape, &[Var]) -> Result<Var>) -> (Tape, Vec<Var>, Var) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t)).collect();
    let y = f(&mut tape, &vars).unwrap();
    (tape, vars, y)
}

fn weighted(y: &[f32], r: &[f32]) -> f64 {
    y.iter().zip(r).map(|(&a, &b)| a as f64 * b as f64).sum()
}

/// Returns the worst norm-wise relative error over all inputs.
pub fn check_with(
    inputs: Vec<Tensor>,
    f: &dyn Fn(&mut Tape, &[Var]) -> Result<Var>,
    numeric_f: &dyn Fn(&mut Tape, &[Var]) -> Result<Var>,
) -> f64 {
    let inputs: Vec<Tensor> = inputs.into_iter().map(Tensor::trainable).collect();
    let (mut tape, vars, y) = forward(&inputs, f);
    let shape = tape.value(y).shape().to_vec();
    let r = rand_tensor(&mut ChaCha8Rng::seed_from_u64(99), &shape, 1.0);
    let rv = tape.constant(r.clone());
    let prod = tape.mul(y, rv).unwrap();
    let loss = tape.sum(prod).unwrap();
    let grads = tape.backward(loss).unwrap();

    let mut worst = 0.0f64;
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.wrt(*v).expect("input reached by the loss");
        let mut numeric = vec![0.0f64; inputs[i].numel()];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let eval = |delta: f32| {
                let mut shifted = inputs.clone();
                shifted[i].data_mut()[j] += delta;
                let (tape, _, y) = forward(&shifted, numeric_f);
                weighted(tape.value(y).data(), r.data())
            };
            *slot = (eval(H) - eval(-H)) / (2.0 * H as f64);
        }
        let diff: f64 = analytic.iter().zip(&numeric).map(|(&a, n)| (a as f64 - n).powi(2)).sum::<f64>().sqrt();
        let na: f64 = analytic.iter().map(|&a| (a as f64).powi(2)).sum::<f64>().sqrt();
        let nn: f64 = numeric.iter().map(|n| n.powi(2)).sum::<f64>().sqrt();
        let scale = na.max(nn);
        assert!(scale > 1e-6, "input {i} has a vanishing gradient");
        worst = worst.max(diff / scale);
    }
    worst
}

pub fn check(inputs: Vec<Tensor>, f: &dyn Fn(&mut Tape, &[Var]) -> Result<Var>) -> f64 {
    check_with(inputs, f, f)
}

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(7)
}

fn conv_case(geom: ConvGeom, frames: usize, pad_left: usize, pad_right: usize, bias: bool) -> f64 {
    let mut g = rng();
    let x = rand_tensor(&mut g, &[frames, geom.c_in], 1.0);
    let w = rand_tensor(&mut g, &[geom.c_out, geom.c_in / geom.groups, geom.kernel], 0.5);
    let spec = ConvSpec { geom, pad_left, pad_right };
    let mut inputs = vec![x, w];
    if bias {
        inputs.push(rand_tensor(&mut g, &[geom.c_out], 0.5));
    }
    check(inputs, &move |t, v| t.conv1d(v[0], v[1], v.get(2).copied(), spec))
}

fn attention_case(mask: AttnMask) -> f64 {
    let mut g = rng();
    let (frames, heads, hd, buckets) = (7, 2, 3, 8);
    let spec = AttnSpec { heads, head_dim: hd, mask, buckets: RelativeBuckets::new(buckets, 8) };
    let inputs = vec![
        rand_tensor(&mut g, &[frames, heads * hd], 1.0),
        rand_tensor(&mut g, &[frames, heads * hd], 1.0),
        rand_tensor(&mut g, &[frames, heads * hd], 1.0),
        rand_tensor(&mut g, &[heads, buckets], 0.5),
    ];
    check(inputs, &move |t, v| t.attention(v[0], v[1], v[2], v[3], &spec))
}

/// Worst relative error of every op, by name.
pub fn op_errors() -> Vec<(&'static str, f64)> {
    let mut g = rng();
    let mut out = Vec::new();

    let a = rand_tensor(&mut g, &[4, 3], 1.0);
    let b = rand_tensor(&mut g, &[3, 5], 1.0);
    out.push(("matmul", check(vec![a, b], &|t, v| t.matmul(v[0], v[1]))));

    let a = rand_tensor(&mut g, &[3, 4], 1.0);
    let b = rand_tensor(&mut g, &[3, 4], 1.0);
    out.push(("add", check(vec![a.clone(), b.clone()], &|t, v| t.add(v[0], v[1]))));
    out.push(("sub", check(vec![a.clone(), b.clone()], &|t, v| t.sub(v[0], v[1]))));
    out.push(("mul", check(vec![a.clone(), b.clone()], &|t, v| t.mul(v[0], v[1]))));
    out.push(("mse", check(vec![a.clone(), b], &|t, v| t.mse(v[0], v[1]))));
    out.push(("sum", check(vec![a.clone()], &|t, v| t.sum(v[0]))));
    out.push(("mean", check(vec![a], &|t, v| t.mean(v[0]))));

    let a = rand_tensor(&mut g, &[5, 3], 1.0);
    let row = rand_tensor(&mut g, &[3], 1.0);
    let col = rand_tensor(&mut g, &[5, 1], 1.0);
    out.push(("add_row", check(vec![a.clone(), row], &|t, v| t.add_row(v[0], v[1]))));
    out.push(("mul_col", check(vec![a.clone(), col], &|t, v| t.mul_col(v[0], v[1]))));
    out.push(("column", check(vec![a.clone()], &|t, v| t.column(v[0], 1))));
    out.push(("scale", check(vec![a], &|t, v| t.scale(v[0], -1.7))));

    let a = rand_tensor(&mut g, &[4, 5], 2.0);
    out.push(("gelu", check(vec![a.clone()], &|t, v| t.gelu(v[0]))));
    out.push(("sigmoid", check(vec![a.clone()], &|t, v| t.sigmoid(v[0]))));
    out.push(("tanh", check(vec![a], &|t, v| t.tanh(v[0]))));

    let x = rand_tensor(&mut g, &[4, 3], 2.0);
    let alpha = Tensor::scalar(0.7);
    let gamma = rand_tensor(&mut g, &[3], 1.5);
    let beta = rand_tensor(&mut g, &[3], 0.5);
    out.push(("dyt", check(vec![x, alpha, gamma, beta], &|t, v| t.dyt(v[0], v[1], v[2], v[3]))));

    let base = ConvGeom { c_in: 4, c_out: 6, kernel: 3, stride: 1, dilation: 1, groups: 1 };
    out.push(("conv causal", conv_case(base, 9, 2, 0, true)));
    out.push(("conv centered", conv_case(base, 9, 1, 1, false)));
    out.push(("conv strided", conv_case(ConvGeom { stride: 2, kernel: 4, ..base }, 12, 2, 0, true)));
    out.push(("conv dilated", conv_case(ConvGeom { dilation: 2, ..base }, 10, 4, 0, true)));
    out.push(("conv grouped", conv_case(ConvGeom { groups: 2, ..base }, 8, 2, 0, true)));
    let dw = ConvGeom { c_in: 4, c_out: 4, kernel: 5, stride: 1, dilation: 1, groups: 4 };
    out.push(("conv depthwise", conv_case(dw, 8, 4, 0, false)));

    out.push(("attention full", attention_case(AttnMask::full())));
    out.push(("attention chunked", attention_case(AttnMask::chunked(3, 2))));
    out.push(("attention chunk 1", attention_case(AttnMask::chunked(1, 4))));

    let a = rand_tensor(&mut g, &[4, 5], 1.0);
    out.push(("normalize_rows", check(vec![a.clone()], &|t, v| t.normalize_rows(v[0]))));
    out.push(("standardize_rows", check(vec![a], &|t, v| t.standardize_rows(v[0]))));

    // The hard forward is piecewise constant; its backward must equal the
    // derivative of the smooth normalization it stands in for.
    let z = rand_tensor(&mut g, &[5, 6], 1.0);
    out.push(("bsq_ste", check_with(vec![z], &|t, v| t.bsq_ste(v[0]), &|t, v| t.normalize_rows(v[0]))));

    let a = rand_tensor(&mut g, &[6, 2], 1.0);
    out.push(("reshape", check(vec![a.clone()], &|t, v| t.reshape(v[0], &[3, 4]))));
    out.push(("pad_rows", check(vec![a.clone()], &|t, v| t.pad_rows(v[0], 9))));
    out.push(("slice_rows", check(vec![a], &|t, v| t.slice_rows(v[0], 2, 5))));

    // A small residual block, to catch accumulation bugs across shared inputs.
    let x = rand_tensor(&mut g, &[4, 3], 1.0);
    let w = rand_tensor(&mut g, &[3, 3], 1.0);
    let b = rand_tensor(&mut g, &[3], 0.3);
    out.push((
        "composite",
        check(vec![x, w, b], &|t, v| {
            let h = t.matmul(v[0], v[1])?;
            let h = t.add_row(h, v[2])?;
            let h = t.gelu(h)?;
            let h = t.add(h, v[0])?;
            t.standardize_rows(h)
        }),
    ));
    out
}
