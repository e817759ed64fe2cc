//! Future input never reaches earlier outputs beyond each module's
//! documented lookahead. Every check perturbs everything from a random
//! position onward and compares outputs bitwise. Checks panic on a leak.

use focalstream_core::codec::{Codec, CodecConfig};
use focalstream_core::layers::{
    run_offline, seeded_rng, ChunkedAttention, Conv1d, ConvNextBlock, FocalBlock, FocalGeometry, Padding, Refiner,
};
use focalstream_core::quantizer::TokenIndex;
use focalstream_core::tensor::kernels::AttnMask;
use focalstream_core::{AudioBuffer, Result, Tape, Tensor, TokenStream, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TRIALS: usize = 12;

fn random_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::new(&[rows, cols], (0..rows * cols).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).unwrap()
}

fn perturb_from(x: &Tensor, row: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let mut y = x.clone();
    let c = x.cols();
    for v in &mut y.data_mut()[row * c..] {
        *v += rng.gen_range(0.5f32..1.5);
    }
    y
}

/// Checks rows before `first_affected(p)` are bitwise identical and that the
/// first row allowed to change does change.
fn check_layer(
    name: &str,
    frames: usize,
    dim: usize,
    f: &dyn Fn(&mut Tape, Var) -> Result<Var>,
    first_affected: &dyn Fn(usize) -> usize,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(name.len() as u64 * 31);
    for _ in 0..TRIALS {
        let x = random_rows(&mut rng, frames, dim);
        let p = rng.gen_range(1..frames);
        let x2 = perturb_from(&x, p, &mut rng);
        let y = run_offline(&x, f).unwrap();
        let y2 = run_offline(&x2, f).unwrap();
        let first = first_affected(p);
        let c = y.cols();
        assert_eq!(&y.data()[..first * c], &y2.data()[..first * c], "{name}: rows before {first} moved (p = {p})");
        assert_ne!(y.row(first), y2.row(first), "{name}: row {first} ignores its input (p = {p})");
    }
}

pub fn causal_convolutions_have_no_lookahead() {
    let mut rng = seeded_rng(1);
    let conv = Conv1d::new(&mut rng, 6, 6, 5, 1, 2, 2, Padding::Causal).unwrap();
    check_layer("conv", 24, 6, &|t, x| conv.forward(t, x), &|p| p);
    let dw = Conv1d::depthwise(&mut rng, 6, 7, Padding::Causal).unwrap();
    check_layer("depthwise", 24, 6, &|t, x| dw.forward(t, x), &|p| p);
}

pub fn chunked_attention_sees_only_its_own_chunk_ahead() {
    for chunk in [1, 2, 4] {
        let mut rng = seeded_rng(2);
        let attn = ChunkedAttention::new(&mut rng, 8, 2, 16, 16, AttnMask::chunked(chunk, 8)).unwrap();
        check_layer("attention", 20, 8, &|t, x| attn.forward(t, x), &|p| p / chunk * chunk);
    }
}

pub fn focal_and_convnext_blocks_are_strictly_causal() {
    let mut rng = seeded_rng(3);
    let focal = FocalBlock::new(&mut rng, 8, 16, FocalGeometry { window: 3, factor: 2, pool: 4 }).unwrap();
    check_layer("focal", 30, 8, &|t, x| focal.forward(t, x), &|p| p);
    let block = ConvNextBlock::new(&mut rng, 8, 16, 7).unwrap();
    check_layer("convnext", 30, 8, &|t, x| block.forward(t, x), &|p| p);
}

pub fn refiner_is_chunk_local() {
    let mut rng = seeded_rng(4);
    let mut refiner = Refiner::new(&mut rng, 4, 3).unwrap();
    // Non-zero output weights, otherwise the layer is the identity.
    for v in refiner.w_out.data_mut() {
        *v = 0.05;
    }
    check_layer("refiner", 18, 4, &|t, x| refiner.forward(t, x), &|p| p / 3 * 3);
}

fn desk_codec() -> Codec {
    let mut codec = Codec::new(CodecConfig::desk(), 5).unwrap();
    for v in codec.refiner.w_out.data_mut() {
        *v = 0.01;
    }
    codec
}

pub fn encoder_pipeline_lookahead_is_one_attention_chunk() {
    let codec = desk_codec();
    let cfg = codec.config().clone();
    let spf = cfg.samples_per_frame();
    let chunk = cfg.attn_chunk;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = spf * 40;
    for _ in 0..TRIALS {
        let samples: Vec<f32> = (0..n).map(|_| rng.gen_range(-0.5f32..0.5)).collect();
        let s0 = rng.gen_range(spf..n);
        let mut moved = samples.clone();
        for v in &mut moved[s0..] {
            *v = rng.gen_range(-0.5f32..0.5);
        }
        let a = codec.encode_features(&AudioBuffer::new(cfg.sample_rate, samples.clone())).unwrap();
        let b = codec.encode_features(&AudioBuffer::new(cfg.sample_rate, moved.clone())).unwrap();
        // Frame t is final once the samples of its whole attention chunk exist.
        let safe = (0..a.rows()).take_while(|&t| ((t / chunk + 1) * chunk) * spf <= s0).count();
        let c = a.cols();
        assert_eq!(&a.data()[..safe * c], &b.data()[..safe * c], "features before frame {safe} moved");
        assert_ne!(a.row(safe), b.row(safe));
        let ta = codec.encode_offline(&AudioBuffer::new(cfg.sample_rate, samples)).unwrap();
        let tb = codec.encode_offline(&AudioBuffer::new(cfg.sample_rate, moved)).unwrap();
        assert_eq!(ta.tokens[..safe], tb.tokens[..safe]);
    }
}

pub fn decoder_pipeline_lookahead_is_one_refiner_chunk() {
    let codec = desk_codec();
    let cfg = codec.config().clone();
    let chunk = cfg.refiner_chunk();
    let up = cfg.upsample;
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let size = 1u32 << cfg.codebook_bits;
    for _ in 0..TRIALS {
        let tokens: Vec<TokenIndex> = (0..32).map(|_| TokenIndex(rng.gen_range(0..size))).collect();
        let k = rng.gen_range(1..tokens.len());
        let mut moved = tokens.clone();
        for t in &mut moved[k..] {
            *t = TokenIndex((t.0 + rng.gen_range(1..size)) % size);
        }
        let stream = |tokens| TokenStream { frame_rate: cfg.frame_rate, bits: cfg.codebook_bits, tokens };
        let a = codec.decode_offline(&stream(tokens)).unwrap();
        let b = codec.decode_offline(&stream(moved)).unwrap();
        let safe = k / chunk * chunk;
        assert_eq!(a.samples[..safe * up], b.samples[..safe * up], "samples before frame {safe} moved (k = {k})");
        assert_ne!(a.samples[safe * up..(safe + 1) * up], b.samples[safe * up..(safe + 1) * up]);
    }
}
