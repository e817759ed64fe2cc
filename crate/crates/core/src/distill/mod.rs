//! Four-stage causal distillation against a full-context teacher.
//!
//! 1. Positional embedding: the causal posemb conv learns to match the
//!    teacher's centered one on teacher extractor features.
//! 2. Encoder: extractor and attention layers match the teacher layer by
//!    layer with weights growing towards the last layer. Posemb is frozen.
//! 3. Bottleneck: with the encoder frozen, compressor, quantizer and
//!    decompressor learn to reconstruct the causal features; in parallel the
//!    decoder learns to synthesize the waveform from teacher features.
//! 4. Joint: encoder (minus posemb), compressor, decompressor and refiner
//!    train end to end against the teacher's final features.
//!
//! The student starts from the teacher's weights, made causal.

mod dataset;
mod report;
mod schedule;
mod teacher;
mod train;

use alloc::string::String;
use alloc::vec::Vec;

pub use dataset::{make_synthetic_dataset, SignalSpec, SyntheticDataset};
pub use report::{variant_label, DistillReport, StageReport};
pub use schedule::{PlateauAction, PlateauSchedule};
pub use teacher::{Teacher, TeacherTrace};
pub use train::{layer_weights, train, StagePlan};

use crate::codec::{rows_to_tokens, Codec, CodecConfig};
use crate::error::{Error, Result};
use crate::metrics::{code_usage, TokenHistogram};
use crate::params::set_trainable;
use crate::tensor::{Tape, Tensor, Var};

/// Dataset sizes and per-stage optimization plans.
#[derive(Debug, Clone, PartialEq)]
pub struct DistillConfig {
    pub seed: u64,
    pub train_items: usize,
    pub heldout_items: usize,
    pub item_seconds: f64,
    pub stage1: StagePlan,
    pub stage2: StagePlan,
    pub stage3: StagePlan,
    pub stage4: StagePlan,
    /// Quantize in the bottleneck (false replaces the quantizer with plain
    /// row normalization).
    pub quantize: bool,
    /// Overrides the stage-2 layer weights.
    pub layer_weights: Option<Vec<f32>>,
}

impl DistillConfig {
    /// Settings for the desk configuration.
    pub fn desk(seed: u64) -> Self {
        DistillConfig {
            seed,
            train_items: 256,
            heldout_items: 6,
            item_seconds: 3.0,
            stage1: StagePlan::new(1, 150, 3e-3),
            stage2: StagePlan::new(2, 120, 1e-3),
            stage3: StagePlan::new(3, 300, 2e-3),
            stage4: StagePlan { batch: 4, ..StagePlan::new(4, 200, 3e-4) },
            quantize: true,
            layer_weights: None,
        }
    }

    /// A few steps per stage; exercises every code path in seconds.
    pub fn smoke(seed: u64) -> Self {
        let mut c = Self::desk(seed);
        c.train_items = 3;
        c.heldout_items = 2;
        for (plan, steps) in [(&mut c.stage1, 6), (&mut c.stage2, 3), (&mut c.stage3, 6), (&mut c.stage4, 3)] {
            plan.steps = steps;
            plan.eval_every = 3;
            plan.batch = 1;
        }
        c
    }
}

struct Item {
    audio: Tensor,
    wave: Tensor,
    teacher: TeacherTrace,
}

/// Teacher, data and teacher activations shared by all stages.
pub struct Distiller {
    pub config: CodecConfig,
    pub plan: DistillConfig,
    pub teacher: Teacher,
    train: Vec<Item>,
    heldout: Vec<Item>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn mse_value(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() || a.numel() == 0 {
        return Err(Error::shape("mse", alloc::format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let s: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = (x - y) as f64;
            d * d
        })
        .sum();
    Ok(s / a.numel() as f64)
}

fn sum_losses(tape: &mut Tape, losses: Vec<Var>) -> Result<Var> {
    let n = losses.len();
    let mut it = losses.into_iter();
    let mut acc = it.next().ok_or_else(|| Error::Contract("empty batch".into()))?;
    for l in it {
        acc = tape.add(acc, l)?;
    }
    tape.scale(acc, 1.0 / n as f32)
}

impl Distiller {
    pub fn new(config: CodecConfig, plan: DistillConfig) -> Result<Self> {
        let teacher = Teacher::new(&config, plan.seed)?;
        Self::with_teacher(config, plan, teacher)
    }

    pub fn with_teacher(config: CodecConfig, plan: DistillConfig, teacher: Teacher) -> Result<Self> {
        config.validate()?;
        if plan.train_items == 0 || plan.heldout_items == 0 {
            return Err(Error::config("train_items", "need at least one training and one held-out item"));
        }
        let spf = config.samples_per_frame();
        let build = |seed: u64, n: usize| -> Result<Vec<Item>> {
            let data = make_synthetic_dataset(seed, n, plan.item_seconds, config.sample_rate)?;
            let mut items = Vec::with_capacity(n);
            for (i, spec) in data.items.iter().enumerate() {
                let audio = data.audio(i);
                let frames = audio.samples.len() / spf;
                if frames == 0 {
                    return Err(Error::config("item_seconds", "items shorter than one frame"));
                }
                let mut wave = spec.render(config.output_rate());
                wave.resize(frames * config.upsample, 0.0);
                let teacher = teacher.trace(&audio)?;
                items.push(Item { audio: audio.to_tensor(), wave: Tensor::new(&[wave.len()], wave)?, teacher });
            }
            Ok(items)
        };
        let train = build(plan.seed.wrapping_mul(2).wrapping_add(1), plan.train_items)?;
        let heldout = build(plan.seed.wrapping_mul(2).wrapping_add(2), plan.heldout_items)?;
        Ok(Distiller { config, plan, teacher, train, heldout })
    }

    /// A fresh student whose encoder carries the teacher's weights.
    pub fn init_student(&self) -> Result<Codec> {
        let mut student = Codec::new(self.config.clone(), self.plan.seed.wrapping_add(1))?;
        student.encoder = self.teacher.encoder.with_context(&self.config, true);
        set_trainable(&mut student, true);
        Ok(student)
    }

    fn batch(&self, step: usize, size: usize) -> impl Iterator<Item = &Item> {
        let n = self.train.len();
        (0..size.max(1)).map(move |j| &self.train[(step * size.max(1) + j) % n])
    }

    pub fn stage1(&self, student: &mut Codec) -> Result<StageReport> {
        let plan = &self.plan.stage1;
        let posemb = &mut student.encoder.posemb;
        set_trainable(posemb, true);
        let mut report = train(
            plan,
            posemb,
            |m, tape, step| {
                let mut losses = Vec::new();
                for item in self.batch(step, plan.batch) {
                    let x = tape.constant(item.teacher.extracted.clone());
                    let y = m.forward(tape, x)?;
                    let t = tape.constant(item.teacher.posemb.clone());
                    losses.push(tape.mse(y, t)?);
                }
                sum_losses(tape, losses)
            },
            |m| {
                let mut out = Vec::new();
                for item in &self.heldout {
                    let y = crate::layers::run_offline(&item.teacher.extracted, |t, v| m.forward(t, v))?;
                    out.push(mse_value(&y, &item.teacher.posemb)?);
                }
                Ok(mean(out.into_iter()))
            },
        )?;
        report.layer_l2 = alloc::vec![report.final_heldout];
        Ok(report)
    }

    pub fn stage2_weights(&self) -> Vec<f32> {
        self.plan.layer_weights.clone().unwrap_or_else(|| layer_weights(self.config.encoder_layers))
    }

    fn encoder_layer_l2(&self, student: &Codec) -> Result<Vec<f64>> {
        let l = self.config.encoder_layers;
        let mut sums = alloc::vec![0.0; l];
        for item in &self.heldout {
            let mut tape = Tape::inference();
            let x = tape.constant(item.audio.clone());
            let tr = student.encoder.trace(&mut tape, x)?;
            for (i, &v) in tr.layers.iter().enumerate() {
                sums[i] += mse_value(tape.value(v), &item.teacher.layers[i])?;
            }
        }
        Ok(sums.into_iter().map(|s| s / self.heldout.len() as f64).collect())
    }

    pub fn stage2(&self, student: &mut Codec) -> Result<StageReport> {
        let plan = &self.plan.stage2;
        let weights = self.stage2_weights();
        if weights.len() != self.config.encoder_layers {
            return Err(Error::config("layer_weights", "need one weight per encoder layer"));
        }
        let encoder = &mut student.encoder;
        set_trainable(encoder, true);
        set_trainable(&mut encoder.posemb, false);
        let cfg = &self.config;
        let mut report = train(
            plan,
            encoder,
            |m, tape, step| {
                let mut losses = Vec::new();
                for item in self.batch(step, plan.batch) {
                    let x = tape.constant(item.audio.clone());
                    let tr = m.trace(tape, x)?;
                    let mut total: Option<Var> = None;
                    for (i, &y) in tr.layers.iter().enumerate() {
                        let t = tape.constant(item.teacher.layers[i].clone());
                        let l = tape.mse(y, t)?;
                        let l = tape.scale(l, weights[i])?;
                        total = Some(match total {
                            Some(a) => tape.add(a, l)?,
                            None => l,
                        });
                    }
                    losses.push(total.ok_or_else(|| Error::Contract("encoder has no layers".into()))?);
                }
                sum_losses(tape, losses)
            },
            |m| {
                let probe = EncoderProbe { encoder: m, config: cfg };
                let per_layer = self.layer_l2_with(&probe)?;
                Ok(per_layer.iter().zip(&weights).map(|(l, &w)| l * w as f64).sum())
            },
        )?;
        report.layer_l2 = self.encoder_layer_l2(student)?;
        Ok(report)
    }

    fn layer_l2_with(&self, probe: &EncoderProbe<'_>) -> Result<Vec<f64>> {
        let l = probe.config.encoder_layers;
        let mut sums = alloc::vec![0.0; l];
        for item in &self.heldout {
            let mut tape = Tape::inference();
            let x = tape.constant(item.audio.clone());
            let tr = probe.encoder.trace(&mut tape, x)?;
            for (i, &v) in tr.layers.iter().enumerate() {
                sums[i] += mse_value(tape.value(v), &item.teacher.layers[i])?;
            }
        }
        Ok(sums.into_iter().map(|s| s / self.heldout.len() as f64).collect())
    }

    fn student_features(&self, student: &Codec, items: &[Item]) -> Result<Vec<Tensor>> {
        items.iter().map(|item| crate::layers::run_offline(&item.audio, |t, v| student.encoder.forward(t, v))).collect()
    }

    fn quantize(&self, tape: &mut Tape, z: Var) -> Result<Var> {
        if self.plan.quantize {
            tape.bsq_ste(z)
        } else {
            tape.normalize_rows(z)
        }
    }

    /// Reconstructed features `[frames, model_dim]` from encoder features,
    /// through hard quantization (or normalization when bypassed).
    fn reconstruct(&self, student: &Codec, features: &Tensor, refine: bool) -> Result<Tensor> {
        crate::layers::run_offline(features, |tape, f| {
            let z = student.compressor.forward(tape, f)?;
            let q = self.quantize(tape, z)?;
            student.reconstruct_features(tape, q, refine)
        })
    }

    /// Held-out L2 between the reconstruction of the student's own features
    /// and the teacher's final features.
    pub fn heldout_feature_l2(&self, student: &Codec, refine: bool) -> Result<f64> {
        let feats = self.student_features(student, &self.heldout)?;
        let mut out = Vec::with_capacity(feats.len());
        for (f, item) in feats.iter().zip(&self.heldout) {
            let r = self.reconstruct(student, f, refine)?;
            out.push(mse_value(&r, item.teacher.output())?);
        }
        Ok(mean(out.into_iter()))
    }

    /// Percentage of the codebook used on held-out items.
    pub fn heldout_code_usage(&self, student: &Codec) -> Result<f64> {
        let size = 1usize << self.config.codebook_bits;
        let mut hist = TokenHistogram::new(size);
        for f in self.student_features(student, &self.heldout)? {
            for t in rows_to_tokens(&student.latents(&f)?) {
                hist.add(t)?;
            }
        }
        code_usage(&hist)
    }

    /// Loss of one stage-3 training step on a tape, for inspection.
    pub fn stage3_loss(&self, student: &Codec, tape: &mut Tape, features: &Tensor, item_index: usize) -> Result<Var> {
        let item = &self.train[item_index % self.train.len()];
        let f = tape.constant(features.clone());
        let z = student.compressor.forward(tape, f)?;
        let q = self.quantize(tape, z)?;
        let h = student.decompressor.forward(tape, q)?;
        let recon = tape.mse(h, f)?;
        let t = tape.constant(item.teacher.output().clone());
        let w = student.decoder.forward(tape, t)?;
        let target = tape.constant(item.wave.clone());
        let wave = tape.mse(w, target)?;
        tape.add(recon, wave)
    }

    /// Features of the training items under the student's current encoder.
    pub fn train_features(&self, student: &Codec) -> Result<Vec<Tensor>> {
        self.student_features(student, &self.train)
    }

    fn wave_l2(&self, student: &Codec) -> Result<f64> {
        let mut out = Vec::new();
        for item in &self.heldout {
            let w = crate::layers::run_offline(item.teacher.output(), |t, v| student.decoder.forward(t, v))?;
            out.push(mse_value(&w, &item.wave)?);
        }
        Ok(mean(out.into_iter()))
    }

    pub fn stage3(&self, student: &mut Codec) -> Result<StageReport> {
        let plan = &self.plan.stage3;
        let train_feats = self.train_features(student)?;
        let heldout_feats = self.student_features(student, &self.heldout)?;
        set_trainable(student, false);
        set_trainable(&mut student.compressor, true);
        set_trainable(&mut student.decompressor, true);
        set_trainable(&mut student.decoder, true);
        let n = self.train.len();
        let mut report = train(
            plan,
            student,
            |m, tape, step| {
                let mut losses = Vec::new();
                for j in 0..plan.batch.max(1) {
                    let i = (step * plan.batch.max(1) + j) % n;
                    losses.push(self.stage3_loss(m, tape, &train_feats[i], i)?);
                }
                sum_losses(tape, losses)
            },
            |m| {
                let mut recon = Vec::new();
                for f in &heldout_feats {
                    recon.push(mse_value(&self.reconstruct(m, f, false)?, f)?);
                }
                Ok(mean(recon.into_iter()) + self.wave_l2(m)?)
            },
        )?;
        let mut recon = Vec::new();
        for f in &heldout_feats {
            recon.push(mse_value(&self.reconstruct(student, f, false)?, f)?);
        }
        report.extra.push((String::from("bottleneck_l2"), mean(recon.into_iter())));
        report.extra.push((String::from("wave_l2"), self.wave_l2(student)?));
        report.extra.push((String::from("feature_l2"), self.heldout_feature_l2(student, true)?));
        report.extra.push((String::from("code_usage"), self.heldout_code_usage(student)?));
        Ok(report)
    }

    pub fn stage4(&self, student: &mut Codec, use_refiner: bool) -> Result<StageReport> {
        let plan = &self.plan.stage4;
        set_trainable(student, false);
        set_trainable(&mut student.encoder, true);
        set_trainable(&mut student.encoder.posemb, false);
        set_trainable(&mut student.compressor, true);
        set_trainable(&mut student.decompressor, true);
        set_trainable(&mut student.refiner, use_refiner);
        let mut report = train(
            plan,
            student,
            |m, tape, step| {
                let mut losses = Vec::new();
                for item in self.batch(step, plan.batch) {
                    let x = tape.constant(item.audio.clone());
                    let f = m.encoder.forward(tape, x)?;
                    let z = m.compressor.forward(tape, f)?;
                    let q = self.quantize(tape, z)?;
                    let r = m.reconstruct_features(tape, q, use_refiner)?;
                    let t = tape.constant(item.teacher.output().clone());
                    losses.push(tape.mse(r, t)?);
                }
                sum_losses(tape, losses)
            },
            |m| self.heldout_feature_l2(m, use_refiner),
        )?;
        report.extra.push((String::from("feature_l2"), report.final_heldout));
        report.extra.push((String::from("code_usage"), self.heldout_code_usage(student)?));
        Ok(report)
    }

    fn finish(&self, label_flags: (bool, bool), stages: Vec<StageReport>, checksum_before: u64) -> DistillReport {
        let (refiner, stage4) = label_flags;
        let after = self.teacher.checksum();
        let heldout_feature_l2 = stages
            .iter()
            .rev()
            .find(|s| !s.skipped && s.extra("feature_l2").is_some())
            .and_then(|s| s.extra("feature_l2"));
        DistillReport {
            label: String::from(variant_label(refiner, stage4)),
            seed: self.plan.seed,
            refiner,
            stage4,
            stages,
            heldout_feature_l2,
            teacher_checksum: after,
            teacher_unchanged: after == checksum_before,
        }
    }

    /// Runs every stage on a fresh student.
    pub fn run_all(&self, use_refiner: bool, run_stage4: bool) -> Result<(Codec, DistillReport)> {
        let before = self.teacher.checksum();
        let mut student = self.init_student()?;
        let mut stages = Vec::new();
        stages.push(self.stage1(&mut student)?);
        stages.push(self.stage2(&mut student)?);
        stages.push(self.stage3(&mut student)?);
        if run_stage4 {
            stages.push(self.stage4(&mut student, use_refiner)?);
        } else {
            stages.push(StageReport::skipped(4));
        }
        Ok((student, self.finish((use_refiner, run_stage4), stages, before)))
    }

    /// Wraps already-run stage reports into a report for the given flags.
    pub fn report(&self, use_refiner: bool, run_stage4: bool, stages: Vec<StageReport>) -> DistillReport {
        let c = self.teacher.checksum();
        self.finish((use_refiner, run_stage4), stages, c)
    }

    /// The three variants compared from one stage-3 checkpoint.
    pub fn ablation_study(&self, after_stage3: &Codec) -> Result<Ablation> {
        let without_stage4 = self.heldout_feature_l2(after_stage3, true)?;
        let mut full_model = after_stage3.clone();
        let full = self.stage4(&mut full_model, true)?;
        let mut plain = after_stage3.clone();
        let without_refiner = self.stage4(&mut plain, false)?;
        Ok(Ablation {
            full: full.final_heldout,
            without_refiner: without_refiner.final_heldout,
            without_stage4,
            full_report: full,
            without_refiner_report: without_refiner,
        })
    }
}

/// Held-out feature L2 of the three ablation variants.
#[derive(Debug, Clone, PartialEq)]
pub struct Ablation {
    pub full: f64,
    pub without_refiner: f64,
    pub without_stage4: f64,
    pub full_report: StageReport,
    pub without_refiner_report: StageReport,
}

impl Ablation {
    pub fn ordered(&self) -> bool {
        self.full <= self.without_refiner && self.without_refiner <= self.without_stage4
    }
}

struct EncoderProbe<'a> {
    encoder: &'a crate::codec::Encoder,
    config: &'a CodecConfig,
}
