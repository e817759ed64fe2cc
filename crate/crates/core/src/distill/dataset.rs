//! Deterministic synthetic speech stand-ins.
//!
//! Every item is an analytic function of time (chirps, amplitude-modulated
//! tones and band-limited noise bursts built from random sinusoids), so the
//! same item can be rendered at the encoder input rate and at the decoder
//! output rate without resampling.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng as _;

use crate::codec::AudioBuffer;
use crate::error::{Error, Result};
use crate::layers::{seeded_rng, Rng};
use crate::math;

#[derive(Debug, Clone, PartialEq)]
enum Component {
    Chirp { f0: f64, f1: f64, amp: f64, phase: f64 },
    AmTone { freq: f64, mod_freq: f64, depth: f64, amp: f64, phase: f64 },
    NoiseBurst { start: f64, len: f64, amp: f64, partials: Vec<(f64, f64)> },
}

/// One synthetic signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpec {
    pub duration_s: f64,
    parts: Vec<Component>,
}

impl SignalSpec {
    fn random(rng: &mut Rng, duration_s: f64) -> Self {
        let mut parts = Vec::new();
        for _ in 0..rng.gen_range(1..=2) {
            parts.push(Component::Chirp {
                f0: rng.gen_range(90.0..400.0),
                f1: rng.gen_range(90.0..1200.0),
                amp: rng.gen_range(0.1..0.3),
                phase: rng.gen_range(0.0..2.0 * PI),
            });
        }
        for _ in 0..rng.gen_range(1..=2) {
            parts.push(Component::AmTone {
                freq: rng.gen_range(150.0..3000.0),
                mod_freq: rng.gen_range(1.0..8.0),
                depth: rng.gen_range(0.2..1.0),
                amp: rng.gen_range(0.05..0.2),
                phase: rng.gen_range(0.0..2.0 * PI),
            });
        }
        for _ in 0..rng.gen_range(0..=2) {
            let center = rng.gen_range(500.0..5000.0);
            let partials = (0..12).map(|_| (center * rng.gen_range(0.8..1.2), rng.gen_range(0.0..2.0 * PI))).collect();
            parts.push(Component::NoiseBurst {
                start: rng.gen_range(0.0..duration_s),
                len: rng.gen_range(0.05..0.3),
                amp: rng.gen_range(0.02..0.08),
                partials,
            });
        }
        SignalSpec { duration_s, parts }
    }

    fn value(&self, t: f64) -> f64 {
        let mut v = 0.0;
        for p in &self.parts {
            v += match p {
                Component::Chirp { f0, f1, amp, phase } => {
                    let k = (f1 - f0) / self.duration_s;
                    amp * math::sin64(2.0 * PI * (f0 * t + 0.5 * k * t * t) + phase)
                }
                Component::AmTone { freq, mod_freq, depth, amp, phase } => {
                    let env = 1.0 - depth * 0.5 * (1.0 - math::cos64(2.0 * PI * mod_freq * t));
                    amp * env * math::sin64(2.0 * PI * freq * t + phase)
                }
                Component::NoiseBurst { start, len, amp, partials } => {
                    let u = (t - start) / len;
                    if !(0.0..1.0).contains(&u) {
                        0.0
                    } else {
                        let window = math::sin64(PI * u);
                        let s: f64 = partials.iter().map(|&(f, ph)| math::sin64(2.0 * PI * f * t + ph)).sum();
                        amp * window * window * s / 3.0
                    }
                }
            };
        }
        v
    }

    /// Samples at `rate` Hz; `floor(duration_s * rate)` of them.
    pub fn render(&self, rate: u32) -> Vec<f32> {
        let n = libm::floor(self.duration_s * rate as f64 + 1e-9) as usize;
        (0..n).map(|i| self.value(i as f64 / rate as f64).clamp(-1.0, 1.0) as f32).collect()
    }
}

/// A seeded bank of synthetic items at a fixed input rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub seed: u64,
    pub sample_rate: u32,
    pub items: Vec<SignalSpec>,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn audio(&self, i: usize) -> AudioBuffer {
        AudioBuffer::new(self.sample_rate, self.items[i].render(self.sample_rate))
    }
}

pub fn make_synthetic_dataset(
    seed: u64,
    n_items: usize,
    duration_s: f64,
    sample_rate: u32,
) -> Result<SyntheticDataset> {
    if !(duration_s.is_finite() && duration_s * sample_rate as f64 >= 1.0) {
        return Err(Error::config("duration_s", "items must hold at least one sample"));
    }
    let mut rng = seeded_rng(seed ^ 0x5eed_da7a);
    let items = (0..n_items).map(|_| SignalSpec::random(&mut rng, duration_s)).collect();
    Ok(SyntheticDataset { seed, sample_rate, items })
}
