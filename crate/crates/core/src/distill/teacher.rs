use alloc::vec::Vec;

use crate::codec::{AudioBuffer, CodecConfig, Encoder};
use crate::error::Result;
use crate::layers::seeded_rng;
use crate::params::{checksum, impl_params, set_trainable};
use crate::tensor::{Tape, Tensor};

/// Full-context twin of the student encoder: centered convolutions and
/// unmasked attention, with fixed seeded weights that never train.
#[derive(Debug, Clone)]
pub struct Teacher {
    pub encoder: Encoder,
}

impl_params!(Teacher { encoder });

/// Teacher activations for one item.
#[derive(Debug, Clone)]
pub struct TeacherTrace {
    pub extracted: Tensor,
    pub posemb: Tensor,
    pub layers: Vec<Tensor>,
}

impl TeacherTrace {
    pub fn output(&self) -> &Tensor {
        self.layers.last().unwrap_or(&self.posemb)
    }
}

impl Teacher {
    pub fn new(cfg: &CodecConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = seeded_rng(seed ^ 0x7eac_4e55);
        let mut encoder = Encoder::new(&mut rng, cfg, false)?;
        set_trainable(&mut encoder, false);
        Ok(Teacher { encoder })
    }

    pub fn from_encoder(mut encoder: Encoder) -> Self {
        set_trainable(&mut encoder, false);
        Teacher { encoder }
    }

    pub fn checksum(&self) -> u64 {
        checksum(self)
    }

    pub fn trace(&self, audio: &AudioBuffer) -> Result<TeacherTrace> {
        let mut tape = Tape::inference();
        let x = tape.constant(audio.to_tensor());
        let tr = self.encoder.trace(&mut tape, x)?;
        Ok(TeacherTrace {
            extracted: tape.value(tr.extracted).clone(),
            posemb: tape.value(tr.posemb).clone(),
            layers: tr.layers.iter().map(|&v| tape.value(v).clone()).collect(),
        })
    }
}
