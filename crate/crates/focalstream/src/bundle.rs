//! Distillation output directory.
//!
//! ```text
//! DIR/teacher.fcsw     frozen teacher encoder
//! DIR/stage{N}.fcsw    student after stage N
//! DIR/model.fcsw       final student (runs of every stage)
//! DIR/report.txt       key=value summary (DistillReport::to_text)
//! DIR/losses.csv       stage,step,train_loss,heldout
//! ```

use std::path::{Path, PathBuf};

use focalstream_core::distill::{DistillReport, Teacher};
use focalstream_core::{Codec, CodecConfig};

use crate::error::CliError;
use crate::weights;

pub struct Bundle {
    pub dir: PathBuf,
}

impl Bundle {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        Ok(Bundle { dir: dir.to_path_buf() })
    }

    pub fn teacher_path(&self) -> PathBuf {
        self.dir.join("teacher.fcsw")
    }

    pub fn stage_path(&self, stage: u8) -> PathBuf {
        self.dir.join(format!("stage{stage}.fcsw"))
    }

    pub fn model_path(&self) -> PathBuf {
        self.dir.join("model.fcsw")
    }

    pub fn save_teacher(&self, config: &CodecConfig, teacher: &Teacher) -> Result<(), CliError> {
        weights::save(&self.teacher_path(), config, teacher)
    }

    pub fn save_stage(&self, stage: u8, codec: &Codec) -> Result<(), CliError> {
        weights::save(&self.stage_path(stage), codec.config(), codec)
    }

    pub fn save_model(&self, codec: &Codec) -> Result<(), CliError> {
        weights::save(&self.model_path(), codec.config(), codec)
    }

    pub fn write_report(&self, report: &DistillReport) -> Result<(), CliError> {
        std::fs::write(self.dir.join("report.txt"), report.to_text())?;
        std::fs::write(self.dir.join("losses.csv"), report.loss_csv())?;
        Ok(())
    }
}
