use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

/// Outcome of one training stage.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StageReport {
    pub stage: u8,
    pub skipped: bool,
    pub steps_run: usize,
    pub stopped_early: bool,
    pub final_lr: f32,
    /// Training loss after every optimizer step.
    pub train_loss: Vec<f32>,
    /// Held-out metric by step; step 0 is the starting point.
    pub heldout: Vec<(usize, f64)>,
    pub initial_heldout: f64,
    /// Held-out metric of the kept (best) parameters.
    pub final_heldout: f64,
    /// Held-out L2 per encoder layer (stage 2) after training.
    pub layer_l2: Vec<f64>,
    /// Additional named measurements.
    pub extra: Vec<(String, f64)>,
}

impl StageReport {
    pub fn skipped(stage: u8) -> Self {
        StageReport { stage, skipped: true, ..Default::default() }
    }

    pub fn extra(&self, key: &str) -> Option<f64> {
        self.extra.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }
}

/// Everything a distillation run measured, with the ablation flags it ran
/// under.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DistillReport {
    pub label: String,
    pub seed: u64,
    pub refiner: bool,
    pub stage4: bool,
    pub stages: Vec<StageReport>,
    /// Held-out L2 between reconstructed features and final teacher features.
    pub heldout_feature_l2: Option<f64>,
    pub teacher_checksum: u64,
    pub teacher_unchanged: bool,
}

pub fn variant_label(refiner: bool, stage4: bool) -> &'static str {
    match (refiner, stage4) {
        (_, false) => "w/o stage-4",
        (false, true) => "w/o refiner",
        (true, true) => "full",
    }
}

impl DistillReport {
    pub fn stage(&self, id: u8) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.stage == id)
    }

    /// `key=value` summary, one measurement per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "label={}", self.label);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "refiner={}", if self.refiner { "on" } else { "off" });
        let _ = writeln!(s, "stage4={}", if self.stage4 { "on" } else { "skipped" });
        let _ = writeln!(s, "teacher_checksum={:016x}", self.teacher_checksum);
        let _ = writeln!(s, "teacher_unchanged={}", self.teacher_unchanged);
        if let Some(v) = self.heldout_feature_l2 {
            let _ = writeln!(s, "heldout_feature_l2={v:.6e}");
        }
        for st in &self.stages {
            let p = format!("stage{}", st.stage);
            if st.skipped {
                let _ = writeln!(s, "{p}.status=skipped");
                continue;
            }
            let _ = writeln!(s, "{p}.status=done");
            let _ = writeln!(s, "{p}.steps={}", st.steps_run);
            let _ = writeln!(s, "{p}.stopped_early={}", st.stopped_early);
            let _ = writeln!(s, "{p}.final_lr={:e}", st.final_lr);
            let _ = writeln!(s, "{p}.heldout_initial={:.6e}", st.initial_heldout);
            let _ = writeln!(s, "{p}.heldout_final={:.6e}", st.final_heldout);
            for (i, v) in st.layer_l2.iter().enumerate() {
                let _ = writeln!(s, "{p}.layer{}_l2={v:.6e}", i + 1);
            }
            for (k, v) in &st.extra {
                let _ = writeln!(s, "{p}.{k}={v:.6e}");
            }
        }
        s
    }

    /// `stage,step,train_loss,heldout` rows; held-out cells are empty on
    /// steps without an evaluation.
    pub fn loss_csv(&self) -> String {
        let mut s = String::from("stage,step,train_loss,heldout\n");
        for st in self.stages.iter().filter(|s| !s.skipped) {
            let mut evals = st.heldout.iter().peekable();
            if let Some(&&(0, v)) = evals.peek() {
                let _ = writeln!(s, "{},0,,{v:.6e}", st.stage);
                evals.next();
            }
            for (i, loss) in st.train_loss.iter().enumerate() {
                let step = i + 1;
                let _ = write!(s, "{},{step},{loss:.6e},", st.stage);
                if let Some(&&(e, v)) = evals.peek() {
                    if e == step {
                        let _ = write!(s, "{v:.6e}");
                        evals.next();
                    }
                }
                s.push('\n');
            }
        }
        s
    }
}
