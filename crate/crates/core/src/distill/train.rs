use alloc::vec::Vec;

use super::schedule::{PlateauAction, PlateauSchedule};
use super::StageReport;
use crate::error::{Error, Result};
use crate::params::{zero_grad, Parameters};
use crate::tensor::{Adam, AdamConfig, Tape, Var};

/// Optimization settings of one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StagePlan {
    pub stage: u8,
    pub steps: usize,
    pub lr: f32,
    /// Items per optimizer step.
    pub batch: usize,
    /// Steps between held-out evaluations.
    pub eval_every: usize,
    pub patience: usize,
    pub stop_after: usize,
    pub reset_lr: bool,
}

impl StagePlan {
    pub fn new(stage: u8, steps: usize, lr: f32) -> Self {
        StagePlan { stage, steps, lr, batch: 2, eval_every: 10, patience: 3, stop_after: 9, reset_lr: false }
    }
}

/// Per-layer weights of the encoder loss: `1 - 0.1 * (L - l)` for layer
/// `l` of `L`, so the last layer weighs 1.0 and each earlier one 0.1 less.
pub fn layer_weights(layers: usize) -> Vec<f32> {
    (1..=layers).map(|l| ((10.0 - (layers - l) as f64) / 10.0).max(0.0) as f32).collect()
}

fn diverged(e: Error, stage: u8, step: usize) -> Error {
    match e {
        Error::NonFinite(_) => Error::Diverged { stage, step },
        other => other,
    }
}

/// Adam on `model` with a plateau schedule on held-out evaluations. The
/// parameters with the best held-out metric (including the starting point)
/// are kept.
pub fn train<M: Parameters + Clone>(
    plan: &StagePlan,
    model: &mut M,
    mut loss_fn: impl FnMut(&M, &mut Tape, usize) -> Result<Var>,
    mut eval_fn: impl FnMut(&M) -> Result<f64>,
) -> Result<StageReport> {
    let stage = plan.stage;
    let initial = eval_fn(model).map_err(|e| diverged(e, stage, 0))?;
    let mut report =
        StageReport { stage, initial_heldout: initial, heldout: alloc::vec![(0, initial)], ..Default::default() };
    let mut best = initial;
    let mut best_model = model.clone();
    let mut schedule = PlateauSchedule::new(plan.lr, plan.patience, plan.stop_after, plan.reset_lr);
    schedule.observe(initial);
    let mut adam = Adam::new(AdamConfig { lr: plan.lr, ..AdamConfig::default() });

    for step in 0..plan.steps {
        let mut tape = Tape::new();
        let loss = loss_fn(model, &mut tape, step).map_err(|e| diverged(e, stage, step))?;
        let value = tape.value(loss).data()[0];
        if !value.is_finite() {
            return Err(Error::Diverged { stage, step });
        }
        let grads = tape.backward(loss)?;
        drop(tape);
        grads.assign(model);
        adam.step(model)?;
        zero_grad(model);
        report.train_loss.push(value);
        report.steps_run = step + 1;

        let done = step + 1 == plan.steps;
        if (step + 1) % plan.eval_every.max(1) == 0 || done {
            let m = eval_fn(model).map_err(|e| diverged(e, stage, step))?;
            report.heldout.push((step + 1, m));
            if m < best {
                best = m;
                best_model = model.clone();
            }
            match schedule.observe(m) {
                PlateauAction::Continue => {}
                PlateauAction::SetLr(lr) => adam.set_lr(lr),
                PlateauAction::Stop => {
                    report.stopped_early = !done;
                    break;
                }
            }
        }
    }
    *model = best_model;
    report.final_lr = schedule.lr();
    report.final_heldout = best;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_schedule() {
        assert_eq!(layer_weights(6), [0.5, 0.6, 0.7, 0.8, 0.9, 1.0]);
        assert_eq!(layer_weights(2), [0.9, 1.0]);
    }
}
