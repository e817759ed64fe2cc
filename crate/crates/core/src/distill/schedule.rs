/// Learning-rate schedule driven by held-out evaluations: halve the rate
/// after `patience` evaluations without improvement, stop after
/// `stop_after`. With `reset` the first stop instead restores the initial
/// rate once and continues.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauSchedule {
    initial_lr: f32,
    lr: f32,
    patience: usize,
    stop_after: usize,
    factor: f32,
    reset: bool,
    reset_used: bool,
    best: f64,
    since_best: usize,
    since_decay: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlateauAction {
    Continue,
    SetLr(f32),
    Stop,
}

impl PlateauSchedule {
    pub fn new(lr: f32, patience: usize, stop_after: usize, reset: bool) -> Self {
        PlateauSchedule {
            initial_lr: lr,
            lr,
            patience: patience.max(1),
            stop_after: stop_after.max(1),
            factor: 0.5,
            reset,
            reset_used: false,
            best: f64::INFINITY,
            since_best: 0,
            since_decay: 0,
        }
    }

    pub fn lr(&self) -> f32 {
        self.lr
    }

    pub fn observe(&mut self, metric: f64) -> PlateauAction {
        if metric < self.best {
            self.best = metric;
            self.since_best = 0;
            self.since_decay = 0;
            return PlateauAction::Continue;
        }
        self.since_best += 1;
        self.since_decay += 1;
        if self.since_best >= self.stop_after {
            if self.reset && !self.reset_used {
                self.reset_used = true;
                self.since_best = 0;
                self.since_decay = 0;
                self.lr = self.initial_lr;
                return PlateauAction::SetLr(self.lr);
            }
            return PlateauAction::Stop;
        }
        if self.since_decay >= self.patience {
            self.since_decay = 0;
            self.lr *= self.factor;
            return PlateauAction::SetLr(self.lr);
        }
        PlateauAction::Continue
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halves_then_stops() {
        let mut s = PlateauSchedule::new(1.0, 3, 9, false);
        assert_eq!(s.observe(1.0), PlateauAction::Continue);
        let actions: alloc::vec::Vec<_> = (0..9).map(|_| s.observe(2.0)).collect();
        assert_eq!(actions[2], PlateauAction::SetLr(0.5));
        assert_eq!(actions[5], PlateauAction::SetLr(0.25));
        assert_eq!(actions[8], PlateauAction::Stop);
    }

    #[test]
    fn improvement_resets_counters_and_reset_flag_restarts_once() {
        let mut s = PlateauSchedule::new(0.1, 3, 9, true);
        s.observe(1.0);
        s.observe(1.5);
        s.observe(1.5);
        assert_eq!(s.observe(0.5), PlateauAction::Continue);
        for _ in 0..8 {
            s.observe(0.9);
        }
        assert_eq!(s.observe(0.9), PlateauAction::SetLr(0.1));
        for _ in 0..8 {
            s.observe(0.9);
        }
        assert_eq!(s.observe(0.9), PlateauAction::Stop);
    }
}
