//! Exploration-rate schedule shared by both learning agents.

/// Linear decay from `start` to `end` over `decay_steps`, holding at `end`
/// afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    start: f64,
    end: f64,
    decay_steps: u64,
}

impl EpsilonSchedule {
    pub fn new(start: f64, end: f64, decay_steps: u64) -> Self {
        assert!(
            (0.0..=1.0).contains(&start) && (0.0..=1.0).contains(&end) && end <= start,
            "epsilon bounds must satisfy 0 <= end <= start <= 1"
        );
        Self {
            start,
            end,
            decay_steps,
        }
    }

    /// Schedule used for a training run of `total_steps`: decay over the
    /// leading `fraction` of the run, then hold.
    pub fn over_training(start: f64, end: f64, total_steps: u64, fraction: f64) -> Self {
        assert!(
            fraction > 0.0 && fraction <= 1.0,
            "decay fraction must be in (0, 1]"
        );
        Self::new(start, end, (total_steps as f64 * fraction).round() as u64)
    }

    pub fn value(&self, step: u64) -> f64 {
        if step >= self.decay_steps || self.decay_steps == 0 {
            return self.end;
        }
        let frac = step as f64 / self.decay_steps as f64;
        self.start - (self.start - self.end) * frac
    }
}
