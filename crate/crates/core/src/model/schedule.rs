use std::f64::consts::PI;

/// Linear warm-up then cosine decay.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSchedule {
    pub base: f64,
    pub warmup: usize,
    pub total: usize,
}

impl LrSchedule {
    /// Warm-up covers `round(fraction · total)` steps.
    pub fn new(base: f64, warmup_fraction: f64, total: usize) -> Self {
        let warmup = ((warmup_fraction * total as f64).round() as usize).min(total);
        Self { base, warmup, total }
    }

    /// `0` at step 0, `base` at the end of warm-up, `0` at `total` and after.
    pub fn at(&self, step: usize) -> f64 {
        if step >= self.total {
            return 0.0;
        }
        if step < self.warmup {
            return self.base * step as f64 / self.warmup as f64;
        }
        let span = (self.total - self.warmup) as f64;
        self.base * 0.5 * (1.0 + (PI * (step - self.warmup) as f64 / span).cos())
    }
}
