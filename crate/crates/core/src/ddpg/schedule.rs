use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Learning rate held at `initial` until `decay_start`, then ramped linearly
/// to `final_rate` at `decay_end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial: f64,
    pub final_rate: f64,
    pub decay_start: u64,
    pub decay_end: u64,
}

impl LrSchedule {
    pub fn constant(rate: f64) -> Self {
        LrSchedule {
            initial: rate,
            final_rate: rate,
            decay_start: 0,
            decay_end: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.initial >= 0.0 && self.final_rate >= 0.0 && self.initial.is_finite()) {
            return Err(Error::config("learning rates must be >= 0"));
        }
        if self.final_rate > self.initial {
            return Err(Error::config("final learning rate exceeds the initial one"));
        }
        if self.decay_start > self.decay_end {
            return Err(Error::config("learning rate decay ends before it starts"));
        }
        Ok(())
    }

    pub fn lr_at(&self, k: u64) -> f64 {
        if k <= self.decay_start {
            self.initial
        } else if k >= self.decay_end {
            self.final_rate
        } else {
            let frac = (k - self.decay_start) as f64 / (self.decay_end - self.decay_start) as f64;
            self.initial + (self.final_rate - self.initial) * frac
        }
    }
}
