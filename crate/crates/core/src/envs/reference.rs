//! Current references for the motor plant, restricted to a feasible disc.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ReferenceMode {
    /// Every step, keep the current reference with `hold_probability`,
    /// otherwise draw a fresh one uniformly from the disc.
    Random { hold_probability: f64 },
    /// Frozen per-step schedule; the last entry holds past the end.
    Schedule(Vec<[f64; 2]>),
}

/// Uniform draw from the disc of the given radius.
pub fn sample_disc(rng: &mut ChaCha8Rng, radius: f64) -> [f64; 2] {
    let r = radius * rng.random::<f64>().sqrt();
    let phi = 2.0 * std::f64::consts::PI * rng.random::<f64>();
    [r * phi.cos(), r * phi.sin()]
}

/// Stepwise-constant schedule with one uniform disc draw per segment.
pub fn segment_schedule(rng: &mut ChaCha8Rng, steps: usize, segment: usize, radius: f64) -> Result<Vec<[f64; 2]>> {
    if segment == 0 {
        return Err(Error::config("segment length must be >= 1"));
    }
    let mut out = Vec::with_capacity(steps);
    let mut current = [0.0; 2];
    for k in 0..steps {
        if k % segment == 0 {
            current = sample_disc(rng, radius);
        }
        out.push(current);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceGenerator {
    mode: ReferenceMode,
    radius: f64,
    current: [f64; 2],
    k: usize,
}

impl ReferenceGenerator {
    pub fn new(mode: ReferenceMode, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::config("reference radius must be > 0"));
        }
        match &mode {
            ReferenceMode::Random { hold_probability } if !(0.0..=1.0).contains(hold_probability) => {
                return Err(Error::config("hold probability must be in [0, 1]"));
            }
            ReferenceMode::Schedule(s) if s.is_empty() => {
                return Err(Error::config("reference schedule is empty"));
            }
            ReferenceMode::Schedule(s) if s.iter().any(|r| r[0].hypot(r[1]) > radius * (1.0 + 1e-12)) => {
                return Err(Error::config("scheduled reference outside the feasible disc"));
            }
            _ => {}
        }
        Ok(ReferenceGenerator {
            mode,
            radius,
            current: [0.0; 2],
            k: 0,
        })
    }

    pub fn mode(&self) -> &ReferenceMode {
        &self.mode
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn current(&self) -> [f64; 2] {
        self.current
    }

    /// Restarts the generator and returns the first reference.
    pub fn reset(&mut self, rng: &mut ChaCha8Rng) -> [f64; 2] {
        self.k = 0;
        self.current = match &self.mode {
            ReferenceMode::Random { .. } => sample_disc(rng, self.radius),
            ReferenceMode::Schedule(s) => s[0],
        };
        self.current
    }

    /// Reference for the next step.
    pub fn advance(&mut self, rng: &mut ChaCha8Rng) -> [f64; 2] {
        self.k += 1;
        match &self.mode {
            ReferenceMode::Random { hold_probability } => {
                if rng.random::<f64>() >= *hold_probability {
                    self.current = sample_disc(rng, self.radius);
                }
            }
            ReferenceMode::Schedule(s) => self.current = s[self.k.min(s.len() - 1)],
        }
        self.current
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::{rng, Stream};

    #[test]
    fn schedule_has_one_value_per_segment() {
        let s = segment_schedule(&mut rng(3, Stream::Reference), 10_000, 500, 18.0).unwrap();
        assert_eq!(s.len(), 10_000);
        let changes = s.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(changes + 1, 20);
        assert!(s.iter().all(|r| r[0].hypot(r[1]) <= 18.0));
        assert_eq!(s, segment_schedule(&mut rng(3, Stream::Reference), 10_000, 500, 18.0).unwrap());
    }

    #[test]
    fn random_mode_stays_in_disc() {
        let mut g = ReferenceGenerator::new(ReferenceMode::Random { hold_probability: 0.0 }, 5.0).unwrap();
        let mut r = rng(0, Stream::Reference);
        g.reset(&mut r);
        for _ in 0..10_000 {
            let x = g.advance(&mut r);
            assert!(x[0].hypot(x[1]) <= 5.0);
        }
    }

    #[test]
    fn full_hold_never_changes() {
        let mut g = ReferenceGenerator::new(ReferenceMode::Random { hold_probability: 1.0 }, 5.0).unwrap();
        let mut r = rng(0, Stream::Reference);
        let first = g.reset(&mut r);
        for _ in 0..100 {
            assert_eq!(g.advance(&mut r), first);
        }
    }

    #[test]
    fn infeasible_schedule_rejected() {
        assert!(ReferenceGenerator::new(ReferenceMode::Schedule(vec![[20.0, 0.0]]), 18.0).is_err());
    }
}
