//! Stochastic resistive load.
//!
//! The resistance follows a discretized Ornstein-Uhlenbeck process whose
//! stiffness, diffusion and mean are redrawn at random events. An event
//! either steps the mean to its new value or drifts it there linearly.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoadProcessConfig {
    pub r_min: f64,
    pub r_max: f64,
    pub stiffness_min: f64,
    pub stiffness_max: f64,
    pub diffusion_min: f64,
    pub diffusion_max: f64,
    /// Lower end of the uniform draw for a new mean (may lie below `r_min`).
    pub mean_draw_low: f64,
    /// Standard deviation of the random lower clip bound around `r_min`.
    pub floor_std: f64,
    pub event_probability: f64,
    /// Probability that an event is an immediate step rather than a drift.
    pub step_probability: f64,
    pub drift_steps_min: u32,
    pub drift_steps_max: u32,
    /// Control period in seconds.
    pub dt: f64,
}

impl Default for LoadProcessConfig {
    fn default() -> Self {
        LoadProcessConfig {
            r_min: 14.0,
            r_max: 200.0,
            stiffness_min: 10.0,
            stiffness_max: 1200.0,
            diffusion_min: 1.0,
            diffusion_max: 150.0,
            mean_draw_low: -10.0,
            floor_std: 2.0,
            event_probability: 0.002,
            step_probability: 0.5,
            drift_steps_min: 10,
            drift_steps_max: 1000,
            dt: 1e-4,
        }
    }
}

impl LoadProcessConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.r_min > 0.0
            && self.r_max > self.r_min
            && self.stiffness_min >= 0.0
            && self.stiffness_max >= self.stiffness_min
            && self.diffusion_min >= 0.0
            && self.diffusion_max >= self.diffusion_min
            && self.floor_std >= 0.0
            && (0.0..=1.0).contains(&self.event_probability)
            && (0.0..=1.0).contains(&self.step_probability)
            && self.drift_steps_min >= 1
            && self.drift_steps_max >= self.drift_steps_min
            && self.dt > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::config("inconsistent load process configuration"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Drift {
    from: f64,
    to: f64,
    total: u32,
    elapsed: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadProcess {
    config: LoadProcessConfig,
    stiffness: f64,
    diffusion: f64,
    mean: f64,
    drift: Option<Drift>,
    value: f64,
    events: u64,
}

impl LoadProcess {
    /// Draws initial parameters and starts the resistance at the drawn mean.
    pub fn new(config: LoadProcessConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let mut p = LoadProcess {
            stiffness: 0.0,
            diffusion: 0.0,
            mean: config.r_max,
            drift: None,
            value: config.r_max,
            events: 0,
            config,
        };
        p.redraw_dynamics(rng);
        p.mean = p.draw_mean(rng);
        p.value = p.mean.clamp(p.config.r_min, p.config.r_max);
        Ok(p)
    }

    /// A process with explicit parameters and no random events.
    pub fn fixed(config: LoadProcessConfig, stiffness: f64, diffusion: f64, mean: f64, value: f64) -> Result<Self> {
        config.validate()?;
        Ok(LoadProcess {
            stiffness,
            diffusion,
            mean,
            drift: None,
            value,
            events: 0,
            config,
        })
    }

    pub fn config(&self) -> &LoadProcessConfig {
        &self.config
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn stiffness(&self) -> f64 {
        self.stiffness
    }

    pub fn diffusion(&self) -> f64 {
        self.diffusion
    }

    /// Number of parameter-redraw events so far.
    pub fn events(&self) -> u64 {
        self.events
    }

    fn redraw_dynamics(&mut self, rng: &mut ChaCha8Rng) {
        let c = &self.config;
        self.stiffness = rng.random_range(c.stiffness_min..=c.stiffness_max);
        self.diffusion = rng.random_range(c.diffusion_min..=c.diffusion_max);
    }

    /// `clip(U(low, r_max), r_min + N(0, floor_std^2), r_max)`.
    fn draw_mean(&self, rng: &mut ChaCha8Rng) -> f64 {
        let c = &self.config;
        let raw = rng.random_range(c.mean_draw_low..=c.r_max);
        let floor = c.r_min
            + Normal::new(0.0, c.floor_std)
                .expect("non-negative std")
                .sample(rng);
        raw.max(floor).min(c.r_max)
    }

    /// Advances one control period and returns the clipped resistance.
    pub fn step(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        if self.config.event_probability > 0.0 && rng.random::<f64>() < self.config.event_probability {
            self.events += 1;
            self.redraw_dynamics(rng);
            let target = self.draw_mean(rng);
            if rng.random::<f64>() < self.config.step_probability {
                self.mean = target;
                self.drift = None;
            } else {
                let total = rng.random_range(self.config.drift_steps_min..=self.config.drift_steps_max);
                self.drift = Some(Drift {
                    from: self.mean,
                    to: target,
                    total,
                    elapsed: 0,
                });
            }
        }
        if let Some(d) = &mut self.drift {
            d.elapsed += 1;
            self.mean = d.from + (d.to - d.from) * f64::from(d.elapsed) / f64::from(d.total);
            if d.elapsed >= d.total {
                self.drift = None;
            }
        }
        let dt = self.config.dt;
        let noise: f64 = if self.diffusion > 0.0 {
            StandardNormal.sample(rng)
        } else {
            0.0
        };
        let next = self.value + self.stiffness * (self.mean - self.value) * dt + self.diffusion * dt.sqrt() * noise;
        self.value = next.clamp(self.config.r_min, self.config.r_max);
        self.value
    }
}
