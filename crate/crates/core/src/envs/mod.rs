//! Benchmark plants behind a common agent-environment contract.
//!
//! Both plants are simulated natively in the rotating dq(0) frame. Actions are
//! inverter modulation indices in `[-1, 1]` and are applied with one control
//! period of dead time.

pub mod grid;
pub mod load;
pub mod motor;
pub mod reference;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use grid::{GridEnv, GridEnvConfig, GridParams};
pub use load::{LoadProcess, LoadProcessConfig};
pub use motor::{MotorEnv, MotorEnvConfig, MotorParams};
pub use reference::{ReferenceGenerator, ReferenceMode};

/// Action handed to [`Environment::step`].
///
/// `applied` drives the plant. `proportional` and `integral` are the raw
/// actor channels echoed back as features on the next observation; agents
/// without integral augmentation pass their action as `proportional` and
/// zeros as `integral`.
#[derive(Debug, Clone, Copy)]
pub struct StepInput<'a> {
    pub applied: &'a [f64],
    pub proportional: &'a [f64],
    pub integral: &'a [f64],
}

impl<'a> StepInput<'a> {
    /// Input for a controller without integral channels.
    pub fn plain(applied: &'a [f64], zeros: &'a [f64]) -> Self {
        StepInput {
            applied,
            proportional: applied,
            integral: zeros,
        }
    }
}

/// Physical signals behind one observation, in plant units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub reference: Vec<f64>,
    /// Measured (possibly noisy) controlled quantity.
    pub measurement: Vec<f64>,
    /// Load resistance in ohms (grid only).
    pub load: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    /// Task reward with the environment's configured discount normalization.
    pub reward: f64,
    /// Plant limit violation.
    pub terminal: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Grid,
    Motor,
}

impl EnvKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvKind::Grid => "grid",
            EnvKind::Motor => "motor",
        }
    }

    /// Number of controlled channels.
    pub fn channels(self) -> usize {
        match self {
            EnvKind::Grid => 3,
            EnvKind::Motor => 2,
        }
    }
}

pub trait Environment {
    fn kind(&self) -> EnvKind;
    fn action_dim(&self) -> usize;
    fn obs_dim(&self) -> usize;
    /// Starts a new episode. `Some(seed)` reseeds every random stream first.
    fn reset(&mut self, seed: Option<u64>) -> Result<Vec<f64>>;
    fn step(&mut self, input: StepInput<'_>) -> Result<Transition>;
    /// Task reward for a reference/measurement pair under discount `gamma`.
    fn task_reward(&self, reference: &[f64], measurement: &[f64], gamma: f64) -> f64;
}

/// Either benchmark, for code that picks the plant at run time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum AnyEnv {
    Grid(Box<GridEnv>),
    Motor(Box<MotorEnv>),
}

impl Environment for AnyEnv {
    fn kind(&self) -> EnvKind {
        match self {
            AnyEnv::Grid(e) => e.kind(),
            AnyEnv::Motor(e) => e.kind(),
        }
    }

    fn action_dim(&self) -> usize {
        match self {
            AnyEnv::Grid(e) => e.action_dim(),
            AnyEnv::Motor(e) => e.action_dim(),
        }
    }

    fn obs_dim(&self) -> usize {
        match self {
            AnyEnv::Grid(e) => e.obs_dim(),
            AnyEnv::Motor(e) => e.obs_dim(),
        }
    }

    fn reset(&mut self, seed: Option<u64>) -> Result<Vec<f64>> {
        match self {
            AnyEnv::Grid(e) => e.reset(seed),
            AnyEnv::Motor(e) => e.reset(seed),
        }
    }

    fn step(&mut self, input: StepInput<'_>) -> Result<Transition> {
        match self {
            AnyEnv::Grid(e) => e.step(input),
            AnyEnv::Motor(e) => e.step(input),
        }
    }

    fn task_reward(&self, reference: &[f64], measurement: &[f64], gamma: f64) -> f64 {
        match self {
            AnyEnv::Grid(e) => e.task_reward(reference, measurement, gamma),
            AnyEnv::Motor(e) => e.task_reward(reference, measurement, gamma),
        }
    }
}

/// Mean-root-error reward: `-(1 - gamma)/n * sum sqrt(min(|ref - meas| / limit, 1))`.
pub fn mre_reward(reference: &[f64], measurement: &[f64], limit: f64, gamma: f64) -> f64 {
    let n = reference.len() as f64;
    let sum: f64 = reference
        .iter()
        .zip(measurement)
        .map(|(r, y)| ((r - y).abs() / limit).min(1.0).sqrt())
        .sum();
    -(1.0 - gamma) / n * sum
}

/// One classical fourth-order Runge-Kutta step of `dx/dt = f(x)`.
pub fn rk4_step<const N: usize>(f: impl Fn(&[f64; N]) -> [f64; N], x: &[f64; N], h: f64) -> [f64; N] {
    let add = |a: &[f64; N], b: &[f64; N], s: f64| -> [f64; N] {
        let mut out = *a;
        for i in 0..N {
            out[i] += s * b[i];
        }
        out
    };
    let k1 = f(x);
    let k2 = f(&add(x, &k1, h / 2.0));
    let k3 = f(&add(x, &k2, h / 2.0));
    let k4 = f(&add(x, &k3, h));
    let mut out = *x;
    for i in 0..N {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Fixed-length window of past measurements, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct History {
    width: usize,
    len: usize,
    /// Flat `len * width` buffer, oldest entry first.
    data: Vec<f64>,
}

impl History {
    pub(crate) fn new(len: usize, width: usize) -> Self {
        History {
            width,
            len,
            data: vec![0.0; len * width],
        }
    }

    pub(crate) fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    pub(crate) fn push(&mut self, sample: &[f64]) {
        if self.len == 0 {
            return;
        }
        self.data.drain(..self.width);
        self.data.extend_from_slice(sample);
    }

    pub(crate) fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rk4_exponential_decay() {
        let x = rk4_step(|x: &[f64; 1]| [-x[0]], &[1.0], 0.1);
        // RK4 matches the Taylor series of exp(-h) through h^4
        let h: f64 = 0.1;
        let taylor = 1.0 - h + h * h / 2.0 - h.powi(3) / 6.0 + h.powi(4) / 24.0;
        assert!((x[0] - taylor).abs() < 1e-15);
    }

    #[test]
    fn mre_examples() {
        assert_eq!(mre_reward(&[1.0, 2.0], &[1.0, 2.0], 5.0, 0.9), 0.0);
        let r = mre_reward(&[10.0, 0.0, 0.0], &[0.0, 0.0, 0.0], 10.0, 0.0);
        assert!((r + 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(mre_reward(&[3.0], &[0.0], 1.0, 0.5), -0.5);
    }

    #[test]
    fn history_keeps_latest_oldest_first() {
        let mut h = History::new(2, 2);
        h.push(&[1.0, 1.0]);
        h.push(&[2.0, 2.0]);
        h.push(&[3.0, 3.0]);
        assert_eq!(h.as_slice(), &[2.0, 2.0, 3.0, 3.0]);
        let mut empty = History::new(0, 3);
        empty.push(&[1.0, 2.0, 3.0]);
        assert!(empty.as_slice().is_empty());
    }
}
