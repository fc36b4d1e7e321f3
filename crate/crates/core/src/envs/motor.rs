//! Permanent-magnet synchronous motor current loop at fixed electrical speed.
//!
//! ```text
//! L_d di_d/dt = v_d - R_s i_d + w L_q i_q
//! L_q di_q/dt = v_q - R_s i_q - w (L_d i_d + psi_PM)
//! ```
//!
//! with `v_dq = u * v_DC / 2`. Mechanical dynamics are not modelled.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::reference::{ReferenceGenerator, ReferenceMode};
use super::{mre_reward, rk4_step, EnvKind, Environment, History, StepInfo, StepInput, Transition};
use crate::error::{ensure_dim, Error, Result};
use crate::seeds::{self, Stream};

pub const MOTOR_CHANNELS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotorParams {
    pub r_s: f64,
    pub l_d: f64,
    pub l_q: f64,
    pub psi_pm: f64,
    /// Electrical angular velocity (rad/s), held constant.
    pub omega_el: f64,
    pub v_dc: f64,
    pub i_lim: f64,
    pub dt: f64,
    pub substeps: usize,
}

impl Default for MotorParams {
    fn default() -> Self {
        MotorParams {
            r_s: 0.25,
            l_d: 1.2e-3,
            l_q: 1.2e-3,
            psi_pm: 50e-3,
            omega_el: 2.0 * std::f64::consts::PI * 100.0,
            v_dc: 350.0,
            i_lim: 20.0,
            dt: 1e-4,
            substeps: 10,
        }
    }
}

impl MotorParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("r_s", self.r_s),
            ("l_d", self.l_d),
            ("l_q", self.l_q),
            ("psi_pm", self.psi_pm),
            ("v_dc", self.v_dc),
            ("i_lim", self.i_lim),
            ("dt", self.dt),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("env.motor.{name} must be > 0, got {v}")));
            }
        }
        if !(self.omega_el >= 0.0 && self.omega_el.is_finite()) {
            return Err(Error::config("env.motor.omega_el must be >= 0"));
        }
        if self.substeps == 0 {
            return Err(Error::config("env.motor.substeps must be >= 1"));
        }
        Ok(())
    }

    pub fn h(&self) -> f64 {
        self.dt / self.substeps as f64
    }
}

pub fn motor_derivative(i: &[f64; 2], v: &[f64; 2], p: &MotorParams) -> [f64; 2] {
    let w = p.omega_el;
    [
        (v[0] - p.r_s * i[0] + w * p.l_q * i[1]) / p.l_d,
        (v[1] - p.r_s * i[1] - w * (p.l_d * i[0] + p.psi_pm)) / p.l_q,
    ]
}

/// Integrates one control period with modulation index `u` held constant.
pub fn motor_dynamics(i: &[f64; 2], u: &[f64; 2], p: &MotorParams) -> Result<[f64; 2]> {
    let half = p.v_dc / 2.0;
    let v = [u[0] * half, u[1] * half];
    let h = p.h();
    let mut state = *i;
    for _ in 0..p.substeps {
        state = rk4_step(|s| motor_derivative(s, &v, p), &state, h);
    }
    if state.iter().all(|x| x.is_finite()) {
        Ok(state)
    } else {
        Err(Error::Environment("motor currents became non-finite".into()))
    }
}

pub fn motor_reward(i_ref: &[f64], i: &[f64], i_lim: f64, gamma: f64) -> f64 {
    mre_reward(i_ref, i, i_lim, gamma)
}

/// Observation layout, `10 + 2 * history` entries:
/// `i/i_lim, i*/i_lim, (i* - i)/(2 i_lim), u_P, u_I, past i/i_lim`.
pub fn motor_features(
    i: &[f64; 2],
    i_ref: &[f64; 2],
    i_lim: f64,
    last_p: &[f64],
    last_i: &[f64],
    history: &[f64],
) -> Vec<f64> {
    let mut obs = Vec::with_capacity(10 + history.len());
    obs.extend(i.iter().map(|x| x / i_lim));
    obs.extend(i_ref.iter().map(|x| x / i_lim));
    obs.extend(i_ref.iter().zip(i).map(|(r, x)| 0.5 * (r - x) / i_lim));
    obs.extend_from_slice(last_p);
    obs.extend_from_slice(last_i);
    obs.extend(history.iter().map(|x| x / i_lim));
    obs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotorEnvConfig {
    pub params: MotorParams,
    pub history: usize,
    pub gamma: f64,
    /// References are confined to `|i*| <= feasibility * i_lim`.
    pub feasibility: f64,
    /// Per-step probability of keeping the current training reference.
    pub hold_probability: f64,
    pub terminate_on_limits: bool,
}

impl Default for MotorEnvConfig {
    fn default() -> Self {
        MotorEnvConfig {
            params: MotorParams::default(),
            history: 5,
            gamma: 0.946,
            feasibility: 0.9,
            hold_probability: 0.998,
            terminate_on_limits: true,
        }
    }
}

impl MotorEnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config(format!("discount must be in [0, 1), got {}", self.gamma)));
        }
        if !(self.feasibility > 0.0 && self.feasibility <= 1.0) {
            return Err(Error::config("env.motor.feasibility must be in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.hold_probability) {
            return Err(Error::config("env.motor.hold_probability must be in [0, 1]"));
        }
        Ok(())
    }

    pub fn obs_dim(&self) -> usize {
        5 * MOTOR_CHANNELS + MOTOR_CHANNELS * self.history
    }

    pub fn reference_radius(&self) -> f64 {
        self.feasibility * self.params.i_lim
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MotorEnv {
    config: MotorEnvConfig,
    ref_rng: ChaCha8Rng,
    references: ReferenceGenerator,
    currents: [f64; 2],
    pending: [f64; 2],
    last_p: Vec<f64>,
    last_i: Vec<f64>,
    history: History,
    k: u64,
    done: bool,
}

impl MotorEnv {
    /// Training environment with randomly drawn references.
    pub fn new(config: MotorEnvConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mode = ReferenceMode::Random {
            hold_probability: config.hold_probability,
        };
        Self::assemble(config, seed, mode)
    }

    /// Environment replaying a frozen reference schedule (one entry per step).
    pub fn with_schedule(config: MotorEnvConfig, seed: u64, schedule: Vec<[f64; 2]>) -> Result<Self> {
        config.validate()?;
        Self::assemble(config, seed, ReferenceMode::Schedule(schedule))
    }

    fn assemble(config: MotorEnvConfig, seed: u64, mode: ReferenceMode) -> Result<Self> {
        let references = ReferenceGenerator::new(mode, config.reference_radius())?;
        let mut env = MotorEnv {
            ref_rng: seeds::rng(seed, Stream::Reference),
            references,
            currents: [0.0; 2],
            pending: [0.0; 2],
            last_p: vec![0.0; MOTOR_CHANNELS],
            last_i: vec![0.0; MOTOR_CHANNELS],
            history: History::new(config.history, MOTOR_CHANNELS),
            k: 0,
            done: false,
            config,
        };
        env.references.reset(&mut env.ref_rng);
        Ok(env)
    }

    pub fn config(&self) -> &MotorEnvConfig {
        &self.config
    }

    pub fn params(&self) -> &MotorParams {
        &self.config.params
    }

    pub fn currents(&self) -> [f64; 2] {
        self.currents
    }

    pub fn set_currents(&mut self, i: [f64; 2]) {
        self.currents = i;
    }

    pub fn reference(&self) -> [f64; 2] {
        self.references.current()
    }

    fn observe(&self) -> Vec<f64> {
        motor_features(
            &self.currents,
            &self.references.current(),
            self.config.params.i_lim,
            &self.last_p,
            &self.last_i,
            self.history.as_slice(),
        )
    }
}

impl Environment for MotorEnv {
    fn kind(&self) -> EnvKind {
        EnvKind::Motor
    }

    fn action_dim(&self) -> usize {
        MOTOR_CHANNELS
    }

    fn obs_dim(&self) -> usize {
        self.config.obs_dim()
    }

    fn reset(&mut self, seed: Option<u64>) -> Result<Vec<f64>> {
        if let Some(s) = seed {
            self.ref_rng = seeds::rng(s, Stream::Reference);
        }
        self.references.reset(&mut self.ref_rng);
        self.currents = [0.0; 2];
        self.pending = [0.0; 2];
        self.last_p.iter_mut().for_each(|x| *x = 0.0);
        self.last_i.iter_mut().for_each(|x| *x = 0.0);
        self.history.clear();
        self.k = 0;
        self.done = false;
        Ok(self.observe())
    }

    fn step(&mut self, input: StepInput<'_>) -> Result<Transition> {
        if self.done {
            return Err(Error::StepAfterTerminal);
        }
        ensure_dim("motor action", MOTOR_CHANNELS, input.applied.len())?;
        ensure_dim("proportional channels", MOTOR_CHANNELS, input.proportional.len())?;
        ensure_dim("integral channels", MOTOR_CHANNELS, input.integral.len())?;
        if input.applied.iter().any(|u| !(-1.0..=1.0).contains(u)) {
            return Err(Error::Environment(format!("action {:?} outside [-1, 1]", input.applied)));
        }

        let active = self.pending;
        self.pending.copy_from_slice(input.applied);
        self.last_p.copy_from_slice(input.proportional);
        self.last_i.copy_from_slice(input.integral);
        self.history.push(&self.currents);

        self.currents = motor_dynamics(&self.currents, &active, &self.config.params)?;
        self.k += 1;

        // score against the reference that was in force while acting
        let tracked = self.references.current();
        let p = &self.config.params;
        let reward = motor_reward(&tracked, &self.currents, p.i_lim, self.config.gamma);
        let terminal = self.config.terminate_on_limits && self.currents.iter().any(|x| x.abs() > p.i_lim);
        self.done = terminal;
        self.references.advance(&mut self.ref_rng);
        Ok(Transition {
            observation: self.observe(),
            reward,
            terminal,
            info: StepInfo {
                reference: tracked.to_vec(),
                measurement: self.currents.to_vec(),
                load: None,
            },
        })
    }

    fn task_reward(&self, reference: &[f64], measurement: &[f64], gamma: f64) -> f64 {
        motor_reward(reference, measurement, self.config.params.i_lim, gamma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observation_length() {
        let cfg = MotorEnvConfig::default();
        assert_eq!(cfg.obs_dim(), 20);
        let mut env = MotorEnv::new(cfg, 0).unwrap();
        assert_eq!(env.reset(None).unwrap().len(), 20);
    }

    #[test]
    fn at_rest_without_speed() {
        let p = MotorParams {
            omega_el: 0.0,
            ..Default::default()
        };
        assert_eq!(motor_dynamics(&[0.0; 2], &[0.0; 2], &p).unwrap(), [0.0; 2]);
    }

    #[test]
    fn reward_examples() {
        assert_eq!(motor_reward(&[3.0, -2.0], &[3.0, -2.0], 20.0, 0.946), 0.0);
        assert!((motor_reward(&[20.0, -20.0], &[0.0, 0.0], 20.0, 0.0) + 1.0).abs() < 1e-15);
        assert!((motor_reward(&[20.0, 0.0], &[0.0, 0.0], 20.0, 0.946) + 0.027).abs() < 1e-12);
    }

    #[test]
    fn tracking_gives_zero_error_block() {
        let obs = motor_features(&[4.0, -3.0], &[4.0, -3.0], 20.0, &[0.0; 2], &[0.0; 2], &[0.0; 10]);
        assert_eq!(&obs[4..6], &[0.0, 0.0]);
    }

    #[test]
    fn features_bounded_within_limits() {
        let obs = motor_features(&[20.0, -20.0], &[-18.0, 18.0], 20.0, &[1.0, -1.0], &[1.0, 1.0], &[20.0; 10]);
        assert!(obs.iter().all(|x| x.abs() <= 1.0));
    }

    #[test]
    fn schedule_drives_reference_info() {
        let sched = vec![[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]];
        let mut env = MotorEnv::with_schedule(MotorEnvConfig::default(), 0, sched).unwrap();
        let obs = env.reset(None).unwrap();
        assert!((obs[2] - 1.0 / 20.0).abs() < 1e-15);
        let z = [0.0; 2];
        let t = env.step(StepInput::plain(&z, &z)).unwrap();
        assert_eq!(t.info.reference, vec![1.0, 0.0]);
        assert!((t.observation[2] - 2.0 / 20.0).abs() < 1e-15);
    }
}
