//! Grid-forming inverter feeding a resistive load through an LC filter.
//!
//! Plant state is `[i_d, i_q, i_0, v_d, v_q, v_0]` (filter currents and
//! capacitor voltages in the dq0 frame rotating at grid frequency):
//!
//! ```text
//! L di/dt = v_inv - R_f i - v  (+ w L i_q on d, - w L i_d on q)
//! C dv/dt = i - v / R_load     (+ w C v_q on d, - w C v_d on q)
//! ```
//!
//! with `v_inv = u * v_DC / 2`. The zero-sequence channel carries no
//! cross-coupling.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::load::{LoadProcess, LoadProcessConfig};
use super::{mre_reward, rk4_step, EnvKind, Environment, History, StepInfo, StepInput, Transition};
use crate::error::{ensure_dim, Error, Result};
use crate::seeds::{self, Stream};

pub const GRID_CHANNELS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridParams {
    /// Filter inductance (H).
    pub l: f64,
    /// Filter resistance (ohm).
    pub r_f: f64,
    /// Filter capacitance (F).
    pub c: f64,
    /// Grid frequency (Hz).
    pub f: f64,
    /// DC-link voltage (V).
    pub v_dc: f64,
    /// Nominal voltage amplitude (V, peak).
    pub v_nom: f64,
    pub v_lim: f64,
    pub i_lim: f64,
    /// Control period (s).
    pub dt: f64,
    /// Integration substeps per control period.
    pub substeps: usize,
    /// Voltage measurement noise std (V).
    pub sigma_v: f64,
    /// Current measurement noise std (A).
    pub sigma_i: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        let v_nom = 120.0 * 2f64.sqrt();
        GridParams {
            l: 2.3e-3,
            r_f: 0.4,
            c: 10e-6,
            f: 60.0,
            v_dc: 600.0,
            v_nom,
            v_lim: 1.5 * v_nom,
            i_lim: 30.0,
            dt: 1e-4,
            substeps: 10,
            sigma_v: 0.5,
            sigma_i: 0.05,
        }
    }
}

impl GridParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("l", self.l),
            ("r_f", self.r_f),
            ("c", self.c),
            ("f", self.f),
            ("v_dc", self.v_dc),
            ("v_nom", self.v_nom),
            ("v_lim", self.v_lim),
            ("i_lim", self.i_lim),
            ("dt", self.dt),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("env.grid.{name} must be > 0, got {v}")));
            }
        }
        if self.substeps == 0 {
            return Err(Error::config("env.grid.substeps must be >= 1"));
        }
        if self.sigma_v < 0.0 || self.sigma_i < 0.0 {
            return Err(Error::config("measurement noise std must be >= 0"));
        }
        let resonance_period = 2.0 * std::f64::consts::PI * (self.l * self.c).sqrt();
        if resonance_period <= 4.0 * self.h() {
            return Err(Error::config(format!(
                "LC resonance period {resonance_period:.3e}s too short for integration step {:.3e}s",
                self.h()
            )));
        }
        Ok(())
    }

    /// Integration step (s).
    pub fn h(&self) -> f64 {
        self.dt / self.substeps as f64
    }

    pub fn omega(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.f
    }

    pub fn reference(&self) -> [f64; 3] {
        [self.v_nom, 0.0, 0.0]
    }
}

/// Time derivative of `[i_dq0, v_dq0]` under inverter voltage `v_inv`.
pub fn grid_derivative(x: &[f64; 6], v_inv: &[f64; 3], r_load: f64, p: &GridParams) -> [f64; 6] {
    let w = p.omega();
    let [id, iq, i0, vd, vq, v0] = *x;
    [
        (v_inv[0] - p.r_f * id - vd + w * p.l * iq) / p.l,
        (v_inv[1] - p.r_f * iq - vq - w * p.l * id) / p.l,
        (v_inv[2] - p.r_f * i0 - v0) / p.l,
        (id - vd / r_load + w * p.c * vq) / p.c,
        (iq - vq / r_load - w * p.c * vd) / p.c,
        (i0 - v0 / r_load) / p.c,
    ]
}

/// Integrates one control period with modulation index `u` held constant.
pub fn grid_dynamics(x: &[f64; 6], u: &[f64; 3], r_load: f64, p: &GridParams) -> Result<[f64; 6]> {
    let half = p.v_dc / 2.0;
    let v_inv = [u[0] * half, u[1] * half, u[2] * half];
    let h = p.h();
    let mut state = *x;
    for _ in 0..p.substeps {
        state = rk4_step(|s| grid_derivative(s, &v_inv, r_load, p), &state, h);
    }
    if state.iter().all(|v| v.is_finite()) {
        Ok(state)
    } else {
        Err(Error::Environment("grid plant state became non-finite".into()))
    }
}

/// Task reward: mean root error of the normalized voltages.
pub fn grid_reward(v_ref: &[f64], v: &[f64], v_lim: f64, gamma: f64) -> f64 {
    mre_reward(v_ref, v, v_lim, gamma)
}

/// Observation layout, `18 + 3 * history` entries:
/// `i/i_lim, v/v_lim, v*/v_lim, (v* - v)/(2 v_lim), u_P, u_I, past v/v_lim`.
pub fn grid_features(
    i: &[f64; 3],
    v: &[f64; 3],
    p: &GridParams,
    last_p: &[f64],
    last_i: &[f64],
    history: &[f64],
) -> Vec<f64> {
    let v_ref = p.reference();
    let mut obs = Vec::with_capacity(18 + history.len());
    obs.extend(i.iter().map(|x| x / p.i_lim));
    obs.extend(v.iter().map(|x| x / p.v_lim));
    obs.extend(v_ref.iter().map(|x| x / p.v_lim));
    obs.extend(v_ref.iter().zip(v).map(|(r, x)| 0.5 * (r - x) / p.v_lim));
    obs.extend_from_slice(last_p);
    obs.extend_from_slice(last_i);
    obs.extend(history.iter().map(|x| x / p.v_lim));
    obs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridEnvConfig {
    pub params: GridParams,
    pub load: LoadProcessConfig,
    /// Number of past voltage measurements in the observation.
    pub history: usize,
    /// Discount used to normalize the task reward.
    pub gamma: f64,
    pub measurement_noise: bool,
    /// End the episode with `terminal = true` on a voltage or current limit violation.
    pub terminate_on_limits: bool,
}

impl Default for GridEnvConfig {
    fn default() -> Self {
        GridEnvConfig {
            params: GridParams::default(),
            load: LoadProcessConfig::default(),
            history: 5,
            gamma: 0.946,
            measurement_noise: true,
            terminate_on_limits: true,
        }
    }
}

impl GridEnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.load.validate()?;
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config(format!("discount must be in [0, 1), got {}", self.gamma)));
        }
        Ok(())
    }

    pub fn obs_dim(&self) -> usize {
        6 * GRID_CHANNELS + GRID_CHANNELS * self.history
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum LoadSource {
    Stochastic(LoadProcess),
    /// Frozen per-step resistance values; the last value holds past the end.
    Profile(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridEnv {
    config: GridEnvConfig,
    load_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    load: LoadSource,
    /// `[i_dq0, v_dq0]`.
    plant: [f64; 6],
    r_load: f64,
    pending: [f64; 3],
    last_p: Vec<f64>,
    last_i: Vec<f64>,
    measured_v: [f64; 3],
    history: History,
    k: u64,
    done: bool,
}

impl GridEnv {
    /// Environment driven by the stochastic load process.
    pub fn new(config: GridEnvConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut load_rng = seeds::rng(seed, Stream::Load);
        let load = LoadProcess::new(config.load.clone(), &mut load_rng)?;
        let r_load = load.value();
        Ok(Self::assemble(config, seed, load_rng, LoadSource::Stochastic(load), r_load))
    }

    /// Environment replaying a frozen load profile (one value per step).
    pub fn with_load_profile(config: GridEnvConfig, seed: u64, profile: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if profile.is_empty() {
            return Err(Error::config("load profile is empty"));
        }
        if profile.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::config("load profile values must be positive"));
        }
        let r_load = profile[0];
        let load_rng = seeds::rng(seed, Stream::Load);
        Ok(Self::assemble(config, seed, load_rng, LoadSource::Profile(profile), r_load))
    }

    fn assemble(config: GridEnvConfig, seed: u64, load_rng: ChaCha8Rng, load: LoadSource, r_load: f64) -> Self {
        let history = History::new(config.history, GRID_CHANNELS);
        GridEnv {
            load_rng,
            noise_rng: seeds::rng(seed, Stream::Noise),
            load,
            plant: [0.0; 6],
            r_load,
            pending: [0.0; 3],
            last_p: vec![0.0; GRID_CHANNELS],
            last_i: vec![0.0; GRID_CHANNELS],
            measured_v: [0.0; 3],
            history,
            k: 0,
            done: false,
            config,
        }
    }

    pub fn config(&self) -> &GridEnvConfig {
        &self.config
    }

    pub fn params(&self) -> &GridParams {
        &self.config.params
    }

    /// True plant state `[i_dq0, v_dq0]`.
    pub fn plant_state(&self) -> [f64; 6] {
        self.plant
    }

    pub fn set_plant_state(&mut self, state: [f64; 6]) {
        self.plant = state;
    }

    pub fn load_resistance(&self) -> f64 {
        self.r_load
    }

    pub fn steps(&self) -> u64 {
        self.k
    }

    /// Stored filter energy `L|i|^2/2 + C|v|^2/2` of the true state.
    pub fn stored_energy(&self) -> f64 {
        let p = &self.config.params;
        let (i, v) = self.plant.split_at(3);
        0.5 * p.l * i.iter().map(|x| x * x).sum::<f64>() + 0.5 * p.c * v.iter().map(|x| x * x).sum::<f64>()
    }

    fn next_load(&mut self) -> f64 {
        match &mut self.load {
            LoadSource::Stochastic(proc_) => proc_.step(&mut self.load_rng),
            LoadSource::Profile(values) => {
                let idx = (self.k as usize).min(values.len() - 1);
                values[idx]
            }
        }
    }

    fn measure(&mut self) -> ([f64; 3], [f64; 3]) {
        let p = &self.config.params;
        let mut i = [self.plant[0], self.plant[1], self.plant[2]];
        let mut v = [self.plant[3], self.plant[4], self.plant[5]];
        if self.config.measurement_noise {
            for x in &mut i {
                let n: f64 = StandardNormal.sample(&mut self.noise_rng);
                *x += p.sigma_i * n;
            }
            for x in &mut v {
                let n: f64 = StandardNormal.sample(&mut self.noise_rng);
                *x += p.sigma_v * n;
            }
        }
        (i, v)
    }

    fn limits_violated(&self) -> bool {
        let p = &self.config.params;
        self.plant[..3].iter().any(|x| x.abs() > p.i_lim) || self.plant[3..].iter().any(|x| x.abs() > p.v_lim)
    }
}

impl Environment for GridEnv {
    fn kind(&self) -> EnvKind {
        EnvKind::Grid
    }

    fn action_dim(&self) -> usize {
        GRID_CHANNELS
    }

    fn obs_dim(&self) -> usize {
        self.config.obs_dim()
    }

    fn reset(&mut self, seed: Option<u64>) -> Result<Vec<f64>> {
        if let Some(s) = seed {
            self.load_rng = seeds::rng(s, Stream::Load);
            self.noise_rng = seeds::rng(s, Stream::Noise);
        }
        match &mut self.load {
            LoadSource::Stochastic(proc_) => {
                *proc_ = LoadProcess::new(self.config.load.clone(), &mut self.load_rng)?;
                self.r_load = proc_.value();
            }
            LoadSource::Profile(values) => self.r_load = values[0],
        }
        self.plant = [0.0; 6];
        self.pending = [0.0; 3];
        self.last_p.iter_mut().for_each(|x| *x = 0.0);
        self.last_i.iter_mut().for_each(|x| *x = 0.0);
        self.measured_v = [0.0; 3];
        self.history.clear();
        self.k = 0;
        self.done = false;
        Ok(grid_features(
            &[0.0; 3],
            &[0.0; 3],
            &self.config.params,
            &self.last_p,
            &self.last_i,
            self.history.as_slice(),
        ))
    }

    fn step(&mut self, input: StepInput<'_>) -> Result<Transition> {
        if self.done {
            return Err(Error::StepAfterTerminal);
        }
        ensure_dim("grid action", GRID_CHANNELS, input.applied.len())?;
        ensure_dim("proportional channels", GRID_CHANNELS, input.proportional.len())?;
        ensure_dim("integral channels", GRID_CHANNELS, input.integral.len())?;
        if input.applied.iter().any(|u| !(-1.0..=1.0).contains(u)) {
            return Err(Error::Environment(format!("action {:?} outside [-1, 1]", input.applied)));
        }

        // dead time: this period integrates last period's command
        let active = self.pending;
        self.pending.copy_from_slice(input.applied);
        self.last_p.copy_from_slice(input.proportional);
        self.last_i.copy_from_slice(input.integral);
        self.history.push(&self.measured_v);

        self.r_load = self.next_load();
        self.plant = grid_dynamics(&self.plant, &active, self.r_load, &self.config.params)?;
        self.k += 1;

        let (i_meas, v_meas) = self.measure();
        self.measured_v = v_meas;
        let p = &self.config.params;
        let observation = grid_features(&i_meas, &v_meas, p, &self.last_p, &self.last_i, self.history.as_slice());
        let reference = p.reference();
        let reward = grid_reward(&reference, &v_meas, p.v_lim, self.config.gamma);
        let terminal = self.config.terminate_on_limits && self.limits_violated();
        self.done = terminal;
        Ok(Transition {
            observation,
            reward,
            terminal,
            info: StepInfo {
                reference: reference.to_vec(),
                measurement: v_meas.to_vec(),
                load: Some(self.r_load),
            },
        })
    }

    fn task_reward(&self, reference: &[f64], measurement: &[f64], gamma: f64) -> f64 {
        grid_reward(reference, measurement, self.config.params.v_lim, gamma)
    }
}
