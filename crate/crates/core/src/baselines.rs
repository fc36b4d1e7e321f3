//! PI controllers with back-calculation anti-windup.

use serde::{Deserialize, Serialize};

use crate::envs::grid::GRID_CHANNELS;
use crate::envs::motor::MOTOR_CHANNELS;
use crate::envs::{Environment, GridEnv, GridEnvConfig, GridParams, MotorParams};
use crate::error::{ensure_dim, Error, Result};
use crate::policy::{ControlAction, Controller};

/// One PI channel: `u = clip(K_p e + acc)`, `acc' = acc + K_i e dt + k_aw (u - u_unclipped)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiState {
    pub kp: f64,
    pub ki: f64,
    /// Symmetric output limit.
    pub limit: f64,
    pub k_aw: f64,
    pub acc: f64,
}

impl PiState {
    /// Anti-windup gain defaults to `K_i dt / K_p`, capped at 1 so the
    /// saturated accumulator converges instead of oscillating.
    pub fn new(kp: f64, ki: f64, limit: f64, dt: f64) -> Self {
        let k_aw = if kp > 0.0 { (ki * dt / kp).min(1.0) } else { 0.0 };
        PiState {
            kp,
            ki,
            limit,
            k_aw,
            acc: 0.0,
        }
    }

    /// Output for error `e`, with `offset` added before saturation.
    pub fn step_with_offset(&mut self, e: f64, offset: f64, dt: f64) -> f64 {
        let unclipped = self.kp * e + self.acc + offset;
        let u = unclipped.clamp(-self.limit, self.limit);
        self.acc += self.ki * e * dt + self.k_aw * (u - unclipped);
        u
    }

    pub fn step(&mut self, e: f64, dt: f64) -> f64 {
        self.step_with_offset(e, 0.0, dt)
    }

    pub fn reset(&mut self) {
        self.acc = 0.0;
    }
}

/// Proportional and integral gain of one loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiGains {
    pub kp: f64,
    pub ki: f64,
}

/// Symmetrical-optimum gains for a first-order current loop with inductance
/// `l` and `delay_steps` of dead time, in volts per ampere.
///
/// The dead time plus half a period of zero-order hold is lumped into one
/// small lag `T_s = (delay_steps + 0.5) dt`; then `K_p = L / (2 T_s)` and
/// `T_n = 4 T_s`.
pub fn symmetrical_optimum(l: f64, dt: f64, delay_steps: f64) -> Result<PiGains> {
    if !(l > 0.0 && dt > 0.0 && delay_steps >= 0.0) {
        return Err(Error::config("symmetrical optimum needs positive inductance and sampling time"));
    }
    let t_sigma = (delay_steps + 0.5) * dt;
    let kp = l / (2.0 * t_sigma);
    let tn = 4.0 * t_sigma;
    Ok(PiGains { kp, ki: kp / tn })
}

/// Per-axis motor gains in modulation index per ampere.
pub fn symmetrical_optimum_gains(p: &MotorParams, delay_steps: f64) -> Result<[PiGains; 2]> {
    p.validate()?;
    let half = p.v_dc / 2.0;
    let mut out = [PiGains { kp: 0.0, ki: 0.0 }; 2];
    for (g, l) in out.iter_mut().zip([p.l_d, p.l_q]) {
        let v = symmetrical_optimum(l, p.dt, delay_steps)?;
        *g = PiGains {
            kp: v.kp / half,
            ki: v.ki / half,
        };
    }
    Ok(out)
}

/// dq current controller for the motor plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotorPi {
    params: MotorParams,
    loops: [PiState; 2],
    /// Add the cross-coupling and back-EMF voltages as feed-forward.
    pub decoupling: bool,
}

impl MotorPi {
    pub fn new(params: MotorParams, gains: [PiGains; 2], decoupling: bool) -> Self {
        let loops = gains.map(|g| PiState::new(g.kp, g.ki, 1.0, params.dt));
        MotorPi {
            params,
            loops,
            decoupling,
        }
    }

    /// Symmetrical-optimum tuning for one step of dead time.
    pub fn tuned(params: MotorParams, decoupling: bool) -> Result<Self> {
        let gains = symmetrical_optimum_gains(&params, 1.0)?;
        Ok(Self::new(params, gains, decoupling))
    }

    pub fn gains(&self) -> [PiGains; 2] {
        self.loops.clone().map(|l| PiGains { kp: l.kp, ki: l.ki })
    }
}

impl Controller for MotorPi {
    fn reset(&mut self) {
        self.loops.iter_mut().for_each(PiState::reset);
    }

    fn act(&mut self, obs: &[f64]) -> Result<ControlAction> {
        if obs.len() < 4 {
            return Err(Error::dim("motor observation", 4, obs.len()));
        }
        let p = &self.params;
        let i = [obs[0] * p.i_lim, obs[1] * p.i_lim];
        let i_ref = [obs[2] * p.i_lim, obs[3] * p.i_lim];
        let half = p.v_dc / 2.0;
        let ff = if self.decoupling {
            let w = p.omega_el;
            [-w * p.l_q * i[1] / half, w * (p.l_d * i[0] + p.psi_pm) / half]
        } else {
            [0.0; 2]
        };
        let mut u = vec![0.0; MOTOR_CHANNELS];
        for c in 0..MOTOR_CHANNELS {
            u[c] = self.loops[c].step_with_offset(i_ref[c] - i[c], ff[c], p.dt);
        }
        Ok(ControlAction {
            proportional: u.clone(),
            integral: vec![0.0; MOTOR_CHANNELS],
            zeta: self.loops.iter().map(|l| l.acc).collect(),
            applied: u,
        })
    }
}

/// Gains of the voltage (outer) and current (inner) loops, in amperes per
/// volt and modulation index per ampere respectively.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCascadeGains {
    pub voltage: PiGains,
    pub current: PiGains,
}

/// Voltage-to-current-to-modulation cascade for the grid plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCascade {
    params: GridParams,
    gains: GridCascadeGains,
    outer: [PiState; 3],
    inner: [PiState; 3],
    /// Cross-coupling compensation in both loops.
    pub decoupling: bool,
    /// Adds an estimate of the load current to the current reference.
    pub load_current_ff: bool,
    last_v: Option<[f64; 3]>,
}

impl GridCascade {
    pub fn new(params: GridParams, gains: GridCascadeGains) -> Self {
        let outer = std::array::from_fn(|_| PiState::new(gains.voltage.kp, gains.voltage.ki, params.i_lim, params.dt));
        let inner = std::array::from_fn(|_| PiState::new(gains.current.kp, gains.current.ki, 1.0, params.dt));
        GridCascade {
            params,
            gains,
            outer,
            inner,
            decoupling: true,
            load_current_ff: false,
            last_v: None,
        }
    }

    /// Rule-of-thumb starting point: symmetrical optimum on the inductor
    /// with one step of dead time, and on the capacitor with the closed
    /// current loop as lag.
    pub fn default_gains(p: &GridParams) -> Result<GridCascadeGains> {
        let inner = symmetrical_optimum(p.l, p.dt, 1.0)?;
        let outer = symmetrical_optimum(p.c, p.dt, 3.5)?;
        Ok(GridCascadeGains {
            voltage: outer,
            current: PiGains {
                kp: inner.kp / (p.v_dc / 2.0),
                ki: inner.ki / (p.v_dc / 2.0),
            },
        })
    }

    pub fn gains(&self) -> GridCascadeGains {
        self.gains
    }
}

impl Controller for GridCascade {
    fn reset(&mut self) {
        self.outer.iter_mut().for_each(PiState::reset);
        self.inner.iter_mut().for_each(PiState::reset);
        self.last_v = None;
    }

    fn act(&mut self, obs: &[f64]) -> Result<ControlAction> {
        if obs.len() < 9 {
            return Err(Error::dim("grid observation", 9, obs.len()));
        }
        let p = &self.params;
        let i: [f64; 3] = std::array::from_fn(|c| obs[c] * p.i_lim);
        let v: [f64; 3] = std::array::from_fn(|c| obs[3 + c] * p.v_lim);
        let v_ref: [f64; 3] = std::array::from_fn(|c| obs[6 + c] * p.v_lim);
        let w = p.omega();
        let half = p.v_dc / 2.0;

        let mut i_ff = if self.decoupling {
            [-w * p.c * v[1], w * p.c * v[0], 0.0]
        } else {
            [0.0; 3]
        };
        if self.load_current_ff {
            // inductor current minus the capacitor charging current
            let prev = self.last_v.unwrap_or(v);
            for c in 0..3 {
                i_ff[c] += i[c] - p.c * (v[c] - prev[c]) / p.dt;
            }
        }
        self.last_v = Some(v);

        let mut u = vec![0.0; GRID_CHANNELS];
        for c in 0..3 {
            let i_ref = self.outer[c].step_with_offset(v_ref[c] - v[c], i_ff[c], p.dt);
            let v_ff = if self.decoupling {
                match c {
                    0 => v[0] - w * p.l * i[1],
                    1 => v[1] + w * p.l * i[0],
                    _ => v[2],
                }
            } else {
                v[c]
            };
            u[c] = self.inner[c].step_with_offset(i_ref - i[c], v_ff / half, p.dt);
        }
        Ok(ControlAction {
            proportional: u.clone(),
            integral: vec![0.0; GRID_CHANNELS],
            zeta: self.inner.iter().map(|l| l.acc).collect(),
            applied: u,
        })
    }
}

/// Candidate values for each gain of the cascade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPiSearch {
    /// Multipliers applied to [`GridCascade::default_gains`].
    pub voltage_kp: Vec<f64>,
    pub voltage_ki: Vec<f64>,
    pub current_kp: Vec<f64>,
    pub current_ki: Vec<f64>,
    /// Validation episode length in steps.
    pub steps: usize,
}

impl Default for GridPiSearch {
    fn default() -> Self {
        GridPiSearch {
            voltage_kp: vec![0.25, 0.5, 1.0, 2.0],
            voltage_ki: vec![0.1, 0.3, 1.0],
            current_kp: vec![0.5, 1.0, 1.5],
            current_ki: vec![0.1, 0.3, 1.0],
            steps: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPiTuning {
    pub gains: GridCascadeGains,
    /// Mean task reward (zero discount) on the validation episode.
    pub reward: f64,
    pub candidates: usize,
    pub stable_candidates: usize,
}

/// Mean zero-discount task reward of `controller` over `steps` steps, or
/// `None` if a limit was violated.
pub fn closed_loop_reward<E: Environment, C: Controller>(
    env: &mut E,
    controller: &mut C,
    steps: usize,
) -> Result<Option<f64>> {
    let mut obs = env.reset(None)?;
    controller.reset();
    let mut sum = 0.0;
    for _ in 0..steps {
        let a = controller.act(&obs)?;
        ensure_dim("controller output", env.action_dim(), a.applied.len())?;
        let tr = env.step(a.input())?;
        if tr.terminal {
            return Ok(None);
        }
        sum += env.task_reward(&tr.info.reference, &tr.info.measurement, 0.0);
        obs = tr.observation;
    }
    Ok(Some(sum / steps.max(1) as f64))
}

/// Coarse grid search over cascade gains on one seeded validation episode.
pub fn grid_pi_tune(config: &GridEnvConfig, search: &GridPiSearch, seed: u64) -> Result<GridPiTuning> {
    let mut cfg = config.clone();
    cfg.terminate_on_limits = true;
    let base = GridCascade::default_gains(&cfg.params)?;
    let mut best: Option<(f64, GridCascadeGains)> = None;
    let mut candidates = 0;
    let mut stable = 0;
    for &vkp in &search.voltage_kp {
        for &vki in &search.voltage_ki {
            for &ckp in &search.current_kp {
                for &cki in &search.current_ki {
                    candidates += 1;
                    let gains = GridCascadeGains {
                        voltage: PiGains {
                            kp: base.voltage.kp * vkp,
                            ki: base.voltage.ki * vki,
                        },
                        current: PiGains {
                            kp: base.current.kp * ckp,
                            ki: base.current.ki * cki,
                        },
                    };
                    let mut env = GridEnv::new(cfg.clone(), seed)?;
                    let mut ctrl = GridCascade::new(cfg.params.clone(), gains);
                    let Some(r) = closed_loop_reward(&mut env, &mut ctrl, search.steps)? else {
                        continue;
                    };
                    stable += 1;
                    if best.as_ref().is_none_or(|(b, _)| r > *b) {
                        best = Some((r, gains));
                    }
                }
            }
        }
    }
    match best {
        Some((reward, gains)) => Ok(GridPiTuning {
            gains,
            reward,
            candidates,
            stable_candidates: stable,
        }),
        None => Err(Error::Tuning(format!(
            "none of {candidates} gain candidates completed the {}-step validation episode without a limit violation",
            search.steps
        ))),
    }
}
