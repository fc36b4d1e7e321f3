//! Run configuration.
//!
//! A TOML document whose keys are grouped into sections: `run`, `train`,
//! `agent`, `sec`, `env`, `eval` and `pi`. Keys may be written as tables or
//! as flat dotted keys (`agent.gamma = 0.95`); command-line overrides use the
//! same dotted paths. Precedence is overrides > file > defaults, and unknown
//! keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ddpg::{AgentConfig, LrSchedule, SecConfig, TrainConfig};
use crate::envs::{AnyEnv, EnvKind, GridEnv, GridEnvConfig, GridParams, LoadProcessConfig, MotorEnv, MotorEnvConfig, MotorParams};
use crate::error::{Error, Result};
use crate::nn::OptimizerKind;
use crate::seeds::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Ddpg,
    SecDdpg,
    Pi,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Ddpg => "ddpg",
            Variant::SecDdpg => "sec-ddpg",
            Variant::Pi => "pi",
        }
    }

    pub fn is_learned(self) -> bool {
        !matches!(self, Variant::Pi)
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ddpg" => Ok(Variant::Ddpg),
            "sec-ddpg" => Ok(Variant::SecDdpg),
            "pi" => Ok(Variant::Pi),
            other => Err(Error::config(format!("unknown variant {other:?} (expected ddpg, sec-ddpg or pi)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub env: EnvKind,
    pub variant: Variant,
    pub seed: u64,
    /// Seeds for `compare`.
    pub seeds: Vec<u64>,
    /// Variants for `compare`.
    pub variants: Vec<Variant>,
    /// Accept hyperparameters outside their documented search space.
    pub allow_out_of_range: bool,
    /// Steps between checkpoints during `train` (0 disables).
    pub checkpoint_every: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            env: EnvKind::Grid,
            variant: Variant::SecDdpg,
            seed: 0,
            seeds: vec![1, 2, 3, 4, 5],
            variants: vec![Variant::Ddpg, Variant::SecDdpg, Variant::Pi],
            allow_out_of_range: false,
            checkpoint_every: 50_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub total_steps: u64,
    pub episode_steps: u64,
    /// Horizon that the step-indexed schedules in `agent` and `sec` refer to.
    pub schedule_horizon: u64,
    /// Rescale schedules from `schedule_horizon` to `total_steps`.
    pub rescale_schedules: bool,
    pub violation_reward: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            total_steps: 200_000,
            episode_steps: 2811,
            schedule_horizon: 5_000_000,
            rescale_schedules: true,
            violation_reward: -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentSection {
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub buffer_size: usize,
    pub train_freq: u64,
    pub actor_layers: usize,
    pub actor_neurons: usize,
    pub actor_beta: f64,
    pub critic_layers: usize,
    pub critic_neurons: usize,
    pub critic_beta: f64,
    pub weight_scale: f64,
    pub bias_scale: f64,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub lr_final: f64,
    pub lr_decay_start: u64,
    pub lr_decay_end: u64,
    pub noise_stiffness: f64,
    pub noise_diffusion: f64,
    pub noise_mean: f64,
}

impl Default for AgentSection {
    fn default() -> Self {
        AgentSection {
            gamma: 0.946,
            tau: 2.61e-3,
            batch_size: 261,
            buffer_size: 3_870_000,
            train_freq: 2,
            actor_layers: 2,
            actor_neurons: 25,
            actor_beta: 0.208,
            critic_layers: 4,
            critic_neurons: 295,
            critic_beta: 6.79e-3,
            weight_scale: 8.5e-4,
            bias_scale: 2e-2,
            optimizer: OptimizerKind::Adam,
            lr: 3.75e-4,
            lr_final: 3.13e-4,
            lr_decay_start: 1_375_000,
            lr_decay_end: 1_620_000,
            noise_stiffness: 31.58,
            noise_diffusion: 0.026,
            noise_mean: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SecSection {
    pub t_i: f64,
    pub t_aw: f64,
    pub kappa_p: f64,
    pub kappa_i: f64,
    pub kappa_p_decay_start: u64,
    pub kappa_i_decay_start: u64,
}

impl Default for SecSection {
    fn default() -> Self {
        let d = SecConfig::default();
        SecSection {
            t_i: d.t_i,
            t_aw: d.t_aw,
            kappa_p: d.kappa_p,
            kappa_i: d.kappa_i,
            kappa_p_decay_start: d.kappa_p_decay_start,
            kappa_i_decay_start: d.kappa_i_decay_start,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceSection {
    pub feasibility: f64,
    pub hold_probability: f64,
}

impl Default for ReferenceSection {
    fn default() -> Self {
        let d = MotorEnvConfig::default();
        ReferenceSection {
            feasibility: d.feasibility,
            hold_probability: d.hold_probability,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSection {
    /// Past measurements in the observation.
    pub history: usize,
    pub measurement_noise: bool,
    /// End training episodes on a limit violation.
    pub terminate_on_limits: bool,
    pub grid: GridParams,
    pub load: LoadProcessConfig,
    pub motor: MotorParams,
    pub reference: ReferenceSection,
}

impl Default for EnvSection {
    fn default() -> Self {
        EnvSection {
            history: 5,
            measurement_noise: true,
            terminate_on_limits: true,
            grid: GridParams::default(),
            load: LoadProcessConfig::default(),
            motor: MotorParams::default(),
            reference: ReferenceSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Length of the grid load-profile test case.
    pub profile_steps: usize,
    pub segments: usize,
    pub segment_steps: usize,
    pub grid_skip: usize,
    pub motor_skip: usize,
    /// Seed of the frozen test cases.
    pub test_case_seed: u64,
    pub write_trajectories: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            profile_steps: 100_000,
            segments: 20,
            segment_steps: 500,
            grid_skip: 100,
            motor_skip: 200,
            test_case_seed: 2021,
            write_trajectories: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PiSection {
    pub decoupling: bool,
    /// Dead-time steps assumed by the symmetrical optimum.
    pub motor_delay_steps: f64,
    /// Validation episode length for the grid gain search.
    pub tune_steps: usize,
}

impl Default for PiSection {
    fn default() -> Self {
        PiSection {
            decoupling: true,
            motor_delay_steps: 1.0,
            tune_steps: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub train: TrainSection,
    pub agent: AgentSection,
    pub sec: SecSection,
    pub env: EnvSection,
    pub eval: EvalSection,
    pub pi: PiSection,
}

/// Parses `key=value`, reading the value as a TOML literal and falling back
/// to a bare string.
pub fn parse_override(s: &str) -> Result<(Vec<String>, toml::Value)> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override {s:?} is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::config(format!("override key {key:?} is malformed")));
    }
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    Ok((key.split('.').map(str::to_string).collect(), value))
}

fn insert_path(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(format!("override path crosses non-table key {p:?}")))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

/// A closed interval check used for search-space validation.
fn within(name: &str, v: f64, lo: f64, hi: f64, out: &mut Vec<String>) {
    if !(v >= lo && v <= hi) {
        out.push(format!("{name} = {v} outside [{lo}, {hi}]"));
    }
}

impl RunConfig {
    /// Merges an optional TOML document and `key=value` overrides onto the defaults.
    pub fn from_sources(document: Option<&str>, overrides: &[String]) -> Result<Self> {
        let mut table = match document {
            Some(text) => toml::from_str::<toml::Table>(text).map_err(|e| Error::config(format!("malformed config: {e}")))?,
            None => toml::Table::new(),
        };
        for o in overrides {
            let (path, value) = parse_override(o)?;
            insert_path(&mut table, &path, value)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::config(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_sources(Some(&text), overrides)
            }
            None => Self::from_sources(None, overrides),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config(e.to_string()))
    }

    /// Writes the effective configuration to `dir/config.toml`.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.toml"), self.to_toml()?)?;
        Ok(())
    }

    /// Hyperparameters outside their documented search space.
    pub fn out_of_range(&self) -> Vec<String> {
        let a = &self.agent;
        let s = &self.sec;
        let horizon = self.train.schedule_horizon as f64;
        let mut out = Vec::new();
        within("agent.gamma", a.gamma, 0.5, 0.999, &mut out);
        within("train.episode_steps", self.train.episode_steps as f64, 1.0, 5000.0, &mut out);
        within("agent.actor_beta", a.actor_beta, 1e-3, 0.5, &mut out);
        within("agent.critic_beta", a.critic_beta, 1e-3, 0.5, &mut out);
        within("agent.actor_layers", a.actor_layers as f64, 1.0, 4.0, &mut out);
        within("agent.actor_neurons", a.actor_neurons as f64, 10.0, 200.0, &mut out);
        within("agent.critic_layers", a.critic_layers as f64, 1.0, 4.0, &mut out);
        within("agent.critic_neurons", a.critic_neurons as f64, 10.0, 300.0, &mut out);
        within("agent.lr", a.lr, 1e-6, 5e-2, &mut out);
        within("agent.lr_final", a.lr_final, 1e-12, a.lr, &mut out);
        within("agent.lr_decay_start", a.lr_decay_start as f64, 0.0, horizon, &mut out);
        within("agent.lr_decay_end", a.lr_decay_end as f64, a.lr_decay_start as f64, horizon, &mut out);
        within("agent.buffer_size", a.buffer_size as f64, 2e4, horizon, &mut out);
        within("agent.batch_size", a.batch_size as f64, 16.0, 1024.0, &mut out);
        within("agent.tau", a.tau, 1e-4, 0.3, &mut out);
        within("agent.weight_scale", a.weight_scale, 5e-5, 0.2, &mut out);
        within("agent.bias_scale", a.bias_scale, 5e-4, 0.2, &mut out);
        within("agent.noise_stiffness", a.noise_stiffness, 1.0, 50.0, &mut out);
        within("agent.noise_diffusion", a.noise_diffusion, 1e-2, 1.0, &mut out);
        within("agent.train_freq", a.train_freq as f64, 1.0, 15e3, &mut out);
        within("sec.kappa_p_decay_start", s.kappa_p_decay_start as f64, 0.0, horizon, &mut out);
        within("sec.kappa_i_decay_start", s.kappa_i_decay_start as f64, 0.0, horizon, &mut out);
        within("sec.kappa_p", s.kappa_p, 0.0, 2.0, &mut out);
        within("sec.kappa_i", s.kappa_i, 0.0, 2.0, &mut out);
        within("sec.t_i", s.t_i, 5e-3, 2.0, &mut out);
        within("sec.t_aw", s.t_aw, 1e-5, 1.0, &mut out);
        within("env.history", self.env.history as f64, 0.0, 50.0, &mut out);
        out
    }

    pub fn validate(&self) -> Result<()> {
        if !self.run.allow_out_of_range {
            let bad = self.out_of_range();
            if !bad.is_empty() {
                return Err(Error::config(format!(
                    "{} (set run.allow_out_of_range = true to accept)",
                    bad.join("; ")
                )));
            }
        }
        if self.run.seeds.is_empty() {
            return Err(Error::config("run.seeds must not be empty"));
        }
        if self.run.variants.is_empty() {
            return Err(Error::config("run.variants must not be empty"));
        }
        let e = &self.eval;
        if e.segment_steps == 0 || e.segments == 0 {
            return Err(Error::config("eval.segments and eval.segment_steps must be >= 1"));
        }
        if e.grid_skip >= e.segment_steps || e.motor_skip >= e.segment_steps {
            return Err(Error::config("steady-state skip must be shorter than a segment"));
        }
        if e.profile_steps == 0 {
            return Err(Error::config("eval.profile_steps must be >= 1"));
        }
        self.train_config(Variant::SecDdpg)?.validate()?;
        self.grid_env_config(true).validate()?;
        self.motor_env_config(true).validate()?;
        Ok(())
    }

    /// Learner settings for `variant` with schedules rescaled to the horizon.
    pub fn train_config(&self, variant: Variant) -> Result<TrainConfig> {
        let a = &self.agent;
        let s = &self.sec;
        let mut cfg = TrainConfig {
            agent: AgentConfig {
                gamma: a.gamma,
                tau: a.tau,
                actor_layers: a.actor_layers,
                actor_neurons: a.actor_neurons,
                actor_beta: a.actor_beta,
                critic_layers: a.critic_layers,
                critic_neurons: a.critic_neurons,
                critic_beta: a.critic_beta,
                actor_weight_scale: a.weight_scale,
                actor_bias_scale: a.bias_scale,
                optimizer: a.optimizer,
            },
            lr: LrSchedule {
                initial: a.lr,
                final_rate: a.lr_final,
                decay_start: a.lr_decay_start,
                decay_end: a.lr_decay_end,
            },
            batch_size: a.batch_size,
            train_freq: a.train_freq,
            buffer_size: a.buffer_size,
            noise_stiffness: a.noise_stiffness,
            noise_diffusion: a.noise_diffusion,
            noise_mean: a.noise_mean,
            dt: self.dt(),
            total_steps: self.train.total_steps,
            episode_steps: self.train.episode_steps,
            violation_reward: self.train.violation_reward,
            sec: match variant {
                Variant::SecDdpg => Some(SecConfig {
                    t_i: s.t_i,
                    t_aw: s.t_aw,
                    kappa_p: s.kappa_p,
                    kappa_i: s.kappa_i,
                    kappa_p_decay_start: s.kappa_p_decay_start,
                    kappa_i_decay_start: s.kappa_i_decay_start,
                }),
                Variant::Ddpg => None,
                Variant::Pi => return Err(Error::config("the pi variant has no learner")),
            },
        };
        if self.train.rescale_schedules {
            cfg.rescale_schedules(self.train.schedule_horizon);
        } else if let Some(sec) = &mut cfg.sec {
            sec.kappa_p_decay_start = sec.kappa_p_decay_start.min(cfg.total_steps);
            sec.kappa_i_decay_start = sec.kappa_i_decay_start.min(cfg.total_steps);
        }
        Ok(cfg)
    }

    /// Control period of the selected environment.
    pub fn dt(&self) -> f64 {
        match self.run.env {
            EnvKind::Grid => self.env.grid.dt,
            EnvKind::Motor => self.env.motor.dt,
        }
    }

    /// `training` selects limit termination; evaluation runs never terminate.
    pub fn grid_env_config(&self, training: bool) -> GridEnvConfig {
        GridEnvConfig {
            params: self.env.grid.clone(),
            load: self.env.load.clone(),
            history: self.env.history,
            gamma: self.agent.gamma,
            measurement_noise: self.env.measurement_noise,
            terminate_on_limits: training && self.env.terminate_on_limits,
        }
    }

    pub fn motor_env_config(&self, training: bool) -> MotorEnvConfig {
        MotorEnvConfig {
            params: self.env.motor.clone(),
            history: self.env.history,
            gamma: self.agent.gamma,
            feasibility: self.env.reference.feasibility,
            hold_probability: self.env.reference.hold_probability,
            terminate_on_limits: training && self.env.terminate_on_limits,
        }
    }

    /// Training environment for a run seed.
    pub fn training_env(&self, seed: u64) -> Result<AnyEnv> {
        let env_seed = seeds::derive(seed, Stream::Environment);
        Ok(match self.run.env {
            EnvKind::Grid => AnyEnv::Grid(Box::new(GridEnv::new(self.grid_env_config(true), env_seed)?)),
            EnvKind::Motor => AnyEnv::Motor(Box::new(MotorEnv::new(self.motor_env_config(true), env_seed)?)),
        })
    }

    /// Steps skipped at the start of each steady-state segment.
    pub fn steady_state_skip(&self) -> usize {
        match self.run.env {
            EnvKind::Grid => self.eval.grid_skip,
            EnvKind::Motor => self.eval.motor_skip,
        }
    }
}
