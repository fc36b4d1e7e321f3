//! The training loop: act with exploration noise, store, update, repeat.

use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::envs::{Environment, StepInput};
use crate::error::{Error, Result};
use crate::nn::OptimizerKind;
use crate::policy::{ActorPolicy, SecParams};
use crate::sec::{sec_actor_width, SecRewardConfig, SecState};
use crate::seeds::{self, Stream};

use super::agent::{AgentConfig, DdpgAgent, UpdateStats};
use super::noise::{noisy_action, OuNoise};
use super::replay::{Experience, ReplayBuffer};
use super::schedule::LrSchedule;

pub const CHECKPOINT_FORMAT: &str = "secrl-trainer";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Integrator and penalty settings of the augmented actor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecConfig {
    pub t_i: f64,
    pub t_aw: f64,
    pub kappa_p: f64,
    pub kappa_i: f64,
    pub kappa_p_decay_start: u64,
    pub kappa_i_decay_start: u64,
}

impl Default for SecConfig {
    fn default() -> Self {
        SecConfig {
            t_i: 0.31,
            t_aw: 0.66,
            kappa_p: 1.48,
            kappa_i: 1.13,
            kappa_p_decay_start: 1_150_000,
            kappa_i_decay_start: 2_750_000,
        }
    }
}

impl SecConfig {
    pub fn params(&self) -> SecParams {
        SecParams {
            t_i: self.t_i,
            t_aw: self.t_aw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub agent: AgentConfig,
    pub lr: LrSchedule,
    pub batch_size: usize,
    /// Environment steps between gradient updates.
    pub train_freq: u64,
    pub buffer_size: usize,
    pub noise_stiffness: f64,
    pub noise_diffusion: f64,
    pub noise_mean: f64,
    /// Control period used by the noise recursion (s).
    pub dt: f64,
    pub total_steps: u64,
    pub episode_steps: u64,
    /// Training reward of a transition that violates a plant limit.
    pub violation_reward: f64,
    pub sec: Option<SecConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            agent: AgentConfig::default(),
            lr: LrSchedule {
                initial: 3.75e-4,
                final_rate: 3.13e-4,
                decay_start: 1_375_000,
                decay_end: 1_620_000,
            },
            batch_size: 261,
            train_freq: 2,
            buffer_size: 3_870_000,
            noise_stiffness: 31.58,
            noise_diffusion: 0.026,
            noise_mean: 0.0,
            dt: 1e-4,
            total_steps: 5_000_000,
            episode_steps: 2811,
            violation_reward: -1.0,
            sec: Some(SecConfig::default()),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.agent.validate()?;
        self.lr.validate()?;
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be >= 1"));
        }
        if self.train_freq == 0 {
            return Err(Error::config("training frequency must be >= 1"));
        }
        if self.buffer_size == 0 {
            return Err(Error::config("replay buffer size must be >= 1"));
        }
        if self.episode_steps == 0 {
            return Err(Error::config("episode length must be >= 1"));
        }
        if !(self.violation_reward <= 0.0 && self.violation_reward.is_finite()) {
            return Err(Error::config("violation reward must be finite and <= 0"));
        }
        if let Some(s) = &self.sec {
            self.sec_reward(s).validate()?;
            SecState::new(1, s.t_i, s.t_aw)?;
        }
        OuNoise::new(1, self.noise_stiffness, self.noise_diffusion, self.noise_mean, self.dt)?;
        Ok(())
    }

    fn sec_reward(&self, s: &SecConfig) -> SecRewardConfig {
        SecRewardConfig {
            kappa_p: s.kappa_p,
            kappa_i: s.kappa_i,
            kappa_p_decay_start: s.kappa_p_decay_start,
            kappa_i_decay_start: s.kappa_i_decay_start,
            total_steps: self.total_steps,
            gamma: self.agent.gamma,
        }
    }

    /// Rescales every step-indexed schedule from `from` total steps to the
    /// configured horizon and caps the buffer at the horizon.
    pub fn rescale_schedules(&mut self, from: u64) {
        if from == 0 {
            return;
        }
        let ratio = self.total_steps as f64 / from as f64;
        let scale = |k: u64| (k as f64 * ratio).round() as u64;
        self.lr.decay_start = scale(self.lr.decay_start);
        self.lr.decay_end = scale(self.lr.decay_end);
        if let Some(s) = &mut self.sec {
            s.kappa_p_decay_start = scale(s.kappa_p_decay_start).min(self.total_steps);
            s.kappa_i_decay_start = scale(s.kappa_i_decay_start).min(self.total_steps);
        }
        self.buffer_size = self.buffer_size.min(self.total_steps.max(1) as usize);
    }

    pub fn optimizer(&self) -> OptimizerKind {
        self.agent.optimizer
    }
}

/// One learning-curve row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: u64,
    pub steps: u64,
    pub mean_reward: f64,
    /// Ended by a limit violation.
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    EpisodeEnd { episode: u64, steps: u64, terminal: bool },
    FirstUpdate,
    Fault { error: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainEvent {
    pub step: u64,
    pub kind: EventKind,
}

/// Snapshot handed to progress callbacks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub step: u64,
    pub total_steps: u64,
    pub episodes: u64,
    pub last_episode_reward: Option<f64>,
    pub last_update: Option<UpdateStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EpisodeAccumulator {
    index: u64,
    steps: u64,
    reward_sum: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "E: Serialize", deserialize = "E: DeserializeOwned"))]
pub struct Trainer<E> {
    config: TrainConfig,
    env: E,
    agent: DdpgAgent,
    buffer: ReplayBuffer,
    noise: OuNoise,
    sec: Option<SecState>,
    sec_reward: Option<SecRewardConfig>,
    exploration_rng: ChaCha8Rng,
    replay_rng: ChaCha8Rng,
    obs: Vec<f64>,
    k: u64,
    episode: EpisodeAccumulator,
    curve: Vec<EpisodeRecord>,
    events: Vec<TrainEvent>,
    last_update: Option<UpdateStats>,
}

/// Result of a completed run.
#[derive(Debug, Clone)]
pub struct TrainOutcome<E> {
    pub agent: DdpgAgent,
    pub policy: ActorPolicy,
    pub curve: Vec<EpisodeRecord>,
    pub events: Vec<TrainEvent>,
    pub env: E,
}

/// A run stopped by a fault; carries the event log up to the fault.
#[derive(Debug, thiserror::Error)]
#[error("training aborted at step {step}: {error}")]
pub struct TrainAbort {
    pub step: u64,
    pub error: Error,
    pub events: Vec<TrainEvent>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "E: Serialize", deserialize = "E: DeserializeOwned"))]
struct CheckpointFile<E> {
    format: String,
    version: u32,
    trainer: Trainer<E>,
}

impl<E: Environment> Trainer<E> {
    /// Fresh trainer. The environment is reset here; seed it before handing it over.
    pub fn new(mut env: E, config: TrainConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let m = env.action_dim();
        let width = if config.sec.is_some() { sec_actor_width(m) } else { m };
        let agent = DdpgAgent::new(env.obs_dim(), width, &config.agent, &mut seeds::rng(seed, Stream::Init))?;
        let buffer = ReplayBuffer::new(config.buffer_size, env.obs_dim(), width)?;
        let noise = OuNoise::new(
            width,
            config.noise_stiffness,
            config.noise_diffusion,
            config.noise_mean,
            config.dt,
        )?;
        let sec = match &config.sec {
            Some(s) => Some(SecState::new(m, s.t_i, s.t_aw)?),
            None => None,
        };
        let sec_reward = config.sec.as_ref().map(|s| config.sec_reward(s));
        let obs = env.reset(None)?;
        Ok(Trainer {
            env,
            agent,
            buffer,
            noise,
            sec,
            sec_reward,
            exploration_rng: seeds::rng(seed, Stream::Exploration),
            replay_rng: seeds::rng(seed, Stream::Replay),
            obs,
            k: 0,
            episode: EpisodeAccumulator {
                index: 0,
                steps: 0,
                reward_sum: 0.0,
            },
            curve: Vec::new(),
            events: Vec::new(),
            last_update: None,
            config,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn agent(&self) -> &DdpgAgent {
        &self.agent
    }

    pub fn env(&self) -> &E {
        &self.env
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn curve(&self) -> &[EpisodeRecord] {
        &self.curve
    }

    pub fn events(&self) -> &[TrainEvent] {
        &self.events
    }

    /// Environment steps taken so far.
    pub fn step_count(&self) -> u64 {
        self.k
    }

    pub fn is_done(&self) -> bool {
        self.k >= self.config.total_steps
    }

    pub fn progress(&self) -> Progress {
        Progress {
            step: self.k,
            total_steps: self.config.total_steps,
            episodes: self.curve.len() as u64,
            last_episode_reward: self.curve.last().map(|r| r.mean_reward),
            last_update: self.last_update,
        }
    }

    /// Current deterministic policy.
    pub fn policy(&self) -> ActorPolicy {
        ActorPolicy::new(self.agent.actor.clone(), self.config.sec.as_ref().map(SecConfig::params))
    }

    /// One environment step, plus a gradient update when due.
    pub fn step(&mut self) -> Result<()> {
        let k = self.k;
        let mu = self.agent.act(&self.obs)?;
        let nu = self.noise.step(&mut self.exploration_rng);
        let raw = noisy_action(&mu, nu)?;
        let m = self.env.action_dim();

        let transition = match &mut self.sec {
            Some(state) => {
                let out = state.apply(&raw)?;
                let (p, i) = raw.split_at(m);
                self.env.step(StepInput {
                    applied: &out.applied,
                    proportional: p,
                    integral: i,
                })?
            }
            None => {
                let zeros = vec![0.0; m];
                self.env.step(StepInput::plain(&raw, &zeros))?
            }
        };
        let reward = match &self.sec_reward {
            _ if transition.terminal => self.config.violation_reward,
            Some(c) => {
                let (p, i) = raw.split_at(m);
                c.shaped_reward(k, transition.reward, p, i)
            }
            None => transition.reward,
        };
        let next_obs = transition.observation;
        self.buffer.push(&Experience {
            obs: std::mem::take(&mut self.obs),
            action: raw,
            reward,
            next_obs: next_obs.clone(),
            terminal: transition.terminal,
        })?;
        self.k += 1;
        self.episode.steps += 1;
        self.episode.reward_sum += reward;

        if self.k % self.config.train_freq == 0 && self.buffer.len() >= self.config.batch_size {
            let batch = self.buffer.sample(self.config.batch_size, &mut self.replay_rng)?;
            let stats = self.agent.update(&batch, self.config.lr.lr_at(k))?;
            if self.last_update.is_none() {
                self.events.push(TrainEvent {
                    step: self.k,
                    kind: EventKind::FirstUpdate,
                });
            }
            self.last_update = Some(stats);
        }

        if transition.terminal || self.episode.steps >= self.config.episode_steps {
            self.close_episode(transition.terminal);
            self.obs = self.env.reset(None)?;
            if let Some(s) = &mut self.sec {
                s.reset();
            }
            self.noise.reset();
        } else {
            self.obs = next_obs;
        }
        Ok(())
    }

    fn close_episode(&mut self, terminal: bool) {
        let rec = EpisodeRecord {
            episode: self.episode.index,
            steps: self.episode.steps,
            mean_reward: self.episode.reward_sum / self.episode.steps as f64,
            terminal,
        };
        self.events.push(TrainEvent {
            step: self.k,
            kind: EventKind::EpisodeEnd {
                episode: rec.episode,
                steps: rec.steps,
                terminal,
            },
        });
        self.curve.push(rec);
        self.episode = EpisodeAccumulator {
            index: self.episode.index + 1,
            steps: 0,
            reward_sum: 0.0,
        };
    }

    /// Steps until `target` (capped at the horizon) or until `keep_going`
    /// returns false. The callback runs every `report_every` steps.
    pub fn run_with<F>(&mut self, target: u64, report_every: u64, mut keep_going: F) -> Result<()>
    where
        F: FnMut(&Progress) -> bool,
    {
        let target = target.min(self.config.total_steps);
        while self.k < target {
            if let Err(e) = self.step() {
                self.events.push(TrainEvent {
                    step: self.k,
                    kind: EventKind::Fault {
                        error: e.kind().to_string(),
                        message: e.to_string(),
                    },
                });
                return Err(e);
            }
            if report_every > 0 && self.k % report_every == 0 && !keep_going(&self.progress()) {
                break;
            }
        }
        Ok(())
    }

    pub fn run_until(&mut self, target: u64) -> Result<()> {
        self.run_with(target, 0, |_| true)
    }

    /// Consumes the trainer. A partially completed final episode is
    /// appended to the curve.
    pub fn finish(mut self) -> TrainOutcome<E> {
        if self.episode.steps > 0 {
            self.close_episode(false);
        }
        TrainOutcome {
            policy: self.policy(),
            agent: self.agent,
            curve: self.curve,
            events: self.events,
            env: self.env,
        }
    }
}

impl<E: Environment + Serialize + DeserializeOwned> Trainer<E> {
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let ck = CheckpointFileRef {
            format: CHECKPOINT_FORMAT,
            version: CHECKPOINT_VERSION,
            trainer: self,
        };
        bincode::serialize_into(BufWriter::new(file), &ck).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        use bincode::Options;
        let file = std::fs::File::open(path)?;
        let len = file.metadata()?.len();
        let ck: CheckpointFile<E> = bincode::DefaultOptions::new()
            .with_fixint_encoding()
            .allow_trailing_bytes()
            .with_limit(len)
            .deserialize_from(BufReader::new(file))
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unexpected checkpoint format {:?}", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        Ok(ck.trainer)
    }
}

#[derive(Serialize)]
#[serde(bound(serialize = "E: Serialize"))]
struct CheckpointFileRef<'a, E> {
    format: &'a str,
    version: u32,
    trainer: &'a Trainer<E>,
}

/// Runs a complete training job.
pub fn train<E: Environment>(env: E, config: TrainConfig, seed: u64) -> std::result::Result<TrainOutcome<E>, TrainAbort> {
    let mut trainer = Trainer::new(env, config, seed).map_err(|error| TrainAbort {
        step: 0,
        error,
        events: Vec::new(),
    })?;
    let total = trainer.config.total_steps;
    match trainer.run_until(total) {
        Ok(()) => Ok(trainer.finish()),
        Err(error) => Err(TrainAbort {
            step: trainer.k,
            error,
            events: trainer.events,
        }),
    }
}

pub fn write_learning_curve(path: &Path, curve: &[EpisodeRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["episode", "steps", "mean_reward", "terminal"])?;
    for r in curve {
        w.write_record([
            r.episode.to_string(),
            r.steps.to_string(),
            format!("{:e}", r.mean_reward),
            u8::from(r.terminal).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
