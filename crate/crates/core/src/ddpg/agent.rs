//! Actor-critic networks, their targets, and the gradient updates.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::nn::{hconcat, Mlp, MlpSpec, Optimizer, OptimizerKind, OutputActivation, ParamGrads};

use super::replay::Batch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub gamma: f64,
    pub tau: f64,
    pub actor_layers: usize,
    pub actor_neurons: usize,
    pub actor_beta: f64,
    pub critic_layers: usize,
    pub critic_neurons: usize,
    pub critic_beta: f64,
    /// Initial-weight multiplier for the actor.
    pub actor_weight_scale: f64,
    /// Initial-bias multiplier for the actor.
    pub actor_bias_scale: f64,
    pub optimizer: OptimizerKind,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            gamma: 0.946,
            tau: 2.61e-3,
            actor_layers: 2,
            actor_neurons: 25,
            actor_beta: 0.208,
            critic_layers: 4,
            critic_neurons: 295,
            critic_beta: 6.79e-3,
            actor_weight_scale: 8.5e-4,
            actor_bias_scale: 2e-2,
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config(format!("discount must be in [0, 1), got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::config(format!("soft update factor must be in [0, 1], got {}", self.tau)));
        }
        if self.actor_neurons == 0 || self.critic_neurons == 0 {
            return Err(Error::config("hidden layers need at least one neuron"));
        }
        Ok(())
    }

    pub fn actor_spec(&self, obs_dim: usize, action_dim: usize) -> MlpSpec {
        MlpSpec::uniform_hidden(
            obs_dim,
            self.actor_neurons,
            self.actor_layers,
            action_dim,
            self.actor_beta,
            OutputActivation::Tanh,
        )
        .with_scales(self.actor_weight_scale, self.actor_bias_scale)
    }

    pub fn critic_spec(&self, obs_dim: usize, action_dim: usize) -> MlpSpec {
        MlpSpec::uniform_hidden(
            obs_dim + action_dim,
            self.critic_neurons,
            self.critic_layers,
            1,
            self.critic_beta,
            OutputActivation::Linear,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdpgAgent {
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_target: Mlp,
    pub critic_target: Mlp,
    actor_opt: Optimizer,
    critic_opt: Optimizer,
    gamma: f64,
    tau: f64,
    updates: u64,
}

/// Losses reported by one gradient update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_objective: f64,
}

impl DdpgAgent {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, action_dim: usize, config: &AgentConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let actor = Mlp::init(&config.actor_spec(obs_dim, action_dim), rng)?;
        let critic = Mlp::init(&config.critic_spec(obs_dim, action_dim), rng)?;
        Self::from_networks(actor, critic, config)
    }

    /// Wraps existing networks; targets start as exact copies.
    pub fn from_networks(actor: Mlp, critic: Mlp, config: &AgentConfig) -> Result<Self> {
        config.validate()?;
        ensure_dim(
            "critic input",
            actor.input_dim() + actor.output_dim(),
            critic.input_dim(),
        )?;
        ensure_dim("critic output", 1, critic.output_dim())?;
        Ok(DdpgAgent {
            actor_opt: Optimizer::new(config.optimizer, &actor),
            critic_opt: Optimizer::new(config.optimizer, &critic),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            gamma: config.gamma,
            tau: config.tau,
            updates: 0,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Completed gradient updates.
    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Deterministic policy output.
    pub fn act(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.actor.predict_one(obs)
    }

    /// `y = r + gamma (1 - t) q_targ(s', mu_targ(s'))`.
    pub fn bellman_targets(&self, batch: &Batch) -> Result<Array1<f64>> {
        let next_actions = self.actor_target.predict(batch.next_obs.view())?;
        let q_next = self
            .critic_target
            .predict(hconcat(batch.next_obs.view(), next_actions.view())?.view())?;
        let q_next = q_next.column(0);
        Ok(&batch.rewards + &(self.gamma * (1.0 - &batch.terminals) * q_next))
    }

    /// One critic step on the mean squared Bellman error. Returns the loss
    /// before the step.
    pub fn critic_update(&mut self, batch: &Batch, lr: f64) -> Result<f64> {
        let targets = self.bellman_targets(batch)?;
        let (loss, grads) = critic_loss_and_grad(&self.critic, batch.obs.view(), batch.actions.view(), &targets)?;
        if !loss.is_finite() {
            return Err(Error::Training(format!("non-finite critic loss {loss}")));
        }
        self.critic_opt.step(&mut self.critic, &grads, lr)?;
        Ok(loss)
    }

    /// One ascent step on `mean q(s, mu(s))`. Returns the objective before the step.
    pub fn actor_update(&mut self, batch: &Batch, lr: f64) -> Result<f64> {
        let (objective, mut grads) = actor_objective_and_grad(&self.actor, &self.critic, batch.obs.view())?;
        if !objective.is_finite() {
            return Err(Error::Training(format!("non-finite actor objective {objective}")));
        }
        grads.scale(-1.0);
        self.actor_opt.step(&mut self.actor, &grads, lr)?;
        Ok(objective)
    }

    pub fn update_targets(&mut self) -> Result<()> {
        self.actor_target.soft_update_from(&self.actor, self.tau)?;
        self.critic_target.soft_update_from(&self.critic, self.tau)
    }

    /// Critic, then actor, then targets.
    pub fn update(&mut self, batch: &Batch, lr: f64) -> Result<UpdateStats> {
        let critic_loss = self.critic_update(batch, lr)?;
        let actor_objective = self.actor_update(batch, lr)?;
        self.update_targets()?;
        if !(self.actor.is_finite() && self.critic.is_finite()) {
            return Err(Error::Training("network parameters became non-finite".into()));
        }
        self.updates += 1;
        Ok(UpdateStats {
            critic_loss,
            actor_objective,
        })
    }
}

/// `J_q = mean (q(s, a) - y)^2` and its parameter gradient.
pub fn critic_loss_and_grad(
    critic: &Mlp,
    obs: ArrayView2<f64>,
    actions: ArrayView2<f64>,
    targets: &Array1<f64>,
) -> Result<(f64, ParamGrads)> {
    let n = obs.nrows();
    ensure_dim("target count", n, targets.len())?;
    let cache = critic.forward(hconcat(obs, actions)?.view())?;
    let diff = &cache.output().column(0) - targets;
    let loss = diff.mapv(|d| d * d).sum() / n as f64;
    let cot = (diff * (2.0 / n as f64)).insert_axis(Axis(1));
    let (grads, _) = critic.backward(&cache, cot.view())?;
    Ok((loss, grads))
}

/// `J_mu = mean q(s, mu(s))` and its gradient with respect to the actor
/// parameters, with the critic held fixed.
pub fn actor_objective_and_grad(actor: &Mlp, critic: &Mlp, obs: ArrayView2<f64>) -> Result<(f64, ParamGrads)> {
    let n = obs.nrows();
    let a_cache = actor.forward(obs)?;
    let c_cache = critic.forward(hconcat(obs, a_cache.output().view())?.view())?;
    let objective = c_cache.output().sum() / n as f64;
    let cot = Array2::from_elem((n, 1), 1.0 / n as f64);
    let d_input = critic.backward_input(&c_cache, cot.view())?;
    let d_action = d_input.slice(s![.., obs.ncols()..]);
    let (grads, _) = actor.backward(&a_cache, d_action)?;
    Ok((objective, grads))
}
