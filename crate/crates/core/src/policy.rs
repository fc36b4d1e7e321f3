//! Closed-loop controllers that map observations to plant actions.

use serde::{Deserialize, Serialize};

use crate::envs::StepInput;
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::sec::SecState;

/// Everything a controller produced for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlAction {
    /// Action applied to the plant.
    pub applied: Vec<f64>,
    /// Proportional channels echoed into the next observation.
    pub proportional: Vec<f64>,
    /// Integral channels echoed into the next observation.
    pub integral: Vec<f64>,
    /// Integrator state after the step (empty when there is none).
    pub zeta: Vec<f64>,
}

impl ControlAction {
    pub fn input(&self) -> StepInput<'_> {
        StepInput {
            applied: &self.applied,
            proportional: &self.proportional,
            integral: &self.integral,
        }
    }
}

pub trait Controller {
    /// Clears internal state at the start of an episode.
    fn reset(&mut self);
    fn act(&mut self, obs: &[f64]) -> Result<ControlAction>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecParams {
    pub t_i: f64,
    pub t_aw: f64,
}

/// Deterministic actor, optionally followed by the integrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorPolicy {
    pub actor: Mlp,
    pub sec: Option<SecParams>,
    #[serde(skip)]
    state: Option<SecState>,
}

impl ActorPolicy {
    pub fn new(actor: Mlp, sec: Option<SecParams>) -> Self {
        ActorPolicy { actor, sec, state: None }
    }

    /// Plant action dimension.
    pub fn action_dim(&self) -> usize {
        match self.sec {
            Some(_) => self.actor.output_dim() / 2,
            None => self.actor.output_dim(),
        }
    }

    fn sec_state(&mut self) -> Result<Option<&mut SecState>> {
        let Some(p) = self.sec else { return Ok(None) };
        if self.actor.output_dim() % 2 != 0 {
            return Err(Error::config("augmented actor needs an even output width"));
        }
        if self.state.is_none() {
            self.state = Some(SecState::new(self.actor.output_dim() / 2, p.t_i, p.t_aw)?);
        }
        Ok(self.state.as_mut())
    }
}

impl Controller for ActorPolicy {
    fn reset(&mut self) {
        if let Some(s) = &mut self.state {
            s.reset();
        }
    }

    fn act(&mut self, obs: &[f64]) -> Result<ControlAction> {
        let raw = self.actor.predict_one(obs)?;
        match self.sec_state()? {
            Some(state) => {
                let out = state.apply(&raw)?;
                let m = raw.len() / 2;
                Ok(ControlAction {
                    applied: out.applied,
                    proportional: raw[..m].to_vec(),
                    integral: raw[m..].to_vec(),
                    zeta: state.zeta().to_vec(),
                })
            }
            None => Ok(ControlAction {
                integral: vec![0.0; raw.len()],
                proportional: raw.clone(),
                applied: raw,
                zeta: Vec::new(),
            }),
        }
    }
}
