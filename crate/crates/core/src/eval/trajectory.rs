//! Closed-loop rollouts and their per-step log.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::envs::{EnvKind, Environment};
use crate::error::{ensure_dim, Error, Result};
use crate::policy::Controller;

/// Column-major log of one rollout; every vector column holds `channels`
/// entries per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub kind: EnvKind,
    pub channels: usize,
    /// Normalization limit of the task reward.
    pub limit: f64,
    pub reference: Vec<f64>,
    pub measurement: Vec<f64>,
    pub proportional: Vec<f64>,
    pub integral: Vec<f64>,
    pub applied: Vec<f64>,
    pub zeta: Vec<f64>,
    /// Task reward with zero discount.
    pub reward: Vec<f64>,
    pub terminal: Vec<bool>,
}

impl Trajectory {
    pub fn new(kind: EnvKind, limit: f64) -> Self {
        Trajectory {
            kind,
            channels: kind.channels(),
            limit,
            reference: Vec::new(),
            measurement: Vec::new(),
            proportional: Vec::new(),
            integral: Vec::new(),
            applied: Vec::new(),
            zeta: Vec::new(),
            reward: Vec::new(),
            terminal: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }

    /// Appends one step; `zeta` may be empty.
    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        reference: &[f64],
        measurement: &[f64],
        proportional: &[f64],
        integral: &[f64],
        applied: &[f64],
        zeta: &[f64],
        reward: f64,
        terminal: bool,
    ) -> Result<()> {
        let m = self.channels;
        for (what, v) in [
            ("reference", reference),
            ("measurement", measurement),
            ("proportional", proportional),
            ("integral", integral),
            ("applied", applied),
        ] {
            ensure_dim(what, m, v.len())?;
        }
        self.reference.extend_from_slice(reference);
        self.measurement.extend_from_slice(measurement);
        self.proportional.extend_from_slice(proportional);
        self.integral.extend_from_slice(integral);
        self.applied.extend_from_slice(applied);
        if zeta.is_empty() {
            self.zeta.extend(std::iter::repeat_n(0.0, m));
        } else {
            ensure_dim("zeta", m, zeta.len())?;
            self.zeta.extend_from_slice(zeta);
        }
        self.reward.push(reward);
        self.terminal.push(terminal);
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let m = self.channels;
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["k".to_string()];
        for col in ["ref", "meas", "u_p", "u_i", "u", "zeta"] {
            header.extend((0..m).map(|c| format!("{col}_{c}")));
        }
        header.push("reward".into());
        header.push("terminal".into());
        w.write_record(&header)?;
        let mut row = Vec::with_capacity(header.len());
        for k in 0..self.len() {
            row.clear();
            row.push(k.to_string());
            for col in [
                &self.reference,
                &self.measurement,
                &self.proportional,
                &self.integral,
                &self.applied,
                &self.zeta,
            ] {
                row.extend(col[k * m..(k + 1) * m].iter().map(|v| format!("{v:e}")));
            }
            row.push(format!("{:e}", self.reward[k]));
            row.push(u8::from(self.terminal[k]).to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `controller` for `steps` steps from a fresh reset.
pub fn run_episode<E: Environment, C: Controller + ?Sized>(
    env: &mut E,
    controller: &mut C,
    steps: usize,
    limit: f64,
) -> Result<Trajectory> {
    let mut traj = Trajectory::new(env.kind(), limit);
    let mut obs = env.reset(None)?;
    controller.reset();
    for _ in 0..steps {
        let a = controller.act(&obs)?;
        let tr = env.step(a.input())?;
        let reward = env.task_reward(&tr.info.reference, &tr.info.measurement, 0.0);
        if !reward.is_finite() {
            return Err(Error::Environment("non-finite reward during evaluation".into()));
        }
        traj.push(
            &tr.info.reference,
            &tr.info.measurement,
            &a.proportional,
            &a.integral,
            &a.applied,
            &a.zeta,
            reward,
            tr.terminal,
        )?;
        if tr.terminal {
            break;
        }
        obs = tr.observation;
    }
    Ok(traj)
}
