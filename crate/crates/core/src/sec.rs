//! Integral action state augmentation for actor-critic policies.
//!
//! The actor emits `2m` channels: `m` proportional channels `u_P` followed by
//! `m` integral channels `u_I`. The integral channels are accumulated outside
//! the network,
//!
//! ```text
//! zeta <- zeta + T_I * u_I
//! u     = clip(u_P + zeta, -1, 1)
//! ```
//!
//! and whenever a channel saturates its integrator is bled off by
//! `T_AW * (clip(u) - u)` (back-calculation anti-windup).
//!
//! The shaped reward adds a root penalty on both channel groups and
//! renormalizes so that the per-step reward stays in `[-(1 - gamma), 0]`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};

/// Actor output width for an `m`-dimensional plant action under augmentation.
pub fn sec_actor_width(m: usize) -> usize {
    2 * m
}

/// Integrator state of the augmented actor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecState {
    zeta: Vec<f64>,
    t_i: f64,
    t_aw: f64,
}

/// What happened inside one [`SecState::apply`] call.
#[derive(Debug, Clone, PartialEq)]
pub struct SecOutput {
    /// Action handed to the plant, in `[-1, 1]^m`.
    pub applied: Vec<f64>,
    /// `u_P + zeta'` before saturation.
    pub unclipped: Vec<f64>,
    /// Integrator value after accumulation, before anti-windup.
    pub zeta_accumulated: Vec<f64>,
}

impl SecState {
    pub fn new(m: usize, t_i: f64, t_aw: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::config("action dimension must be >= 1"));
        }
        if !(t_i > 0.0 && t_i.is_finite()) {
            return Err(Error::config(format!("integrator scaling must be > 0, got {t_i}")));
        }
        if !(t_aw > 0.0 && t_aw.is_finite()) {
            return Err(Error::config(format!("anti-windup scaling must be > 0, got {t_aw}")));
        }
        Ok(SecState {
            zeta: vec![0.0; m],
            t_i,
            t_aw,
        })
    }

    pub fn with_zeta(mut self, zeta: Vec<f64>) -> Result<Self> {
        ensure_dim("integrator state", self.zeta.len(), zeta.len())?;
        if zeta.iter().any(|z| !z.is_finite()) {
            return Err(Error::config("integrator state must be finite"));
        }
        self.zeta = zeta;
        Ok(self)
    }

    pub fn action_dim(&self) -> usize {
        self.zeta.len()
    }

    pub fn zeta(&self) -> &[f64] {
        &self.zeta
    }

    pub fn t_i(&self) -> f64 {
        self.t_i
    }

    pub fn t_aw(&self) -> f64 {
        self.t_aw
    }

    /// Clears the integrator. Called at every episode start.
    pub fn reset(&mut self) {
        self.zeta.iter_mut().for_each(|z| *z = 0.0);
    }

    /// Advances the integrator with one raw actor output `[u_P; u_I]` and
    /// returns the applied action. Saturated channels get the anti-windup
    /// correction independently.
    pub fn apply(&mut self, raw: &[f64]) -> Result<SecOutput> {
        let m = self.zeta.len();
        ensure_dim("raw actor output", 2 * m, raw.len())?;
        let (u_p, u_i) = raw.split_at(m);
        let mut applied = Vec::with_capacity(m);
        let mut unclipped = Vec::with_capacity(m);
        let mut accumulated = Vec::with_capacity(m);
        for c in 0..m {
            let zeta = self.zeta[c] + self.t_i * u_i[c];
            let u = u_p[c] + zeta;
            let clipped = u.clamp(-1.0, 1.0);
            accumulated.push(zeta);
            unclipped.push(u);
            applied.push(clipped);
            self.zeta[c] = if clipped != u {
                zeta + self.t_aw * (clipped - u)
            } else {
                zeta
            };
        }
        Ok(SecOutput {
            applied,
            unclipped,
            zeta_accumulated: accumulated,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PenaltyChannel {
    Proportional,
    Integral,
}

/// Penalty scales and their linear decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecRewardConfig {
    pub kappa_p: f64,
    pub kappa_i: f64,
    pub kappa_p_decay_start: u64,
    pub kappa_i_decay_start: u64,
    /// Training horizon; both penalties reach zero here.
    pub total_steps: u64,
    pub gamma: f64,
}

impl SecRewardConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, k) in [("kappa_p", self.kappa_p), ("kappa_i", self.kappa_i)] {
            if !(k >= 0.0 && k.is_finite()) {
                return Err(Error::config(format!("{name} must be >= 0, got {k}")));
            }
        }
        for (name, s) in [
            ("kappa_p decay start", self.kappa_p_decay_start),
            ("kappa_i decay start", self.kappa_i_decay_start),
        ] {
            if s > self.total_steps {
                return Err(Error::config(format!(
                    "{name} ({s}) exceeds the training horizon ({})",
                    self.total_steps
                )));
            }
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config(format!("discount must be in [0, 1), got {}", self.gamma)));
        }
        Ok(())
    }

    /// Penalty scale at step `k`: constant until the decay start, then a
    /// linear ramp that reaches zero at the training horizon.
    pub fn kappa_at(&self, k: u64, channel: PenaltyChannel) -> f64 {
        let (kappa, start) = match channel {
            PenaltyChannel::Proportional => (self.kappa_p, self.kappa_p_decay_start),
            PenaltyChannel::Integral => (self.kappa_i, self.kappa_i_decay_start),
        };
        let end = self.total_steps;
        if k >= end {
            0.0
        } else if k <= start {
            kappa
        } else {
            kappa * (end - k) as f64 / (end - start) as f64
        }
    }

    /// Combined training reward for one transition.
    pub fn shaped_reward(&self, k: u64, task_reward: f64, u_p: &[f64], u_i: &[f64]) -> f64 {
        let kp = self.kappa_at(k, PenaltyChannel::Proportional);
        let ki = self.kappa_at(k, PenaltyChannel::Integral);
        let r_p = sec_penalty(u_p, kp, self.gamma);
        let r_i = sec_penalty(u_i, ki, self.gamma);
        combine_reward(task_reward, r_p, r_i, kp, ki)
    }
}

/// Root penalty on one channel group: `kappa (1 - gamma) / m * sum(-sqrt|u_i|)`.
pub fn sec_penalty(u: &[f64], kappa: f64, gamma: f64) -> f64 {
    if u.is_empty() {
        return 0.0;
    }
    let sum: f64 = u.iter().map(|v| -v.abs().sqrt()).sum();
    kappa * (1.0 - gamma) / u.len() as f64 * sum
}

/// `(r_task + r_P + r_I) / (1 + kappa_P + kappa_I)`.
pub fn combine_reward(r_task: f64, r_p: f64, r_i: f64, kappa_p: f64, kappa_i: f64) -> f64 {
    (r_task + r_p + r_i) / (1.0 + kappa_p + kappa_i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const T_I: f64 = 0.31;
    const T_AW: f64 = 0.66;
    const GAMMA: f64 = 0.946;

    fn reward_cfg() -> SecRewardConfig {
        SecRewardConfig {
            kappa_p: 1.48,
            kappa_i: 1.13,
            kappa_p_decay_start: 1_150_000,
            kappa_i_decay_start: 2_750_000,
            total_steps: 5_000_000,
            gamma: GAMMA,
        }
    }

    #[test]
    fn identity_at_rest() {
        let mut s = SecState::new(1, T_I, T_AW).unwrap();
        let out = s.apply(&[0.0, 0.0]).unwrap();
        assert_eq!(out.applied, vec![0.0]);
        assert_eq!(s.zeta(), &[0.0]);
    }

    #[test]
    fn unsaturated_step() {
        let mut s = SecState::new(1, T_I, T_AW).unwrap();
        let out = s.apply(&[0.2, 0.1]).unwrap();
        assert!((s.zeta()[0] - 0.031).abs() < 1e-15);
        assert!((out.applied[0] - 0.231).abs() < 1e-15);
    }

    #[test]
    fn saturated_step_bleeds_integrator() {
        let mut s = SecState::new(1, T_I, T_AW).unwrap().with_zeta(vec![0.4]).unwrap();
        let out = s.apply(&[0.9, 0.5]).unwrap();
        assert!((out.zeta_accumulated[0] - 0.555).abs() < 1e-12);
        assert!((out.unclipped[0] - 1.455).abs() < 1e-12);
        assert_eq!(out.applied[0], 1.0);
        assert!((s.zeta()[0] - 0.2547).abs() < 1e-12);
    }

    #[test]
    fn anti_windup_is_per_channel() {
        let mut s = SecState::new(2, T_I, T_AW).unwrap().with_zeta(vec![0.9, 0.1]).unwrap();
        s.apply(&[0.5, 0.0, 0.0, 0.0]).unwrap();
        assert!((s.zeta()[0] - (0.9 + T_AW * (1.0 - 1.4))).abs() < 1e-15);
        assert_eq!(s.zeta()[1], 0.1);
    }

    #[test]
    fn wrong_width_rejected() {
        let mut s = SecState::new(3, T_I, T_AW).unwrap();
        assert!(s.apply(&[0.0; 3]).is_err());
        assert!(SecState::new(1, 0.0, T_AW).is_err());
        assert!(SecState::new(1, T_I, -1.0).is_err());
    }

    #[test]
    fn widths() {
        assert_eq!(sec_actor_width(1), 2);
        assert_eq!(sec_actor_width(2), 4);
        assert_eq!(sec_actor_width(3), 6);
    }

    #[test]
    fn kappa_schedule_points() {
        let c = reward_cfg();
        assert_eq!(c.kappa_at(0, PenaltyChannel::Proportional), 1.48);
        assert_eq!(c.kappa_at(5_000_000, PenaltyChannel::Proportional), 0.0);
        assert_eq!(c.kappa_at(9_000_000, PenaltyChannel::Integral), 0.0);
        let mid = (1_150_000 + 5_000_000) / 2;
        assert!((c.kappa_at(mid, PenaltyChannel::Proportional) - 0.74).abs() < 1e-12);
        let mid_i = (2_750_000 + 5_000_000) / 2;
        assert!((c.kappa_at(mid_i, PenaltyChannel::Integral) - 0.565).abs() < 1e-12);
    }

    #[test]
    fn penalty_examples() {
        assert_eq!(sec_penalty(&[0.0], 1.0, GAMMA), 0.0);
        assert!((sec_penalty(&[1.0], 1.0, GAMMA) + 0.054).abs() < 1e-12);
        assert!((sec_penalty(&[1.0, 1.0, 1.0], 1.0, GAMMA) + 0.054).abs() < 1e-12);
        assert!((sec_penalty(&[-0.25], 2.0, 0.0) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn combine_examples() {
        assert_eq!(combine_reward(-0.3, 0.0, 0.0, 0.0, 0.0), -0.3);
        let r = combine_reward(-0.054, 0.0, 0.0, 1.48, 1.13);
        assert!((r - (-0.054 / 3.61)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn summation_form_without_clipping(
            seq in prop::collection::vec((-0.3f64..0.3, -1.0f64..1.0), 1..40)
        ) {
            // keep |u_P + zeta| < 1 by bounding the integral inputs
            let t_i = 0.01;
            let mut s = SecState::new(1, t_i, T_AW).unwrap();
            let mut sum = 0.0;
            for (p, i) in &seq {
                sum += i;
                let out = s.apply(&[*p, *i]).unwrap();
                prop_assert!(out.applied[0] == out.unclipped[0]);
            }
            prop_assert!((s.zeta()[0] - t_i * sum).abs() < 1e-12);
        }

        #[test]
        fn applied_action_in_range(
            zeta in prop::collection::vec(-5.0f64..5.0, 3),
            raw in prop::collection::vec(-1.0f64..=1.0, 6),
        ) {
            let mut s = SecState::new(3, T_I, T_AW).unwrap().with_zeta(zeta).unwrap();
            let out = s.apply(&raw).unwrap();
            prop_assert!(out.applied.iter().all(|u| (-1.0..=1.0).contains(u)));
        }

        #[test]
        fn anti_windup_shrinks_integrator(
            zeta0 in -3.0f64..3.0,
            p in -1.0f64..=1.0,
            i in -1.0f64..=1.0,
            t_aw in 1e-5f64..1.0,
        ) {
            let mut s = SecState::new(1, T_I, t_aw).unwrap().with_zeta(vec![zeta0]).unwrap();
            let out = s.apply(&[p, i]).unwrap();
            let (z1, u_un, u) = (out.zeta_accumulated[0], out.unclipped[0], out.applied[0]);
            let clipped = u != u_un;
            if clipped && z1.signum() == u_un.signum() && t_aw * (u - u_un).abs() < 2.0 * z1.abs() {
                prop_assert!(s.zeta()[0].abs() < z1.abs());
            }
        }

        #[test]
        fn penalty_non_increasing_in_magnitude(a in 0.0f64..1.0, b in 0.0f64..1.0, kappa in 0.0f64..2.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(sec_penalty(&[hi], kappa, GAMMA) <= sec_penalty(&[lo], kappa, GAMMA));
            prop_assert!(sec_penalty(&[-hi], kappa, GAMMA) <= sec_penalty(&[lo], kappa, GAMMA));
        }

        #[test]
        fn kappa_non_increasing(k in 0u64..6_000_000, dk in 0u64..100_000) {
            let c = reward_cfg();
            for ch in [PenaltyChannel::Proportional, PenaltyChannel::Integral] {
                prop_assert!(c.kappa_at(k + dk, ch) <= c.kappa_at(k, ch));
            }
        }

        #[test]
        fn shaped_reward_bounded(
            k in 0u64..5_000_000,
            task in -(1.0 - GAMMA)..=0.0f64,
            u in prop::collection::vec(-1.0f64..=1.0, 6),
        ) {
            let c = reward_cfg();
            let r = c.shaped_reward(k, task, &u[..3], &u[3..]);
            prop_assert!(r <= 0.0 && r >= -(1.0 - GAMMA) - 1e-15);
        }

        #[test]
        fn zero_integral_channel_is_plain_clip(p in prop::collection::vec(-1.0f64..=1.0, 2)) {
            let mut s = SecState::new(2, T_I, T_AW).unwrap();
            let mut raw = p.clone();
            raw.extend([0.0, 0.0]);
            let out = s.apply(&raw).unwrap();
            let expected: Vec<f64> = p.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
            prop_assert_eq!(out.applied, expected);
        }
    }
}
