//! Discrete Ornstein-Uhlenbeck exploration noise.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuNoise {
    nu: Vec<f64>,
    pub stiffness: f64,
    pub diffusion: f64,
    pub mean: f64,
    /// Sampling time in seconds.
    pub dt: f64,
}

impl OuNoise {
    /// Noise for `dim` channels starting at zero.
    pub fn new(dim: usize, stiffness: f64, diffusion: f64, mean: f64, dt: f64) -> Result<Self> {
        if !(stiffness >= 0.0 && stiffness.is_finite()) {
            return Err(Error::config(format!("noise stiffness must be >= 0, got {stiffness}")));
        }
        if !(diffusion >= 0.0 && diffusion.is_finite()) {
            return Err(Error::config(format!("noise diffusion must be >= 0, got {diffusion}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::config(format!("sampling time must be > 0, got {dt}")));
        }
        Ok(OuNoise {
            nu: vec![0.0; dim],
            stiffness,
            diffusion,
            mean,
            dt,
        })
    }

    pub fn with_state(mut self, nu: Vec<f64>) -> Self {
        self.nu = nu;
        self
    }

    pub fn state(&self) -> &[f64] {
        &self.nu
    }

    pub fn reset(&mut self) {
        self.nu.iter_mut().for_each(|v| *v = 0.0);
    }

    /// `nu <- nu + stiffness (mean - nu) dt + diffusion sqrt(dt) N(0, 1)` per channel.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> &[f64] {
        let drift = self.stiffness * self.dt;
        let scale = self.diffusion * self.dt.sqrt();
        for v in &mut self.nu {
            let n: f64 = StandardNormal.sample(rng);
            *v += drift * (self.mean - *v) + scale * n;
        }
        &self.nu
    }

    /// Stationary variance of the discrete recursion,
    /// `s^2 dt / (2 l dt - l^2 dt^2)`.
    pub fn stationary_variance(&self) -> f64 {
        let a = self.stiffness * self.dt;
        self.diffusion * self.diffusion * self.dt / (2.0 * a - a * a)
    }
}

/// `clip(actor_output + nu, -1, 1)` per channel.
pub fn noisy_action(actor_output: &[f64], nu: &[f64]) -> Result<Vec<f64>> {
    if actor_output.len() != nu.len() {
        return Err(Error::dim("noise channels", actor_output.len(), nu.len()));
    }
    Ok(actor_output
        .iter()
        .zip(nu)
        .map(|(a, n)| (a + n).clamp(-1.0, 1.0))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::{rng, Stream};

    #[test]
    fn deterministic_decay() {
        let mut n = OuNoise::new(1, 10.0, 0.0, 0.0, 1e-4).unwrap().with_state(vec![1.0]);
        let v = n.step(&mut rng(0, Stream::Exploration))[0];
        assert!((v - 0.999).abs() < 1e-15);
    }

    #[test]
    fn fixed_point_at_mean() {
        let mut n = OuNoise::new(2, 31.58, 0.0, 0.3, 1e-4).unwrap().with_state(vec![0.3, 0.3]);
        let mut r = rng(0, Stream::Exploration);
        for _ in 0..1000 {
            assert_eq!(n.step(&mut r), &[0.3, 0.3]);
        }
    }

    #[test]
    fn noisy_action_clips_after_adding() {
        assert_eq!(noisy_action(&[0.4], &[0.0]).unwrap(), vec![0.4]);
        assert_eq!(noisy_action(&[0.95], &[0.2]).unwrap(), vec![1.0]);
        assert_eq!(noisy_action(&[-0.5], &[-0.7]).unwrap(), vec![-1.0]);
        assert!(noisy_action(&[0.0, 0.0], &[0.0]).is_err());
    }

    #[test]
    fn rejects_negative_parameters() {
        assert!(OuNoise::new(1, -1.0, 0.1, 0.0, 1e-4).is_err());
        assert!(OuNoise::new(1, 1.0, -0.1, 0.0, 1e-4).is_err());
        assert!(OuNoise::new(1, 1.0, 0.1, 0.0, 0.0).is_err());
    }
}
