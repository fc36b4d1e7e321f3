//! Fixed-capacity ring buffer of transitions with uniform sampling.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};

/// One stored transition `<obs, action, reward, next_obs, terminal>`.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub terminal: bool,
}

/// Column-stacked mini-batch.
#[derive(Debug, Clone)]
pub struct Batch {
    pub obs: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_obs: Array2<f64>,
    /// 1.0 for terminal transitions, 0.0 otherwise.
    pub terminals: Array1<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn from_experiences(items: &[Experience]) -> Result<Self> {
        let first = items.first().ok_or_else(|| Error::config("empty batch"))?;
        let (od, ad) = (first.obs.len(), first.action.len());
        let n = items.len();
        let mut b = Batch {
            obs: Array2::zeros((n, od)),
            actions: Array2::zeros((n, ad)),
            rewards: Array1::zeros(n),
            next_obs: Array2::zeros((n, od)),
            terminals: Array1::zeros(n),
        };
        for (r, e) in items.iter().enumerate() {
            ensure_dim("observation", od, e.obs.len())?;
            ensure_dim("next observation", od, e.next_obs.len())?;
            ensure_dim("action", ad, e.action.len())?;
            b.obs.row_mut(r).assign(&Array1::from(e.obs.clone()));
            b.actions.row_mut(r).assign(&Array1::from(e.action.clone()));
            b.next_obs.row_mut(r).assign(&Array1::from(e.next_obs.clone()));
            b.rewards[r] = e.reward;
            b.terminals[r] = if e.terminal { 1.0 } else { 0.0 };
        }
        Ok(b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    action_dim: usize,
    obs: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_obs: Vec<f64>,
    terminals: Vec<bool>,
    cursor: usize,
    len: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, action_dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("replay capacity must be >= 1"));
        }
        Ok(ReplayBuffer {
            capacity,
            obs_dim,
            action_dim,
            obs: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_obs: Vec::new(),
            terminals: Vec::new(),
            cursor: 0,
            len: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push(&mut self, e: &Experience) -> Result<()> {
        ensure_dim("observation", self.obs_dim, e.obs.len())?;
        ensure_dim("next observation", self.obs_dim, e.next_obs.len())?;
        ensure_dim("action", self.action_dim, e.action.len())?;
        if !e.reward.is_finite() {
            return Err(Error::Training(format!("non-finite reward {}", e.reward)));
        }
        if self.len < self.capacity {
            // grow until full, then overwrite in place
            self.obs.extend_from_slice(&e.obs);
            self.actions.extend_from_slice(&e.action);
            self.next_obs.extend_from_slice(&e.next_obs);
            self.rewards.push(e.reward);
            self.terminals.push(e.terminal);
            self.len += 1;
        } else {
            let c = self.cursor;
            self.obs[c * self.obs_dim..(c + 1) * self.obs_dim].copy_from_slice(&e.obs);
            self.actions[c * self.action_dim..(c + 1) * self.action_dim].copy_from_slice(&e.action);
            self.next_obs[c * self.obs_dim..(c + 1) * self.obs_dim].copy_from_slice(&e.next_obs);
            self.rewards[c] = e.reward;
            self.terminals[c] = e.terminal;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        Ok(())
    }

    /// Stored item at a physical slot.
    pub fn get(&self, slot: usize) -> Option<Experience> {
        if slot >= self.len {
            return None;
        }
        let (od, ad) = (self.obs_dim, self.action_dim);
        Some(Experience {
            obs: self.obs[slot * od..(slot + 1) * od].to_vec(),
            action: self.actions[slot * ad..(slot + 1) * ad].to_vec(),
            reward: self.rewards[slot],
            next_obs: self.next_obs[slot * od..(slot + 1) * od].to_vec(),
            terminal: self.terminals[slot],
        })
    }

    /// Contents from oldest to newest.
    pub fn iter_ordered(&self) -> impl Iterator<Item = Experience> + '_ {
        let start = if self.len < self.capacity { 0 } else { self.cursor };
        (0..self.len).map(move |n| self.get((start + n) % self.capacity).expect("slot in range"))
    }

    /// Draws slot indices uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<usize>> {
        if batch_size == 0 {
            return Err(Error::config("batch size must be >= 1"));
        }
        if self.len < batch_size {
            return Err(Error::Training(format!(
                "replay holds {} transitions, batch needs {batch_size}",
                self.len
            )));
        }
        Ok((0..batch_size).map(|_| rng.random_range(0..self.len)).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Batch> {
        let idx = self.sample_indices(batch_size, rng)?;
        let (od, ad) = (self.obs_dim, self.action_dim);
        let n = idx.len();
        let mut obs = Vec::with_capacity(n * od);
        let mut actions = Vec::with_capacity(n * ad);
        let mut next_obs = Vec::with_capacity(n * od);
        let mut rewards = Vec::with_capacity(n);
        let mut terminals = Vec::with_capacity(n);
        for &s in &idx {
            obs.extend_from_slice(&self.obs[s * od..(s + 1) * od]);
            actions.extend_from_slice(&self.actions[s * ad..(s + 1) * ad]);
            next_obs.extend_from_slice(&self.next_obs[s * od..(s + 1) * od]);
            rewards.push(self.rewards[s]);
            terminals.push(if self.terminals[s] { 1.0 } else { 0.0 });
        }
        let shape_err = |e: ndarray::ShapeError| Error::config(e.to_string());
        Ok(Batch {
            obs: Array2::from_shape_vec((n, od), obs).map_err(shape_err)?,
            actions: Array2::from_shape_vec((n, ad), actions).map_err(shape_err)?,
            rewards: Array1::from(rewards),
            next_obs: Array2::from_shape_vec((n, od), next_obs).map_err(shape_err)?,
            terminals: Array1::from(terminals),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::{rng, Stream};
    use proptest::prelude::*;

    fn item(x: f64) -> Experience {
        Experience {
            obs: vec![x],
            action: vec![0.0],
            reward: x,
            next_obs: vec![x + 1.0],
            terminal: false,
        }
    }

    #[test]
    fn one_push() {
        let mut b = ReplayBuffer::new(5, 1, 1).unwrap();
        b.push(&item(1.0)).unwrap();
        assert_eq!(b.len(), 1);
        let batch = b.sample(1, &mut rng(0, Stream::Replay)).unwrap();
        assert_eq!(batch.rewards[0], 1.0);
    }

    #[test]
    fn oldest_is_evicted() {
        let mut b = ReplayBuffer::new(3, 1, 1).unwrap();
        for x in [1.0, 2.0, 3.0, 4.0] {
            b.push(&item(x)).unwrap();
        }
        let rewards: Vec<f64> = b.iter_ordered().map(|e| e.reward).collect();
        assert_eq!(rewards, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn dimension_checks() {
        let mut b = ReplayBuffer::new(3, 2, 1).unwrap();
        assert!(b.push(&item(1.0)).is_err());
        assert!(ReplayBuffer::new(0, 1, 1).is_err());
    }

    #[test]
    fn underfilled_buffer_refuses_batch() {
        let mut b = ReplayBuffer::new(10, 1, 1).unwrap();
        b.push(&item(0.0)).unwrap();
        assert!(b.sample(2, &mut rng(0, Stream::Replay)).is_err());
    }

    proptest! {
        #[test]
        fn ring_keeps_last_capacity_items(cap in 1usize..20, extra in 1usize..50) {
            let mut b = ReplayBuffer::new(cap, 1, 1).unwrap();
            let total = cap + extra;
            for x in 0..total {
                b.push(&item(x as f64)).unwrap();
            }
            let got: Vec<f64> = b.iter_ordered().map(|e| e.reward).collect();
            let want: Vec<f64> = (extra..total).map(|x| x as f64).collect();
            prop_assert_eq!(got, want);
        }
    }
}
