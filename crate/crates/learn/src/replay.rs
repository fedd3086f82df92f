use ndarray::{Array1, Array2};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Fixed-capacity FIFO of transitions stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    obs: Vec<f64>,
    act: Vec<f64>,
    reward: Vec<f64>,
    next_obs: Vec<f64>,
    done: Vec<f64>,
    /// Slot the next push overwrites.
    head: usize,
    len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub obs: Array2<f64>,
    pub act: Array2<f64>,
    pub reward: Array1<f64>,
    pub next_obs: Array2<f64>,
    pub done: Array1<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            obs_dim,
            act_dim,
            obs: vec![0.0; capacity * obs_dim],
            act: vec![0.0; capacity * act_dim],
            reward: vec![0.0; capacity],
            next_obs: vec![0.0; capacity * obs_dim],
            done: vec![0.0; capacity],
            head: 0,
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, obs: &[f64], act: &[f64], reward: f64, next_obs: &[f64], done: bool) {
        assert_eq!(obs.len(), self.obs_dim);
        assert_eq!(next_obs.len(), self.obs_dim);
        assert_eq!(act.len(), self.act_dim);
        let i = self.head;
        self.obs[i * self.obs_dim..(i + 1) * self.obs_dim].copy_from_slice(obs);
        self.next_obs[i * self.obs_dim..(i + 1) * self.obs_dim].copy_from_slice(next_obs);
        self.act[i * self.act_dim..(i + 1) * self.act_dim].copy_from_slice(act);
        self.reward[i] = reward;
        self.done[i] = if done { 1.0 } else { 0.0 };
        self.head = (self.head + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
    }

    /// Storage index of the `i`-th oldest transition.
    fn physical(&self, i: usize) -> usize {
        if self.len < self.capacity {
            i
        } else {
            (self.head + i) % self.capacity
        }
    }

    /// Reward of the `i`-th oldest stored transition.
    pub fn reward_at(&self, i: usize) -> f64 {
        self.reward[self.physical(i)]
    }

    /// Uniform batch without replacement (capped at the stored count).
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Batch {
        let n = batch.min(self.len);
        let picks = index::sample(rng, self.len, n);
        let mut out = Batch {
            obs: Array2::zeros((n, self.obs_dim)),
            act: Array2::zeros((n, self.act_dim)),
            reward: Array1::zeros(n),
            next_obs: Array2::zeros((n, self.obs_dim)),
            done: Array1::zeros(n),
        };
        for (row, i) in picks.into_iter().enumerate() {
            let j = self.physical(i);
            let o = &self.obs[j * self.obs_dim..(j + 1) * self.obs_dim];
            let no = &self.next_obs[j * self.obs_dim..(j + 1) * self.obs_dim];
            let a = &self.act[j * self.act_dim..(j + 1) * self.act_dim];
            out.obs.row_mut(row).iter_mut().zip(o).for_each(|(d, s)| *d = *s);
            out.next_obs.row_mut(row).iter_mut().zip(no).for_each(|(d, s)| *d = *s);
            out.act.row_mut(row).iter_mut().zip(a).for_each(|(d, s)| *d = *s);
            out.reward[row] = self.reward[j];
            out.done[row] = self.done[j];
        }
        out
    }
}
