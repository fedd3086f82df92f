//! Proximal policy optimisation with a clipped surrogate, GAE and a separate
//! value network. The Gaussian log-std is a state-independent parameter vector
//! and actions are squashed by `tanh` like the SAC head.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::adam::Adam;
use crate::nn::{Activation, Mlp};
use crate::LearnError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub epochs: usize,
    pub minibatch: usize,
    /// Environment steps collected per update.
    pub rollout_len: usize,
    pub entropy_coef: f64,
    pub init_log_std: f64,
    pub hidden: Vec<usize>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            gae_lambda: 0.95,
            clip: 0.2,
            lr_actor: 3e-4,
            lr_critic: 1e-3,
            epochs: 10,
            minibatch: 64,
            rollout_len: 2048,
            entropy_coef: 0.0,
            init_log_std: -0.5,
            hidden: vec![128, 128],
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let ok = self.gamma > 0.0
            && self.gamma <= 1.0
            && (0.0..=1.0).contains(&self.gae_lambda)
            && self.clip > 0.0
            && self.lr_actor > 0.0
            && self.lr_critic > 0.0
            && self.epochs > 0
            && self.minibatch > 0
            && self.rollout_len > 0
            && self.hidden.iter().all(|&h| h > 0);
        if ok {
            Ok(())
        } else {
            Err(LearnError::Config("ppo settings out of range".into()))
        }
    }
}

/// On-policy data with advantages already computed.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub obs: Array2<f64>,
    /// Pre-squash actions `u`, so the ratio is exact without inverting `tanh`.
    pub pre_squash: Array2<f64>,
    pub old_log_prob: Array1<f64>,
    pub advantages: Array1<f64>,
    pub returns: Array1<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoLosses {
    pub policy: f64,
    pub value: f64,
    pub clipped_fraction: f64,
}

/// Generalised advantage estimates and λ-returns for one trajectory segment.
///
/// `last_value` bootstraps the step after the segment unless it ended in `done`.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], last_value: f64, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { last_value };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        running = delta + gamma * lambda * live * running;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoAgent {
    pub config: PpoConfig,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub actor: Mlp,
    pub log_std: Vec<f64>,
    pub value: Mlp,
    pub actor_opt: Adam,
    pub log_std_opt: Adam,
    pub value_opt: Adam,
}

fn gaussian_log_prob(u: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    u.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((u, m), ls)| {
            let z = (u - m) / ls.exp();
            -0.5 * z * z - ls - half_ln_2pi
        })
        .sum()
}

impl PpoAgent {
    pub fn new<R: Rng + ?Sized>(config: PpoConfig, obs_dim: usize, act_dim: usize, rng: &mut R) -> Result<Self, LearnError> {
        config.validate()?;
        let mut aw = vec![obs_dim];
        aw.extend(&config.hidden);
        let mut vw = aw.clone();
        aw.push(act_dim);
        vw.push(1);
        let actor = Mlp::new(&aw, Activation::Tanh, Activation::Identity, 0.1, rng)?;
        let value = Mlp::new(&vw, Activation::Tanh, Activation::Identity, 1.0, rng)?;
        Ok(Self {
            obs_dim,
            act_dim,
            actor_opt: Adam::new(actor.num_params()),
            log_std_opt: Adam::new(act_dim),
            value_opt: Adam::new(value.num_params()),
            log_std: vec![config.init_log_std; act_dim],
            actor,
            value,
            config,
        })
    }

    /// Sample `(squashed action, pre-squash u, Gaussian log-prob of u)`.
    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<(Vec<f64>, Vec<f64>, f64), LearnError> {
        let mean = self.actor.forward_one(obs)?;
        let u: Vec<f64> = mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let lp = gaussian_log_prob(&u, &mean, &self.log_std);
        Ok((u.iter().map(|u| u.tanh()).collect(), u, lp))
    }

    pub fn deterministic_action(&self, obs: &[f64]) -> Result<Vec<f64>, LearnError> {
        Ok(self.actor.forward_one(obs)?.iter().map(|m| m.tanh()).collect())
    }

    pub fn value_of(&self, obs: &[f64]) -> Result<f64, LearnError> {
        Ok(self.value.forward_one(obs)?[0])
    }

    /// Several epochs of minibatch updates on one rollout.
    pub fn update<R: Rng + ?Sized>(&mut self, rollout: &Rollout, rng: &mut R) -> Result<PpoLosses, LearnError> {
        let n = rollout.returns.len();
        if n == 0 {
            return Err(LearnError::EmptyBatch);
        }
        let adv = normalise(&rollout.advantages);
        let mut order: Vec<usize> = (0..n).collect();
        let mut losses = PpoLosses::default();
        let mut batches = 0usize;
        for _ in 0..self.config.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(self.config.minibatch) {
                let l = self.minibatch_step(rollout, &adv, chunk)?;
                losses.policy += l.policy;
                losses.value += l.value;
                losses.clipped_fraction += l.clipped_fraction;
                batches += 1;
            }
        }
        let b = batches.max(1) as f64;
        Ok(PpoLosses { policy: losses.policy / b, value: losses.value / b, clipped_fraction: losses.clipped_fraction / b })
    }

    /// Gradient of the clipped surrogate with respect to the actor means and log-std.
    ///
    /// Samples whose ratio is outside `[1−ε, 1+ε]` on the side the clip binds
    /// contribute nothing.
    pub fn surrogate_grads(
        &self,
        obs: &Array2<f64>,
        pre_squash: &Array2<f64>,
        old_log_prob: &Array1<f64>,
        adv: &Array1<f64>,
    ) -> Result<(f64, Array2<f64>, Vec<f64>, f64, crate::nn::Trace), LearnError> {
        let m = obs.nrows();
        let inv = 1.0 / m as f64;
        let (mean, trace) = self.actor.forward_trace(obs.view())?;
        let eps = self.config.clip;
        let mut g_mean = Array2::zeros(mean.raw_dim());
        let mut g_ls = vec![-self.config.entropy_coef; self.act_dim];
        let mut loss = -self.config.entropy_coef * self.log_std.iter().sum::<f64>();
        let mut clipped = 0usize;
        for i in 0..m {
            let u = pre_squash.row(i);
            let mu = mean.row(i);
            let lp = gaussian_log_prob(u.as_slice().expect("row-major"), mu.as_slice().expect("row-major"), &self.log_std);
            let ratio = (lp - old_log_prob[i]).exp();
            let a = adv[i];
            let clipped_ratio = ratio.clamp(1.0 - eps, 1.0 + eps);
            loss -= (ratio * a).min(clipped_ratio * a) * inv;
            let binds = (a > 0.0 && ratio > 1.0 + eps) || (a < 0.0 && ratio < 1.0 - eps);
            if binds {
                clipped += 1;
                continue;
            }
            // d(−ratio·A)/d log π = −ratio·A
            let dl = -ratio * a * inv;
            for j in 0..self.act_dim {
                let var = (2.0 * self.log_std[j]).exp();
                let diff = u[j] - mu[j];
                g_mean[[i, j]] = dl * diff / var;
                g_ls[j] += dl * (diff * diff / var - 1.0);
            }
        }
        Ok((loss, g_mean, g_ls, clipped as f64 * inv, trace))
    }

    fn minibatch_step(&mut self, r: &Rollout, adv: &Array1<f64>, idx: &[usize]) -> Result<PpoLosses, LearnError> {
        let obs = r.obs.select(Axis(0), idx);
        let pre = r.pre_squash.select(Axis(0), idx);
        let old = r.old_log_prob.select(Axis(0), idx);
        let a = adv.select(Axis(0), idx);
        let (policy, g_mean, g_ls, clipped_fraction, trace) = self.surrogate_grads(&obs, &pre, &old, &a)?;
        let (grads, _) = self.actor.backward(&trace, &g_mean)?;
        self.actor_opt.step_net(&mut self.actor, &grads, self.config.lr_actor);
        self.log_std_opt.step(&mut self.log_std, &g_ls, self.config.lr_actor);
        for ls in &mut self.log_std {
            *ls = ls.clamp(-20.0, 2.0);
        }

        let ret = r.returns.select(Axis(0), idx);
        let inv = 1.0 / idx.len() as f64;
        let (v, vtrace) = self.value.forward_trace(obs.view())?;
        let diff = &v.column(0) - &ret;
        let value = diff.mapv(|d| d * d).sum() * inv;
        let g = diff.mapv(|d| 2.0 * d * inv).insert_axis(Axis(1));
        let (vgrads, _) = self.value.backward(&vtrace, &g)?;
        self.value_opt.step_net(&mut self.value, &vgrads, self.config.lr_critic);
        Ok(PpoLosses { policy, value, clipped_fraction })
    }
}

fn normalise(x: &Array1<f64>) -> Array1<f64> {
    let n = x.len() as f64;
    let mean = x.sum() / n;
    let var = x.mapv(|v| (v - mean).powi(2)).sum() / n;
    x.mapv(|v| (v - mean) / (var.sqrt() + 1e-8))
}
