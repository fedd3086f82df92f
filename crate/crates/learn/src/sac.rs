//! Soft actor-critic with twin critics, Polyak-averaged targets and an optional
//! learned temperature.

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::adam::Adam;
use crate::gaussian::{log_one_minus_tanh_sq, GaussianHead};
use crate::nn::{Activation, Mlp};
use crate::replay::Batch;
use crate::LearnError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacConfig {
    pub gamma: f64,
    /// Entropy weight α; the starting value when `auto_temperature` is set.
    pub temperature: f64,
    pub auto_temperature: bool,
    /// Defaults to `−dim(action)`.
    pub target_entropy: Option<f64>,
    pub polyak: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub lr_temperature: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub warmup_steps: usize,
    /// Environment steps between gradient updates.
    pub update_every: usize,
    pub hidden: Vec<usize>,
    pub log_std_min: f64,
    pub log_std_max: f64,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            temperature: 0.2,
            auto_temperature: false,
            target_entropy: None,
            polyak: 0.005,
            lr_actor: 3e-4,
            lr_critic: 3e-4,
            lr_temperature: 3e-4,
            batch_size: 256,
            buffer_capacity: 100_000,
            warmup_steps: 1000,
            update_every: 1,
            hidden: vec![128, 128],
            log_std_min: -20.0,
            log_std_max: 2.0,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |what: &str| Err(LearnError::Config(what.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(self.temperature > 0.0) {
            return bad("temperature must be positive");
        }
        if !(self.polyak > 0.0 && self.polyak < 1.0) {
            return bad("polyak must lie in (0, 1)");
        }
        if !(self.lr_actor > 0.0 && self.lr_critic > 0.0 && self.lr_temperature > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 || self.update_every == 0 {
            return bad("batch_size, buffer_capacity and update_every must be positive");
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return bad("hidden widths must be positive");
        }
        if !(self.log_std_min < self.log_std_max) {
            return bad("log_std_min must be below log_std_max");
        }
        Ok(())
    }

    pub fn head(&self) -> GaussianHead {
        GaussianHead { log_std_min: self.log_std_min, log_std_max: self.log_std_max }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SacLosses {
    pub critic: [f64; 2],
    pub actor: f64,
    pub temperature: f64,
    pub alpha: f64,
    pub mean_log_std: f64,
    pub mean_log_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SacAgent {
    pub config: SacConfig,
    pub obs_dim: usize,
    pub act_dim: usize,
    /// Maps observations to `[mean | raw log-std]`.
    pub actor: Mlp,
    pub critics: [Mlp; 2],
    pub targets: [Mlp; 2],
    pub actor_opt: Adam,
    pub critic_opt: [Adam; 2],
    pub log_alpha: f64,
    pub alpha_opt: Adam,
    pub updates: u64,
}

/// Actor objective value and gradient for one batch.
#[derive(Debug, Clone)]
pub struct ActorStep {
    pub loss: f64,
    pub grads: crate::nn::Grads,
    pub mean_log_prob: f64,
    pub mean_log_std: f64,
}

/// Batched reparameterised policy samples.
struct PolicyBatch {
    action: Array2<f64>,
    log_prob: Array1<f64>,
    eps: Array2<f64>,
    std: Array2<f64>,
    free: Array2<bool>,
    mean_log_std: f64,
}

impl SacAgent {
    pub fn new<R: Rng + ?Sized>(config: SacConfig, obs_dim: usize, act_dim: usize, rng: &mut R) -> Result<Self, LearnError> {
        config.validate()?;
        let widths = |input: usize, output: usize| {
            let mut w = vec![input];
            w.extend(&config.hidden);
            w.push(output);
            w
        };
        let actor = Mlp::new(&widths(obs_dim, 2 * act_dim), Activation::Tanh, Activation::Identity, 0.1, rng)?;
        let critic_widths = widths(obs_dim + act_dim, 1);
        let c0 = Mlp::new(&critic_widths, Activation::Tanh, Activation::Identity, 1.0, rng)?;
        let c1 = Mlp::new(&critic_widths, Activation::Tanh, Activation::Identity, 1.0, rng)?;
        Ok(Self {
            obs_dim,
            act_dim,
            actor_opt: Adam::new(actor.num_params()),
            critic_opt: [Adam::new(c0.num_params()), Adam::new(c1.num_params())],
            targets: [c0.clone(), c1.clone()],
            critics: [c0, c1],
            actor,
            log_alpha: config.temperature.ln(),
            alpha_opt: Adam::new(1),
            updates: 0,
            config,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn target_entropy(&self) -> f64 {
        self.config.target_entropy.unwrap_or(-(self.act_dim as f64))
    }

    fn split(&self, out: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let a = self.act_dim;
        (out.slice(s![.., ..a]).to_owned(), out.slice(s![.., a..]).to_owned())
    }

    /// Stochastic action in `(−1, 1)^A`.
    pub fn sample_action<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<(Vec<f64>, f64), LearnError> {
        let out = self.actor.forward_one(obs)?;
        let (mean, ls) = out.split_at(self.act_dim);
        let s = self.config.head().sample(mean, ls, rng);
        Ok((s.action, s.log_prob))
    }

    /// Squashed mean action.
    pub fn deterministic_action(&self, obs: &[f64]) -> Result<Vec<f64>, LearnError> {
        let out = self.actor.forward_one(obs)?;
        Ok(self.config.head().mode(&out[..self.act_dim]))
    }

    fn sample_batch<R: Rng + ?Sized>(&self, mean: &Array2<f64>, raw_ls: &Array2<f64>, rng: &mut R) -> PolicyBatch {
        let eps = self.draw_eps(mean.nrows(), rng);
        self.squash(mean, raw_ls, eps)
    }

    fn squash(&self, mean: &Array2<f64>, raw_ls: &Array2<f64>, eps: Array2<f64>) -> PolicyBatch {
        let head = self.config.head();
        let (b, a) = mean.dim();
        let mut std = Array2::zeros((b, a));
        let mut free = Array2::from_elem((b, a), true);
        let mut action = Array2::zeros((b, a));
        let mut log_prob = Array1::zeros(b);
        let mut ls_sum = 0.0;
        let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        for i in 0..b {
            let mut lp = 0.0;
            for j in 0..a {
                let (ls, ok) = head.clamp_log_std(raw_ls[[i, j]]);
                let sd = ls.exp();
                let e = eps[[i, j]];
                let u = mean[[i, j]] + sd * e;
                std[[i, j]] = sd;
                free[[i, j]] = ok;
                action[[i, j]] = u.tanh();
                lp += -0.5 * e * e - ls - half_ln_2pi - log_one_minus_tanh_sq(u);
                ls_sum += ls;
            }
            log_prob[i] = lp;
        }
        PolicyBatch { action, log_prob, eps, std, free, mean_log_std: ls_sum / (b * a).max(1) as f64 }
    }

    fn q_values(net: &Mlp, obs: &Array2<f64>, act: &Array2<f64>) -> Result<Array1<f64>, LearnError> {
        let x = concatenate![Axis(1), *obs, *act];
        Ok(net.forward(x.view())?.column(0).to_owned())
    }

    /// `r + γ(1 − done)(min_i Q̄_i(s′, a′) − α log π(a′|s′))` with `a′` freshly sampled.
    pub fn critic_target<R: Rng + ?Sized>(&self, batch: &Batch, rng: &mut R) -> Result<Array1<f64>, LearnError> {
        let out = self.actor.forward(batch.next_obs.view())?;
        let (mean, ls) = self.split(&out);
        let next = self.sample_batch(&mean, &ls, rng);
        let q0 = Self::q_values(&self.targets[0], &batch.next_obs, &next.action)?;
        let q1 = Self::q_values(&self.targets[1], &batch.next_obs, &next.action)?;
        let alpha = self.alpha();
        let gamma = self.config.gamma;
        let mut y = batch.reward.clone();
        for i in 0..y.len() {
            let soft = q0[i].min(q1[i]) - alpha * next.log_prob[i];
            y[i] += gamma * (1.0 - batch.done[i]) * soft;
        }
        Ok(y)
    }

    /// One gradient step on both critics, the actor and (optionally) the temperature.
    pub fn update<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<SacLosses, LearnError> {
        let n = batch.len();
        if n == 0 {
            return Err(LearnError::EmptyBatch);
        }
        let inv_n = 1.0 / n as f64;
        let mut losses = SacLosses { alpha: self.alpha(), ..Default::default() };

        let target = self.critic_target(batch, rng)?;
        let sa = concatenate![Axis(1), batch.obs, batch.act];
        for i in 0..2 {
            let (q, trace) = self.critics[i].forward_trace(sa.view())?;
            let diff = &q.column(0) - &target;
            losses.critic[i] = diff.mapv(|d| d * d).sum() * inv_n;
            let grad = diff.mapv(|d| 2.0 * d * inv_n).insert_axis(Axis(1));
            let (grads, _) = self.critics[i].backward(&trace, &grad)?;
            self.critic_opt[i].step_net(&mut self.critics[i], &grads, self.config.lr_critic);
        }

        let eps = self.draw_eps(n, rng);
        let actor = self.actor_loss_grad(&batch.obs, &eps)?;
        self.actor_opt.step_net(&mut self.actor, &actor.grads, self.config.lr_actor);
        losses.actor = actor.loss;
        losses.mean_log_prob = actor.mean_log_prob;
        losses.mean_log_std = actor.mean_log_std;
        let entropy_gap = losses.mean_log_prob + self.target_entropy();
        losses.temperature = -self.log_alpha * entropy_gap;
        if self.config.auto_temperature {
            let mut la = [self.log_alpha];
            self.alpha_opt.step(&mut la, &[-entropy_gap], self.config.lr_temperature);
            self.log_alpha = la[0];
        }

        for i in 0..2 {
            self.targets[i].polyak_from(&self.critics[i], self.config.polyak);
        }
        self.updates += 1;
        Ok(losses)
    }

    fn draw_eps<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Array2<f64> {
        Array2::from_shape_simple_fn((n, self.act_dim), || rng.sample::<f64, _>(StandardNormal))
    }

    /// Actor loss `mean(α·log π(a|s) − min_i Q_i(s, a))` for `a` reparameterised
    /// with the given noise, and its gradient with respect to the actor parameters.
    pub fn actor_loss_grad(&self, obs: &Array2<f64>, eps: &Array2<f64>) -> Result<ActorStep, LearnError> {
        let n = obs.nrows();
        let inv_n = 1.0 / n as f64;
        let alpha = self.alpha();
        let (out, actor_trace) = self.actor.forward_trace(obs.view())?;
        let (mean, raw_ls) = self.split(&out);
        let pb = self.squash(&mean, &raw_ls, eps.clone());
        let sa_pi = concatenate![Axis(1), *obs, pb.action];
        let mut q = Vec::with_capacity(2);
        for critic in &self.critics {
            q.push(critic.forward_trace(sa_pi.view())?);
        }
        let mut pick = [Array2::<f64>::zeros((n, 1)), Array2::<f64>::zeros((n, 1))];
        let mut loss = 0.0;
        for i in 0..n {
            let (q0, q1) = (q[0].0[[i, 0]], q[1].0[[i, 0]]);
            pick[usize::from(q1 < q0)][[i, 0]] = 1.0;
            loss += alpha * pb.log_prob[i] - q0.min(q1);
        }
        let mut dq_da = Array2::<f64>::zeros((n, self.act_dim));
        for c in 0..2 {
            let (_, gin) = self.critics[c].backward(&q[c].1, &pick[c])?;
            dq_da += &gin.slice(s![.., self.obs_dim..]);
        }
        let mut grad_out = Array2::zeros((n, 2 * self.act_dim));
        for i in 0..n {
            for j in 0..self.act_dim {
                let a = pb.action[[i, j]];
                let du = (-dq_da[[i, j]] * (1.0 - a * a) + alpha * 2.0 * a) * inv_n;
                grad_out[[i, j]] = du;
                if pb.free[[i, j]] {
                    grad_out[[i, self.act_dim + j]] = du * pb.std[[i, j]] * pb.eps[[i, j]] - alpha * inv_n;
                }
            }
        }
        let (grads, _) = self.actor.backward(&actor_trace, &grad_out)?;
        Ok(ActorStep {
            loss: loss * inv_n,
            grads,
            mean_log_prob: pb.log_prob.sum() * inv_n,
            mean_log_std: pb.mean_log_std,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.actor.is_finite() && self.critics.iter().all(Mlp::is_finite) && self.log_alpha.is_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replay::ReplayBuffer;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(cfg: SacConfig) -> (SacAgent, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let agent = SacAgent::new(SacConfig { hidden: vec![16, 16], ..cfg }, 3, 2, &mut rng).unwrap();
        (agent, rng)
    }

    fn random_batch(rng: &mut ChaCha8Rng, n: usize) -> Batch {
        let mut buf = ReplayBuffer::new(n, 3, 2);
        for i in 0..n {
            let o: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
            let o2: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            buf.push(&o, &a, rng.random_range(-2.0..0.0), &o2, i % 4 == 3);
        }
        buf.sample(n, rng)
    }

    #[test]
    fn myopic_target_is_the_reward() {
        let (mut agent, mut rng) = small(SacConfig::default());
        agent.config.gamma = 0.0;
        agent.log_alpha = f64::NEG_INFINITY;
        let batch = random_batch(&mut rng, 32);
        assert_eq!(agent.critic_target(&batch, &mut rng).unwrap(), batch.reward);
    }

    #[test]
    fn done_masks_the_bootstrap() {
        let (agent, mut rng) = small(SacConfig::default());
        let mut batch = random_batch(&mut rng, 16);
        batch.done.fill(1.0);
        assert_eq!(agent.critic_target(&batch, &mut rng).unwrap(), batch.reward);
    }

    #[test]
    fn swapping_critics_keeps_the_target() {
        let (agent, mut rng) = small(SacConfig::default());
        let batch = random_batch(&mut rng, 16);
        let mut swapped = agent.clone();
        swapped.targets.swap(0, 1);
        let y1 = agent.critic_target(&batch, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let y2 = swapped.critic_target(&batch, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(y1, y2);
    }

    #[test]
    fn one_update_blends_targets_exactly() {
        let (mut agent, mut rng) = small(SacConfig { polyak: 0.3, ..Default::default() });
        let batch = random_batch(&mut rng, 16);
        let old = agent.targets[0].to_flat();
        agent.update(&batch, &mut rng).unwrap();
        let online = agent.critics[0].to_flat();
        for ((t, o), n) in old.iter().zip(&online).zip(agent.targets[0].to_flat()) {
            assert_eq!(n, 0.3 * o + 0.7 * t);
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = SacConfig { polyak: 1.5, ..Default::default() };
        assert!(SacAgent::new(cfg, 2, 2, &mut rng).is_err());
    }
}
