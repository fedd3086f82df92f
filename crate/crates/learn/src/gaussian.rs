//! Diagonal Gaussian policy head squashed by `tanh`.
//!
//! Log-probabilities are in nats and include the change-of-variables term
//! `−Σ ln(1 − tanh²u)`, computed as `2(ln2 − u − softplus(−2u))` so it stays
//! finite for any `u`.

use std::f64::consts::{LN_2, PI};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

const EDGE: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianHead {
    pub log_std_min: f64,
    pub log_std_max: f64,
}

impl Default for GaussianHead {
    fn default() -> Self {
        Self { log_std_min: -20.0, log_std_max: 2.0 }
    }
}

/// One reparameterised draw with everything the backward pass needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SquashedSample {
    /// Squashed action, kept strictly inside `(−1, 1)`.
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub eps: Vec<f64>,
    pub std: Vec<f64>,
    /// Whether each raw log-std was inside the clamp (gradient flows).
    pub log_std_free: Vec<bool>,
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// `ln(1 − tanh²u)`.
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (LN_2 - u - softplus(-2.0 * u))
}

impl GaussianHead {
    pub fn clamp_log_std(&self, raw: f64) -> (f64, bool) {
        if raw < self.log_std_min {
            (self.log_std_min, false)
        } else if raw > self.log_std_max {
            (self.log_std_max, false)
        } else {
            (raw, true)
        }
    }

    /// Log-density of the squashed action given pre-squash noise `eps`.
    pub fn log_prob_from_eps(&self, eps: &[f64], log_std: &[f64], u: &[f64]) -> f64 {
        eps.iter()
            .zip(log_std)
            .zip(u)
            .map(|((e, ls), u)| -0.5 * e * e - ls - 0.5 * (2.0 * PI).ln() - log_one_minus_tanh_sq(*u))
            .sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, mean: &[f64], raw_log_std: &[f64], rng: &mut R) -> SquashedSample {
        let eps: Vec<f64> = mean.iter().map(|_| rng.sample(StandardNormal)).collect();
        self.sample_with_eps(mean, raw_log_std, eps)
    }

    pub fn sample_with_eps(&self, mean: &[f64], raw_log_std: &[f64], eps: Vec<f64>) -> SquashedSample {
        let (log_std, log_std_free): (Vec<f64>, Vec<bool>) =
            raw_log_std.iter().map(|&r| self.clamp_log_std(r)).unzip();
        let std: Vec<f64> = log_std.iter().map(|l| l.exp()).collect();
        let u: Vec<f64> = mean.iter().zip(&std).zip(&eps).map(|((m, s), e)| m + s * e).collect();
        let log_prob = self.log_prob_from_eps(&eps, &log_std, &u);
        SquashedSample { action: u.iter().map(|u| u.tanh().clamp(-EDGE, EDGE)).collect(), log_prob, eps, std, log_std_free }
    }

    /// Log-density of a given squashed action; `action` is clipped just inside `(−1, 1)`.
    pub fn log_prob(&self, mean: &[f64], raw_log_std: &[f64], action: &[f64]) -> f64 {
        let mut lp = 0.0;
        for ((m, r), a) in mean.iter().zip(raw_log_std).zip(action) {
            let (ls, _) = self.clamp_log_std(*r);
            let u = a.clamp(-EDGE, EDGE).atanh();
            let e = (u - m) / ls.exp();
            lp += -0.5 * e * e - ls - 0.5 * (2.0 * PI).ln() - log_one_minus_tanh_sq(u);
        }
        lp
    }

    /// Deterministic action used for evaluation.
    pub fn mode(&self, mean: &[f64]) -> Vec<f64> {
        mean.iter().map(|m| m.tanh().clamp(-EDGE, EDGE)).collect()
    }
}
