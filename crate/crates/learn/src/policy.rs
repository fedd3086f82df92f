//! Uniform acting interface over learned and hand-written policies, and the
//! baseline heuristics.

use rand::{Rng, RngCore};
use rismec_core::env::{best_fixed_rotation, EnvConfig, EnvError, MecEnv};
use serde::{Deserialize, Serialize};

use crate::ppo::PpoAgent;
use crate::sac::SacAgent;
use crate::LearnError;

/// Anything that maps an observation to a raw action in `[−1, 1]^{1+N+K}`.
pub trait Policy {
    /// `explore = false` asks for the deterministic evaluation action.
    fn act(&mut self, obs: &[f64], rng: &mut dyn RngCore, explore: bool) -> Result<Vec<f64>, LearnError>;
}

impl Policy for SacAgent {
    fn act(&mut self, obs: &[f64], rng: &mut dyn RngCore, explore: bool) -> Result<Vec<f64>, LearnError> {
        if explore {
            Ok(self.sample_action(obs, rng)?.0)
        } else {
            self.deterministic_action(obs)
        }
    }
}

impl Policy for PpoAgent {
    fn act(&mut self, obs: &[f64], rng: &mut dyn RngCore, explore: bool) -> Result<Vec<f64>, LearnError> {
        if explore {
            Ok(self.sample(obs, rng)?.0)
        } else {
            self.deterministic_action(obs)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeuristicKind {
    LocalOnly,
    FixedOrientation,
    RandomOrientation,
    RandomPhase,
}

/// Raw-action layout of an environment: `[rotation | N phases | K shares]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionLayout {
    pub num_elements: usize,
    pub num_ues: usize,
    pub phase_levels: usize,
}

impl ActionLayout {
    pub fn of(cfg: &EnvConfig) -> Self {
        Self { num_elements: cfg.num_elements, num_ues: cfg.num_ues, phase_levels: 1 << cfg.phase_bits }
    }

    pub fn dim(&self) -> usize {
        1 + self.num_elements + self.num_ues
    }

    /// Raw value that decodes to codebook level `idx`.
    pub fn phase_raw(&self, idx: usize) -> f64 {
        if self.phase_levels < 2 {
            return -1.0;
        }
        2.0 * idx as f64 / (self.phase_levels - 1) as f64 - 1.0
    }
}

/// One of the baseline rules. Each rule owns a slice of the action vector and
/// can either act alone or overwrite that slice of another policy's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heuristic {
    pub kind: HeuristicKind,
    pub layout: ActionLayout,
    /// Raw rotation held by the fixed rule (and used as the neutral rotation elsewhere).
    pub fixed_raw_rotation: f64,
    pub fixed_rotation: f64,
}

impl Heuristic {
    pub fn for_env(kind: HeuristicKind, env: &MecEnv) -> Self {
        let delta = env.fixed_rotation();
        Self { kind, layout: ActionLayout::of(env.config()), fixed_raw_rotation: env.encode_rotation(delta), fixed_rotation: delta }
    }

    /// Fixed rule whose orientation maximises the mean pattern gain over `points`.
    pub fn fixed_for_points(env: &MecEnv, points: &[rismec_core::scenario::Position]) -> Result<Self, EnvError> {
        let delta = best_fixed_rotation(env.config(), points)?;
        Ok(Self {
            kind: HeuristicKind::FixedOrientation,
            layout: ActionLayout::of(env.config()),
            fixed_raw_rotation: env.encode_rotation(delta),
            fixed_rotation: delta,
        })
    }

    /// Overwrite the part of `raw` this rule controls.
    pub fn apply(&self, raw: &mut [f64], rng: &mut dyn RngCore) {
        let n = self.layout.num_elements;
        match self.kind {
            HeuristicKind::LocalOnly => raw[1 + n..].iter_mut().for_each(|a| *a = -1.0),
            HeuristicKind::FixedOrientation => raw[0] = self.fixed_raw_rotation,
            HeuristicKind::RandomOrientation => raw[0] = rng.random_range(-1.0..=1.0),
            HeuristicKind::RandomPhase => {
                for p in &mut raw[1..=n] {
                    *p = self.layout.phase_raw(rng.random_range(0..self.layout.phase_levels));
                }
            }
        }
    }
}

impl Policy for Heuristic {
    /// Neutral base action (held fixed rotation, zero phases, no offloading) with
    /// this rule applied on top.
    fn act(&mut self, _obs: &[f64], rng: &mut dyn RngCore, _explore: bool) -> Result<Vec<f64>, LearnError> {
        let mut raw = vec![-1.0; self.layout.dim()];
        raw[0] = self.fixed_raw_rotation;
        self.apply(&mut raw, rng);
        Ok(raw)
    }
}

/// A learned policy with a heuristic pinning part of its action.
pub struct Overridden<P> {
    pub inner: P,
    pub rule: Heuristic,
}

impl<P: Policy> Policy for Overridden<P> {
    fn act(&mut self, obs: &[f64], rng: &mut dyn RngCore, explore: bool) -> Result<Vec<f64>, LearnError> {
        let mut raw = self.inner.act(obs, rng, explore)?;
        self.rule.apply(&mut raw, rng);
        Ok(raw)
    }
}
