//! Small dense networks with reverse-mode gradients, Adam, and the agents that
//! drive the offloading environment: soft actor-critic, PPO and fixed rules.

pub mod adam;
pub mod gaussian;
pub mod nn;
pub mod policy;
pub mod ppo;
pub mod replay;
pub mod sac;

use thiserror::Error;

pub use adam::Adam;
pub use gaussian::GaussianHead;
pub use nn::{Activation, Mlp, NetError};
pub use policy::{Heuristic, HeuristicKind, Overridden, Policy};
pub use ppo::{PpoAgent, PpoConfig};
pub use replay::{Batch, ReplayBuffer};
pub use sac::{SacAgent, SacConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("invalid agent configuration: {0}")]
    Config(String),
    #[error("cannot update on an empty batch")]
    EmptyBatch,
}
