//! Adversarial reward learning from random priors driving an off-policy
//! soft actor-critic imitator, together with the optimal-transport and
//! Lipschitz machinery needed to verify the construction numerically.
//!
//! The crate is `no_std` (alloc only); all IO, file formats, and the CLI
//! live in the companion `ngt-cli` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod demo;
pub mod env;
pub mod linalg;
pub mod loss;
pub mod nn;
pub mod ot;
pub mod reward;
pub mod rng;
pub mod sac;
pub mod trainer;

pub use env::{Env, NormalizationRefs, TaskId, VecEnv};
pub use loss::HlgConfig;
pub use nn::{Activation, Mlp};
pub use reward::{InputMode, PairingLoss, PotentialPair, RewardConfig, RewardVariant};
pub use sac::{ReplayBuffer, SacAgent, SacConfig, Transition};
