//! Message-passing graph policies for chain locomotion, trained with PPO.
//!
//! The crate is organised bottom-up:
//!
//! - [`ndiff`]: tensors, a reverse-mode tape, MLP/GRU layers, orthogonal
//!   initialisation and Adam over freezable parameter groups.
//! - [`morphology`]: agent graphs and the observation/action factoring.
//! - [`policy`]: the GNN policy, the MLP baseline and the critic.
//! - [`chainsim`]: the chain-locomotion environment.
//! - [`ppo`]: advantage estimation, the clipped surrogate, rollout
//!   collection and the update loop with its diagnostics.
//! - [`harness`]: configs, seeded runs, checkpoints, transfer evaluation,
//!   sweeps and reports.

pub mod chainsim;
pub mod error;
pub mod harness;
pub mod morphology;
pub mod ndiff;
pub mod policy;
pub mod ppo;

pub use error::{Error, Result};
