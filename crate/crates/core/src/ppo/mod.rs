//! PPO: advantage estimation, the clipped surrogate, rollout collection and
//! the minibatch update with its KL and clip-fraction diagnostics.

mod batch;
mod config;
mod gae;
mod rollout;
mod surrogate;
mod update;

pub use batch::{Segment, TrajectoryBatch};
pub use config::PpoConfig;
pub use gae::compute_gae;
pub use rollout::{collect_batch, Collector, RolloutStream};
pub use surrogate::{is_clipped, surrogate_loss, surrogate_term, SurrogateTerm};
pub use update::{normalize, update, update_with_advantages, UpdateStats};
