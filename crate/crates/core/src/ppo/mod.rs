//! Proximal policy optimisation for the recurrent agent.

mod config;
mod gae;
mod loss;
mod rollout;
mod train;
mod update;

pub use config::PpoConfig;
pub use gae::{compute_gae, discounted_return, normalize_advantages};
pub use loss::{clipped_surrogate, ppo_loss, surrogate_ratio_grad, LossReport};
pub use rollout::{collect_rollout, EpisodeStat, RolloutState, TrajectoryBatch};
pub use train::{train, MetricsRow, TrainOutcome, TrainStatus, METRICS_HEADER};
pub use update::{batch_advantages, ppo_update};
