//! Proximal policy optimization over the parallel navigation environments.

pub mod adam;
pub mod buffer;
pub mod gae;
pub mod rollout;
pub mod trainer;
pub mod update;

use thiserror::Error;

use crate::net::NetError;

pub use adam::{adam_step, AdamState};
pub use buffer::{RolloutBuffer, Transition};
pub use gae::{compute_gae, normalize};
pub use rollout::{collect_rollouts, EpisodeSummary, RolloutWorker};
pub use trainer::{env_seed, scenario_envs, training_envs, IterationLog, Trainer};
pub use update::{clipped_objective, ppo_update, Learner, NetLearner, PolicyLossStats, PpoConfig, UpdateStats};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PpoError {
    #[error("length mismatch: {rewards} rewards, {values} values, {dones} dones")]
    LengthMismatch {
        rewards: usize,
        values: usize,
        dones: usize,
    },
    #[error("rollout buffer is full ({0} transitions)")]
    BufferFull(usize),
    #[error("rollout buffer holds {len} of {capacity} transitions")]
    BufferNotFull { len: usize, capacity: usize },
    #[error("advantages have not been computed for this buffer")]
    NotFinished,
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Net(#[from] NetError),
}
