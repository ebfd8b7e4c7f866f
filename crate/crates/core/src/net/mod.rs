//! Convolutional policy and value networks with hand-written backprop.

pub mod checkpoint;
pub mod dist;
pub mod layers;
pub mod model;
pub mod policy;
pub mod real;

use thiserror::Error;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError};
pub use dist::{greedy_action, sample_action, PolicyOutput, RawAction, Sampled};
pub use model::{ArchConfig, ForwardCache, Net};
pub use policy::{ActorCritic, LogStdMode, PolicyConfig};
pub use real::Real;

/// Parameters of the default trunk (everything but the output head).
pub const TRUNK_PARAMS: usize = 1_763_628;
/// Default discrete policy: trunk plus a 28-way head.
pub const DISCRETE_POLICY_PARAMS: usize = 1_777_992;
/// Default value twin: trunk plus a scalar head.
pub const VALUE_PARAMS: usize = 1_764_141;
/// Default continuous policy: trunk, 2 means and 2 standalone log-stds.
pub const CONTINUOUS_POLICY_PARAMS: usize = 1_764_656;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("{what}: expected {expected} values, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{what}: non-finite value at index {index}")]
    NonFiniteInput { what: &'static str, index: usize },
    #[error("unsupported architecture {0}")]
    BadArchitecture(String),
}
