use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dist::{softmax, PolicyOutput};
use super::model::{ArchConfig, ForwardCache, Net};
use super::real::Real;
use super::NetError;
use crate::env::ActionMode;
use crate::world::NUM_DISCRETE_ACTIONS;

/// Where the Gaussian log-std comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LogStdMode {
    /// Two free parameters shared by every state.
    StateIndependent,
    /// Two extra outputs of the policy head.
    StateDependent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub arch: ArchConfig,
    pub mode: ActionMode,
    pub log_std_mode: LogStdMode,
    pub log_std_init: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            arch: ArchConfig::default(),
            mode: ActionMode::Discrete,
            log_std_mode: LogStdMode::StateIndependent,
            log_std_init: -0.5,
        }
    }
}

impl PolicyConfig {
    pub fn policy_outputs(&self) -> usize {
        match (self.mode, self.log_std_mode) {
            (ActionMode::Discrete, _) => NUM_DISCRETE_ACTIONS,
            (ActionMode::Continuous, LogStdMode::StateIndependent) => 2,
            (ActionMode::Continuous, LogStdMode::StateDependent) => 4,
        }
    }

    pub fn standalone_log_std(&self) -> usize {
        match (self.mode, self.log_std_mode) {
            (ActionMode::Continuous, LogStdMode::StateIndependent) => 2,
            _ => 0,
        }
    }

    /// Number of distribution parameters per observation: logits, or
    /// means followed by log-stds.
    pub fn dist_params(&self) -> usize {
        match self.mode {
            ActionMode::Discrete => NUM_DISCRETE_ACTIONS,
            ActionMode::Continuous => 4,
        }
    }
}

/// Policy network, value twin and the standalone log-std block. The two
/// networks share a shape but never parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ActorCritic<T> {
    pub config: PolicyConfig,
    pub policy: Net<T>,
    pub value: Net<T>,
    pub log_std: Vec<T>,
}

impl<T: Real> ActorCritic<T> {
    pub fn new(config: PolicyConfig, seed: u64) -> Result<Self, NetError> {
        config.arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut policy = Net::initialized(&config.arch, config.policy_outputs(), 0.01, &mut rng);
        let value = Net::initialized(&config.arch, 1, 1.0, &mut rng);
        if config.policy_outputs() == 4 {
            let init = T::of(config.log_std_init);
            policy.head_bias_mut()[2..].fill(init);
        }
        let log_std = vec![T::of(config.log_std_init); config.standalone_log_std()];
        Ok(Self {
            config,
            policy,
            value,
            log_std,
        })
    }

    /// Trainable parameters of the policy side (network plus log-std block).
    pub fn policy_param_count(&self) -> usize {
        self.policy.param_count() + self.log_std.len()
    }

    pub fn param_count(&self) -> usize {
        self.policy_param_count() + self.value.param_count()
    }

    /// Distribution parameters per row of a policy forward pass, in `f64`.
    pub fn dist_params(&self, head: &[T]) -> Vec<Vec<f64>> {
        let k = self.policy.outputs();
        head.chunks_exact(k)
            .map(|row| {
                let mut p: Vec<f64> = row.iter().map(|v| v.f64()).collect();
                p.extend(self.log_std.iter().map(|v| v.f64()));
                p
            })
            .collect()
    }

    pub fn outputs_from_head(&self, head: &[T]) -> Vec<PolicyOutput> {
        self.dist_params(head)
            .into_iter()
            .map(|p| match self.config.mode {
                ActionMode::Discrete => PolicyOutput::Discrete { probs: softmax(&p) },
                ActionMode::Continuous => PolicyOutput::Continuous {
                    mean: [p[0], p[1]],
                    log_std: [p[2], p[3]],
                },
            })
            .collect()
    }

    /// Splits gradients with respect to distribution parameters into head
    /// output gradients and standalone log-std gradients.
    pub fn split_dist_grads(&self, d_dist: &[Vec<f64>]) -> (Vec<T>, Vec<T>) {
        let k = self.policy.outputs();
        let mut d_head = Vec::with_capacity(d_dist.len() * k);
        let mut d_log_std = vec![T::zero(); self.log_std.len()];
        for row in d_dist {
            d_head.extend(row[..k].iter().map(|&v| T::of(v)));
            for (g, &v) in d_log_std.iter_mut().zip(&row[k..]) {
                *g += T::of(v);
            }
        }
        (d_head, d_log_std)
    }

    pub fn policy_forward(&self, maps: &[T], goals: &[T], batch: usize) -> Result<ForwardCache<T>, NetError> {
        self.policy.forward(maps, goals, batch)
    }

    pub fn value_forward(&self, maps: &[T], goals: &[T], batch: usize) -> Result<ForwardCache<T>, NetError> {
        self.value.forward(maps, goals, batch)
    }

    /// Action distributions and state values for a batch.
    pub fn forward(&self, maps: &[T], goals: &[T], batch: usize) -> Result<(Vec<PolicyOutput>, Vec<f64>), NetError> {
        let p = self.policy_forward(maps, goals, batch)?;
        let v = self.value_forward(maps, goals, batch)?;
        Ok((
            self.outputs_from_head(&p.output),
            v.output.iter().map(|x| x.f64()).collect(),
        ))
    }

    pub fn cast<U: Real>(&self) -> ActorCritic<U> {
        let conv = |xs: &[T]| xs.iter().map(|x| U::of(x.f64())).collect::<Vec<U>>();
        let mut policy = Net::zeros(&self.config.arch, self.policy.outputs());
        policy.params = conv(&self.policy.params);
        let mut value = Net::zeros(&self.config.arch, 1);
        value.params = conv(&self.value.params);
        ActorCritic {
            config: self.config.clone(),
            policy,
            value,
            log_std: conv(&self.log_std),
        }
    }
}
