use std::collections::BTreeMap;

use crate::net::RawAction;

use super::gae::{compute_gae, normalize};
use super::PpoError;

/// One robot's experience for one tick.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    /// `4 x 48 x 48` map tensor.
    pub maps: Vec<f32>,
    pub goal: [f32; 3],
    pub action: RawAction,
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    pub done: bool,
    pub env_id: usize,
    /// Robot slot within the environment.
    pub robot: usize,
}

/// Fixed-capacity on-policy store. After [`RolloutBuffer::finish`] the
/// transitions are grouped by `(env_id, robot)` with each group in time order.
#[derive(Clone, Debug, Default)]
pub struct RolloutBuffer {
    capacity: usize,
    transitions: Vec<Transition>,
    advantages: Vec<f64>,
    returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            transitions: Vec::with_capacity(capacity),
            advantages: Vec::new(),
            returns: Vec::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.transitions.len() >= self.capacity
    }

    pub fn push(&mut self, t: Transition) -> Result<(), PpoError> {
        if self.is_full() {
            return Err(PpoError::BufferFull(self.capacity));
        }
        self.advantages.clear();
        self.returns.clear();
        self.transitions.push(t);
        Ok(())
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// Empty until [`RolloutBuffer::finish`] has run.
    pub fn advantages(&self) -> &[f64] {
        &self.advantages
    }

    pub fn returns(&self) -> &[f64] {
        &self.returns
    }

    pub fn count_for_env(&self, env_id: usize) -> usize {
        self.transitions.iter().filter(|t| t.env_id == env_id).count()
    }

    /// Groups streams, runs GAE on each and normalizes the advantages over
    /// the whole batch. `bootstrap` maps `(env_id, robot)` to the value of
    /// the state after that stream's last transition; missing entries count
    /// as zero.
    pub fn finish(
        &mut self,
        bootstrap: &BTreeMap<(usize, usize), f64>,
        gamma: f64,
        lambda: f64,
    ) -> Result<(), PpoError> {
        if !self.is_full() {
            return Err(PpoError::BufferNotFull {
                len: self.len(),
                capacity: self.capacity,
            });
        }
        // Stable, so time order survives inside each stream.
        self.transitions.sort_by_key(|t| (t.env_id, t.robot));
        let mut advantages = Vec::with_capacity(self.len());
        let mut returns = Vec::with_capacity(self.len());
        let mut start = 0;
        while start < self.transitions.len() {
            let key = (self.transitions[start].env_id, self.transitions[start].robot);
            let end = start
                + self.transitions[start..]
                    .iter()
                    .take_while(|t| (t.env_id, t.robot) == key)
                    .count();
            let seg = &self.transitions[start..end];
            let rewards: Vec<f64> = seg.iter().map(|t| t.reward).collect();
            let values: Vec<f64> = seg.iter().map(|t| t.value).collect();
            let dones: Vec<bool> = seg.iter().map(|t| t.done).collect();
            let boot = bootstrap.get(&key).copied().unwrap_or(0.0);
            let (a, r) = compute_gae(&rewards, &values, &dones, boot, gamma, lambda)?;
            advantages.extend(a);
            returns.extend(r);
            start = end;
        }
        normalize(&mut advantages);
        self.advantages = advantages;
        self.returns = returns;
        Ok(())
    }
}
