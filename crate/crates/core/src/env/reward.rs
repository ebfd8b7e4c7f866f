use serde::{Deserialize, Serialize};

use crate::world::{detect_collisions, WorldState};

use super::Outcome;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    /// Arrival bonus.
    pub r_arr: f64,
    /// Collision penalty.
    pub r_col: f64,
    /// Proximity penalty scale, applied while `d_min < 1`.
    pub epsilon1: f64,
    /// Progress shaping scale.
    pub epsilon2: f64,
    /// Per-step cost.
    pub r_step: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            r_arr: 500.0,
            r_col: -500.0,
            epsilon1: 50.0,
            epsilon2: 200.0,
            r_step: -5.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub goal: f64,
    pub safe: f64,
    pub step: f64,
    pub shaping: f64,
}

impl RewardBreakdown {
    pub fn total(&self) -> f64 {
        self.goal + self.safe + self.step + self.shaping
    }
}

/// Reward of robot `robot_index` for the transition `prev -> next`.
///
/// A collision replaces the proximity penalty; `d_min` is measured in `next`.
pub fn compute_reward(
    prev: &WorldState,
    next: &WorldState,
    robot_index: usize,
    goal: glam::DVec2,
    outcome: Outcome,
    config: &RewardConfig,
) -> RewardBreakdown {
    let before = prev.robots[robot_index].position().distance(goal);
    let after = next.robots[robot_index].position().distance(goal);
    let d_min = detect_collisions(next, robot_index).d_min;

    let goal_term = if outcome == Outcome::Reached {
        config.r_arr
    } else {
        0.0
    };
    let safe = if outcome == Outcome::Collided {
        config.r_col
    } else if d_min < 1.0 {
        -config.epsilon1 * (1.0 - d_min)
    } else {
        0.0
    };
    RewardBreakdown {
        goal: goal_term,
        safe,
        step: config.r_step,
        shaping: config.epsilon2 * (before - after),
    }
}
