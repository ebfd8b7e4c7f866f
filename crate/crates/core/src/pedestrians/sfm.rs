//! Social force model: a goal-seeking driving term plus exponential
//! repulsion from other agents and from static obstacles.

use glam::DVec2;
use serde::{Deserialize, Serialize};

use crate::world::{AgentBody, StaticObstacle};

/// Robots are passed to the model with ids starting here so they never
/// collide with pedestrian ids in the coincident-center tie-break.
pub const ROBOT_ID_OFFSET: usize = 1_000_000;

/// Post-integration speed cap as a multiple of the desired speed.
const SPEED_CAP_FACTOR: f64 = 1.3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SfmParams {
    /// Relaxation time towards the desired velocity (s).
    pub relaxation_time: f64,
    /// Agent interaction strength (m/s^2).
    pub agent_strength: f64,
    /// Agent interaction range (m).
    pub agent_range: f64,
    /// Obstacle interaction strength (m/s^2).
    pub obstacle_strength: f64,
    /// Obstacle interaction range (m).
    pub obstacle_range: f64,
    pub desired_speed: f64,
    /// Hard speed limit, applied together with 1.3x the desired speed.
    pub max_speed: f64,
}

impl Default for SfmParams {
    fn default() -> Self {
        Self {
            relaxation_time: 0.5,
            agent_strength: 2.1,
            agent_range: 0.3,
            obstacle_strength: 10.0,
            obstacle_range: 0.2,
            desired_speed: 0.5,
            max_speed: super::MAX_PEDESTRIAN_SPEED,
        }
    }
}

impl SfmParams {
    pub fn speed_cap(&self) -> f64 {
        (SPEED_CAP_FACTOR * self.desired_speed).min(self.max_speed)
    }
}

/// Repulsive acceleration on `body` from a neighbor, pointing away from it.
///
/// Coincident centers fall back to the x axis, with the sign decided by id
/// order so the two agents are pushed apart.
pub fn agent_repulsion(
    self_id: usize,
    body: &AgentBody,
    other_id: usize,
    other: &AgentBody,
    params: &SfmParams,
) -> DVec2 {
    let diff = body.position() - other.position();
    let distance = diff.length();
    let normal = if distance > 0.0 {
        diff / distance
    } else if self_id < other_id {
        DVec2::NEG_X
    } else {
        DVec2::X
    };
    let combined = body.radius + other.radius;
    params.agent_strength * ((combined - distance) / params.agent_range).exp() * normal
}

/// Repulsion from the closest point of a static obstacle.
pub fn obstacle_repulsion(body: &AgentBody, obstacle: &StaticObstacle, params: &SfmParams) -> DVec2 {
    let p = body.position();
    let (contact, outward) = obstacle.boundary_contact(p);
    let signed_distance = if obstacle.contains(p) {
        -(p - contact).length()
    } else {
        (p - contact).length()
    };
    params.obstacle_strength * ((body.radius - signed_distance) / params.obstacle_range).exp() * outward
}

/// Acceleration of a pedestrian heading for `goal`.
///
/// The result is limited so that `velocity + a * dt` never exceeds
/// [`SfmParams::speed_cap`].
pub fn sfm_acceleration(
    self_id: usize,
    body: &AgentBody,
    goal: DVec2,
    neighbors: &[(usize, AgentBody)],
    obstacles: &[StaticObstacle],
    params: &SfmParams,
    dt: f64,
) -> DVec2 {
    let to_goal = goal - body.position();
    let desired = if to_goal.length() > 1e-9 {
        to_goal.normalize() * params.desired_speed
    } else {
        DVec2::ZERO
    };
    let mut accel = (desired - body.velocity) / params.relaxation_time;

    for (other_id, other) in neighbors {
        accel += agent_repulsion(self_id, body, *other_id, other, params);
    }
    for obstacle in obstacles {
        accel += obstacle_repulsion(body, obstacle, params);
    }

    let cap = params.speed_cap();
    let next = body.velocity + accel * dt;
    let speed = next.length();
    if speed > cap {
        accel = (next * (cap / speed) - body.velocity) / dt;
    }
    accel
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{AgentKind, Pose2D};

    fn ped(x: f64, y: f64, vx: f64, vy: f64) -> AgentBody {
        AgentBody {
            pose: Pose2D::new(x, y, 0.0),
            velocity: DVec2::new(vx, vy),
            radius: 0.3,
            kind: AgentKind::Pedestrian,
        }
    }

    #[test]
    fn lone_pedestrian_driving_force() {
        let a = sfm_acceleration(
            0,
            &ped(0.0, 0.0, 0.0, 0.0),
            DVec2::new(10.0, 0.0),
            &[],
            &[],
            &SfmParams::default(),
            0.1,
        );
        assert!((a - DVec2::new(1.0, 0.0)).length() < 1e-15);
    }

    #[test]
    fn distant_interaction_is_negligible() {
        let p = SfmParams::default();
        let b = p.agent_range;
        let a = ped(0.0, 0.0, 0.0, 0.0);
        let o = ped(10.0 * b, 0.0, 0.0, 0.0);
        let f = agent_repulsion(0, &a, 1, &o, &p).length();
        let expected = p.agent_strength * (-(10.0 * b - 0.6) / b).exp();
        assert!((f - expected).abs() < 1e-15);
        assert!(f < 1e-3 * p.agent_strength);
    }

    #[test]
    fn mirror_pair_forces_cancel() {
        let p = SfmParams::default();
        let a = ped(-0.7, 0.2, 0.3, -0.1);
        let b = ped(0.7, -0.2, -0.3, 0.1);
        let fa = sfm_acceleration(0, &a, DVec2::new(3.0, -1.0), &[(1, b)], &[], &p, 0.1);
        let fb = sfm_acceleration(1, &b, DVec2::new(-3.0, 1.0), &[(0, a)], &[], &p, 0.1);
        assert_eq!(fa, -fb);
    }

    #[test]
    fn coincident_centers_tie_break() {
        let p = SfmParams::default();
        let a = ped(1.0, 1.0, 0.0, 0.0);
        let fa = agent_repulsion(3, &a, 7, &a, &p);
        let fb = agent_repulsion(7, &a, 3, &a, &p);
        assert!(fa.is_finite() && fb.is_finite());
        assert_eq!(fa, -fb);
        assert!(fa.x < 0.0);
    }

    #[test]
    fn repulsion_decreases_with_distance() {
        let p = SfmParams::default();
        let a = ped(0.0, 0.0, 0.0, 0.0);
        let mut last = f64::INFINITY;
        for k in 1..200 {
            let o = ped(0.02 * k as f64, 0.0, 0.0, 0.0);
            let f = agent_repulsion(0, &a, 1, &o, &p).length();
            assert!(f.is_finite() && f < last);
            last = f;
        }
    }

    #[test]
    fn speed_is_capped() {
        let p = SfmParams::default();
        // Neighbor right behind pushes hard forward.
        let a = ped(0.0, 0.0, 0.45, 0.0);
        let behind = ped(-0.4, 0.0, 0.0, 0.0);
        let acc = sfm_acceleration(0, &a, DVec2::new(5.0, 0.0), &[(1, behind)], &[], &p, 0.1);
        let v = a.velocity + acc * 0.1;
        assert!(v.length() <= p.speed_cap() + 1e-12);
    }

    #[test]
    fn obstacle_pushes_outward() {
        let p = SfmParams::default();
        let rect = StaticObstacle::Rect {
            center: DVec2::ZERO,
            half_extents: DVec2::new(0.5, 0.5),
        };
        let outside = ped(0.9, 0.0, 0.0, 0.0);
        assert!(obstacle_repulsion(&outside, &rect, &p).x > 0.0);
        let inside = ped(0.0, 0.4, 0.0, 0.0);
        let f = obstacle_repulsion(&inside, &rect, &p);
        assert!(f.y > 0.0 && f.is_finite());
    }
}
