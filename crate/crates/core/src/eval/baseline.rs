use glam::DVec2;

use crate::pedestrians::{orca_velocity, OrcaParams};
use crate::world::{
    normalize_angle, Action, AgentBody, Bounds, StaticObstacle, WorldState, MAX_ANGULAR_VELOCITY,
    MAX_LINEAR_VELOCITY,
};

/// Gain on the forward component of the holonomic velocity.
pub const K_V: f64 = 1.0;
/// Gain on the heading error.
pub const K_W: f64 = 2.0;
const WALL_THICKNESS: f64 = 0.5;

/// Arena walls as rectangles just outside the bounds, so the baseline's
/// perfect sensing covers them too.
pub fn wall_obstacles(bounds: &Bounds) -> [StaticObstacle; 4] {
    let c = (bounds.min + bounds.max) / 2.0;
    let h = (bounds.max - bounds.min) / 2.0;
    let t = WALL_THICKNESS / 2.0;
    let side = |center: DVec2, half: DVec2| StaticObstacle::Rect {
        center,
        half_extents: half,
    };
    [
        side(DVec2::new(c.x, bounds.max.y + t), DVec2::new(h.x + 2.0 * t, t)),
        side(DVec2::new(c.x, bounds.min.y - t), DVec2::new(h.x + 2.0 * t, t)),
        side(DVec2::new(bounds.max.x + t, c.y), DVec2::new(t, h.y)),
        side(DVec2::new(bounds.min.x - t, c.y), DVec2::new(t, h.y)),
    ]
}

/// Maps a desired holonomic velocity to a unicycle command. Backwards
/// motion is forbidden, so a velocity pointing behind the robot turns it
/// in place.
pub fn holonomic_to_unicycle(heading: f64, desired: DVec2) -> Action {
    if desired.length() < 1e-9 {
        return Action::STOP;
    }
    let forward = DVec2::from_angle(heading);
    let v = (K_V * desired.dot(forward)).clamp(0.0, MAX_LINEAR_VELOCITY);
    let err = normalize_angle(desired.to_angle() - heading);
    let w = (K_W * err).clamp(-MAX_ANGULAR_VELOCITY, MAX_ANGULAR_VELOCITY);
    Action::new(v, w)
}

/// The privileged ORCA robot: full knowledge of every agent's position and
/// velocity and of all obstacles.
pub fn orca_robot_policy(world: &WorldState, robot_index: usize, goal: DVec2, params: &OrcaParams, dt: f64) -> Action {
    let me = &world.robots[robot_index];
    let to_goal = goal - me.position();
    let dist = to_goal.length();
    let preferred = if dist < 1e-9 {
        DVec2::ZERO
    } else {
        to_goal / dist * MAX_LINEAR_VELOCITY.min(dist / dt)
    };
    let neighbors: Vec<AgentBody> = world
        .robots
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != robot_index)
        .map(|(_, b)| *b)
        .chain(world.pedestrians.iter().map(|p| p.body))
        .collect();
    let mut obstacles = world.obstacles.clone();
    if let Some(b) = &world.bounds {
        obstacles.extend(wall_obstacles(b));
    }
    let robot_params = OrcaParams {
        max_speed: MAX_LINEAR_VELOCITY,
        ..*params
    };
    let desired = orca_velocity(me, preferred, &neighbors, &obstacles, &robot_params, dt).velocity;
    holonomic_to_unicycle(me.pose.theta, desired)
}
