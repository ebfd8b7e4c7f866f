//! Simulated pedestrians: ORCA and social-force motion plus leg animation.

pub mod gait;
pub mod orca;
pub mod sfm;

use std::fmt;
use std::str::FromStr;

use glam::DVec2;
use serde::{Deserialize, Serialize};

use crate::world::{AgentBody, AgentKind, Pose2D, StaticObstacle};

pub use gait::{update_gait, GaitState, LegDisk};
pub use orca::{orca_lines, orca_velocity, solve_orca, OrcaLine, OrcaParams, OrcaSolution};
pub use sfm::{sfm_acceleration, SfmParams};

/// Default pedestrian body radius (m).
pub const PEDESTRIAN_RADIUS: f64 = 0.3;
/// Maximum pedestrian speed (m/s).
pub const MAX_PEDESTRIAN_SPEED: f64 = 0.5;
/// Distance at which a patrolling pedestrian turns around.
pub const PATROL_TOLERANCE: f64 = 0.3;

/// Collision avoidance strategy driving a group of pedestrians.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Orca,
    Sfm,
    /// No pedestrians are spawned.
    None,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Orca => "orca",
            Strategy::Sfm => "sfm",
            Strategy::None => "none",
        })
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "orca" => Ok(Strategy::Orca),
            "sfm" => Ok(Strategy::Sfm),
            "none" => Ok(Strategy::None),
            other => Err(format!("unknown pedestrian strategy `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pedestrian {
    pub id: usize,
    pub body: AgentBody,
    pub gait: GaitState,
    /// Patrol endpoints; the pedestrian walks towards `goal` and swaps on arrival.
    pub start: DVec2,
    pub goal: DVec2,
}

impl Pedestrian {
    pub fn new(id: usize, start: DVec2, goal: DVec2, radius: f64) -> Self {
        let heading = (goal - start).to_angle();
        Self {
            id,
            body: AgentBody {
                pose: Pose2D::new(start.x, start.y, heading),
                velocity: DVec2::ZERO,
                radius,
                kind: AgentKind::Pedestrian,
            },
            gait: GaitState::default(),
            start,
            goal,
        }
    }

    /// A motionless pedestrian whose goal is its own position.
    pub fn standing(position: DVec2, radius: f64) -> Self {
        let mut p = Self::new(0, position, position, radius);
        p.body.pose.theta = 0.0;
        p
    }

    pub fn leg_disks(&self) -> [LegDisk; 2] {
        self.gait.legs(&self.body)
    }

    /// Swaps patrol endpoints once the current goal is reached.
    pub fn update_patrol(&mut self) {
        if self.body.position().distance(self.goal) < PATROL_TOLERANCE {
            std::mem::swap(&mut self.start, &mut self.goal);
        }
    }

    /// Velocity towards the goal, capped at `max_speed` and slowing to land on it.
    pub fn preferred_velocity(&self, max_speed: f64, dt: f64) -> DVec2 {
        let to_goal = self.goal - self.body.position();
        let dist = to_goal.length();
        if dist < 1e-9 {
            return DVec2::ZERO;
        }
        to_goal / dist * max_speed.min(dist / dt)
    }
}

/// Advances every pedestrian by one tick using `strategy`.
///
/// Velocities are computed from a single snapshot and applied together, so
/// the result does not depend on pedestrian order. Robots take part as
/// neighbors but are not moved.
pub fn advance_pedestrians(
    pedestrians: &mut [Pedestrian],
    robots: &[AgentBody],
    obstacles: &[StaticObstacle],
    strategy: Strategy,
    orca: &OrcaParams,
    sfm: &SfmParams,
    dt: f64,
) {
    let bodies: Vec<AgentBody> = pedestrians.iter().map(|p| p.body).collect();
    let new_velocities: Vec<DVec2> = pedestrians
        .iter()
        .enumerate()
        .map(|(i, ped)| match strategy {
            Strategy::Orca => {
                let neighbors: Vec<AgentBody> = bodies
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, b)| *b)
                    .chain(robots.iter().copied())
                    .collect();
                let preferred = ped.preferred_velocity(orca.max_speed, dt);
                orca_velocity(&ped.body, preferred, &neighbors, obstacles, orca, dt).velocity
            }
            Strategy::Sfm => {
                let neighbors: Vec<(usize, AgentBody)> = pedestrians
                    .iter()
                    .filter(|other| other.id != ped.id)
                    .map(|other| (other.id, other.body))
                    .chain(
                        robots
                            .iter()
                            .enumerate()
                            .map(|(j, r)| (sfm::ROBOT_ID_OFFSET + j, *r)),
                    )
                    .collect();
                let accel =
                    sfm_acceleration(ped.id, &ped.body, ped.goal, &neighbors, obstacles, sfm, dt);
                ped.body.velocity + accel * dt
            }
            Strategy::None => DVec2::ZERO,
        })
        .collect();

    for (ped, v) in pedestrians.iter_mut().zip(new_velocities) {
        ped.body.velocity = v;
        let p = ped.body.position() + v * dt;
        ped.body.pose.x = p.x;
        ped.body.pose.y = p.y;
        if v.length() > 1e-6 {
            ped.body.pose.theta = v.to_angle();
        }
        update_gait(&mut ped.gait, &ped.body, dt);
        ped.update_patrol();
    }
}
