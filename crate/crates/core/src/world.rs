//! Flat-world geometry: robot kinematics, collision checks and lidar rays.
//!
//! All state here is plain data. Functions take the world by reference and
//! never mutate it, so observation building and reward evaluation can share
//! one snapshot.

use std::f64::consts::PI;

use glam::DVec2;
use serde::{Deserialize, Serialize};

use crate::pedestrians::Pedestrian;

/// Default robot radius in meters.
pub const ROBOT_RADIUS: f64 = 0.17;
/// Maximum robot linear velocity (m/s).
pub const MAX_LINEAR_VELOCITY: f64 = 0.6;
/// Maximum magnitude of the robot angular velocity (rad/s).
pub const MAX_ANGULAR_VELOCITY: f64 = 0.9;

/// Below this angular rate the unicycle step is integrated as a straight line.
const STRAIGHT_LINE_EPS: f64 = 1e-9;

/// Wraps an angle into `(-pi, pi]`. Angles already in range are returned untouched.
pub fn normalize_angle(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let wrapped = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped <= -PI {
        wrapped + 2.0 * PI
    } else {
        wrapped
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn position(&self) -> DVec2 {
        DVec2::new(self.x, self.y)
    }

    pub fn heading(&self) -> DVec2 {
        DVec2::new(self.theta.cos(), self.theta.sin())
    }

    /// Expresses a world-frame point in this pose's frame.
    pub fn to_local(&self, p: DVec2) -> DVec2 {
        let d = p - self.position();
        let (s, c) = self.theta.sin_cos();
        DVec2::new(c * d.x + s * d.y, -s * d.x + c * d.y)
    }

    /// Rotates a world-frame vector into this pose's frame.
    pub fn rotate_to_local(&self, v: DVec2) -> DVec2 {
        let (s, c) = self.theta.sin_cos();
        DVec2::new(c * v.x + s * v.y, -s * v.x + c * v.y)
    }
}

/// A velocity command for a differential drive robot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action {
    /// Linear velocity, m/s.
    pub v: f64,
    /// Angular velocity, rad/s.
    pub w: f64,
}

/// Discrete linear velocities (m/s).
pub const DISCRETE_LINEAR: [f64; 4] = [0.0, 0.2, 0.4, 0.6];
/// Discrete angular velocities (rad/s).
pub const DISCRETE_ANGULAR: [f64; 7] = [-0.9, -0.6, -0.3, 0.0, 0.3, 0.6, 0.9];
/// Size of the discrete action set.
pub const NUM_DISCRETE_ACTIONS: usize = DISCRETE_LINEAR.len() * DISCRETE_ANGULAR.len();

impl Action {
    pub const STOP: Action = Action { v: 0.0, w: 0.0 };

    pub fn new(v: f64, w: f64) -> Self {
        Self { v, w }
    }

    /// Discrete action `index` of the 4x7 grid, linear-major.
    pub fn from_discrete(index: usize) -> Option<Self> {
        if index >= NUM_DISCRETE_ACTIONS {
            return None;
        }
        let n_w = DISCRETE_ANGULAR.len();
        Some(Self {
            v: DISCRETE_LINEAR[index / n_w],
            w: DISCRETE_ANGULAR[index % n_w],
        })
    }

    pub fn is_within_bounds(&self) -> bool {
        (0.0..=MAX_LINEAR_VELOCITY).contains(&self.v)
            && (-MAX_ANGULAR_VELOCITY..=MAX_ANGULAR_VELOCITY).contains(&self.w)
    }

    /// Projects onto the valid continuous action box. Non-finite components become zero.
    pub fn clamped(&self) -> Self {
        let fix = |x: f64| if x.is_finite() { x } else { 0.0 };
        Self {
            v: fix(self.v).clamp(0.0, MAX_LINEAR_VELOCITY),
            w: fix(self.w).clamp(-MAX_ANGULAR_VELOCITY, MAX_ANGULAR_VELOCITY),
        }
    }
}

/// Exact unicycle integration of one control interval.
pub fn step_diff_drive(pose: Pose2D, action: Action, dt: f64) -> Pose2D {
    debug_assert!(dt > 0.0);
    let Action { v, w } = action;
    if w.abs() < STRAIGHT_LINE_EPS {
        let (s, c) = pose.theta.sin_cos();
        return Pose2D {
            x: pose.x + v * dt * c,
            y: pose.y + v * dt * s,
            theta: pose.theta,
        };
    }
    let theta_next = pose.theta + w * dt;
    let radius = v / w;
    Pose2D {
        x: pose.x + radius * (theta_next.sin() - pose.theta.sin()),
        y: pose.y - radius * (theta_next.cos() - pose.theta.cos()),
        theta: normalize_angle(theta_next),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Robot,
    Pedestrian,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentBody {
    pub pose: Pose2D,
    pub velocity: DVec2,
    pub radius: f64,
    pub kind: AgentKind,
}

impl AgentBody {
    pub fn robot(pose: Pose2D) -> Self {
        Self {
            pose,
            velocity: DVec2::ZERO,
            radius: ROBOT_RADIUS,
            kind: AgentKind::Robot,
        }
    }

    pub fn position(&self) -> DVec2 {
        self.pose.position()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum StaticObstacle {
    Circle { center: DVec2, radius: f64 },
    /// Axis-aligned rectangle.
    Rect { center: DVec2, half_extents: DVec2 },
}

impl StaticObstacle {
    /// Closest point of the obstacle's solid region to `p` (`p` itself when inside).
    pub fn closest_point(&self, p: DVec2) -> DVec2 {
        match *self {
            StaticObstacle::Circle { center, radius } => {
                let d = p - center;
                let len = d.length();
                if len <= radius {
                    p
                } else {
                    center + d * (radius / len)
                }
            }
            StaticObstacle::Rect {
                center,
                half_extents,
            } => center + (p - center).clamp(-half_extents, half_extents),
        }
    }

    /// Distance from `p` to the obstacle region; zero inside.
    pub fn distance(&self, p: DVec2) -> f64 {
        (p - self.closest_point(p)).length()
    }

    pub fn contains(&self, p: DVec2) -> bool {
        match *self {
            StaticObstacle::Circle { center, radius } => (p - center).length_squared() <= radius * radius,
            StaticObstacle::Rect {
                center,
                half_extents,
            } => {
                let d = (p - center).abs();
                d.x <= half_extents.x && d.y <= half_extents.y
            }
        }
    }

    /// Closest point on the boundary and the outward unit normal there.
    ///
    /// Works for points inside the obstacle as well, which the social force
    /// model needs to push an agent back out.
    pub fn boundary_contact(&self, p: DVec2) -> (DVec2, DVec2) {
        match *self {
            StaticObstacle::Circle { center, radius } => {
                let d = p - center;
                let n = if d.length_squared() > 0.0 {
                    d.normalize()
                } else {
                    DVec2::X
                };
                (center + n * radius, n)
            }
            StaticObstacle::Rect {
                center,
                half_extents,
            } => {
                let local = p - center;
                if !self.contains(p) {
                    let q = local.clamp(-half_extents, half_extents);
                    let n = (local - q).normalize();
                    return (center + q, n);
                }
                // Inside: leave through the nearest face.
                let dx = half_extents.x - local.x.abs();
                let dy = half_extents.y - local.y.abs();
                if dx <= dy {
                    let sx = if local.x >= 0.0 { 1.0 } else { -1.0 };
                    (
                        center + DVec2::new(sx * half_extents.x, local.y),
                        DVec2::new(sx, 0.0),
                    )
                } else {
                    let sy = if local.y >= 0.0 { 1.0 } else { -1.0 };
                    (
                        center + DVec2::new(local.x, sy * half_extents.y),
                        DVec2::new(0.0, sy),
                    )
                }
            }
        }
    }

    /// Polygon approximation, counter-clockwise. Rectangles are exact.
    pub fn polygon(&self, circle_segments: usize) -> Vec<DVec2> {
        match *self {
            StaticObstacle::Rect {
                center,
                half_extents: h,
            } => vec![
                center + DVec2::new(h.x, h.y),
                center + DVec2::new(-h.x, h.y),
                center + DVec2::new(-h.x, -h.y),
                center + DVec2::new(h.x, -h.y),
            ],
            StaticObstacle::Circle { center, radius } => {
                // Circumscribed polygon so the approximation never cuts into the disk.
                let n = circle_segments.max(3);
                let r = radius / (PI / n as f64).cos();
                (0..n)
                    .map(|k| {
                        let a = 2.0 * PI * k as f64 / n as f64;
                        center + r * DVec2::new(a.cos(), a.sin())
                    })
                    .collect()
            }
        }
    }

    /// Translated and rotated copy. Rectangles must stay axis-aligned, so only
    /// rotations by multiples of 90 degrees are exact for them; other angles
    /// rotate the center and keep the extents.
    pub fn transformed(&self, rotation: f64, translation: DVec2) -> Self {
        let rot = DVec2::from_angle(rotation);
        match *self {
            StaticObstacle::Circle { center, radius } => StaticObstacle::Circle {
                center: rot.rotate(center) + translation,
                radius,
            },
            StaticObstacle::Rect {
                center,
                half_extents,
            } => StaticObstacle::Rect {
                center: rot.rotate(center) + translation,
                half_extents,
            },
        }
    }
}

/// Axis-aligned arena boundary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: DVec2,
    pub max: DVec2,
}

impl Bounds {
    /// A square arena of the given side length centered at the origin.
    pub fn square(side: f64) -> Self {
        let h = side / 2.0;
        Self {
            min: DVec2::splat(-h),
            max: DVec2::splat(h),
        }
    }

    /// True when a disk of `radius` at `p` lies entirely inside.
    pub fn contains_disk(&self, p: DVec2, radius: f64) -> bool {
        p.x - radius >= self.min.x
            && p.x + radius <= self.max.x
            && p.y - radius >= self.min.y
            && p.y + radius <= self.max.y
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub robots: Vec<AgentBody>,
    pub pedestrians: Vec<Pedestrian>,
    pub obstacles: Vec<StaticObstacle>,
    /// `None` means an unbounded plane.
    pub bounds: Option<Bounds>,
    pub time: f64,
}

impl WorldState {
    pub fn empty(bounds: Option<Bounds>) -> Self {
        Self {
            robots: Vec::new(),
            pedestrians: Vec::new(),
            obstacles: Vec::new(),
            bounds,
            time: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollisionReport {
    pub collided: bool,
    /// Surface-to-surface distance to the closest pedestrian, clamped at zero.
    /// `f64::INFINITY` when there are no pedestrians.
    pub d_min: f64,
}

fn disks_overlap(a: DVec2, ra: f64, b: DVec2, rb: f64) -> bool {
    (a - b).length() < ra + rb
}

/// Collision flag and pedestrian clearance for robot `robot_index`.
pub fn detect_collisions(world: &WorldState, robot_index: usize) -> CollisionReport {
    let robot = &world.robots[robot_index];
    let p = robot.position();
    let r = robot.radius;

    let mut collided = false;
    let mut d_min = f64::INFINITY;

    for ped in &world.pedestrians {
        let c = ped.body.position();
        let gap = (p - c).length() - r - ped.body.radius;
        d_min = d_min.min(gap.max(0.0));
        if gap < 0.0 {
            collided = true;
        }
        for leg in ped.leg_disks() {
            if disks_overlap(p, r, leg.center, leg.radius) {
                collided = true;
            }
        }
    }

    for (j, other) in world.robots.iter().enumerate() {
        if j != robot_index && disks_overlap(p, r, other.position(), other.radius) {
            collided = true;
        }
    }

    if world.obstacles.iter().any(|o| o.distance(p) < r) {
        collided = true;
    }

    if let Some(bounds) = world.bounds {
        if !bounds.contains_disk(p, r) {
            collided = true;
        }
    }

    CollisionReport { collided, d_min }
}

/// Smallest `t >= 0` with `origin + t * dir` on the circle. `dir` must be unit length.
///
/// A ray starting inside the circle reports zero. Tangent rays count as hits.
pub fn ray_circle(origin: DVec2, dir: DVec2, center: DVec2, radius: f64) -> Option<f64> {
    let oc = center - origin;
    let c = oc.length_squared() - radius * radius;
    if c <= 0.0 {
        return Some(0.0);
    }
    let b = oc.dot(dir);
    if b < 0.0 {
        return None;
    }
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    Some(b - disc.sqrt())
}

/// Slab test against an axis-aligned box; zero when the origin is inside.
pub fn ray_aabb(origin: DVec2, dir: DVec2, min: DVec2, max: DVec2) -> Option<f64> {
    let mut t_enter = f64::NEG_INFINITY;
    let mut t_exit = f64::INFINITY;
    for axis in 0..2 {
        let (o, d, lo, hi) = (origin[axis], dir[axis], min[axis], max[axis]);
        if d == 0.0 {
            if o < lo || o > hi {
                return None;
            }
            continue;
        }
        let t1 = (lo - o) / d;
        let t2 = (hi - o) / d;
        t_enter = t_enter.max(t1.min(t2));
        t_exit = t_exit.min(t1.max(t2));
    }
    if t_exit < t_enter || t_exit < 0.0 {
        return None;
    }
    Some(t_enter.max(0.0))
}

/// Distance at which a ray from inside the arena reaches a wall.
fn ray_exit_bounds(origin: DVec2, dir: DVec2, bounds: &Bounds) -> f64 {
    let mut t = f64::INFINITY;
    for axis in 0..2 {
        let d = dir[axis];
        if d > 0.0 {
            t = t.min((bounds.max[axis] - origin[axis]) / d);
        } else if d < 0.0 {
            t = t.min((bounds.min[axis] - origin[axis]) / d);
        }
    }
    t.max(0.0)
}

/// Range to the first obstacle, pedestrian leg, other robot, or arena wall
/// along `angle` (world frame). `ignore_robot` excludes the sensing robot's
/// own body. Never exceeds `max_range`.
pub fn raycast(
    world: &WorldState,
    ignore_robot: Option<usize>,
    origin: DVec2,
    angle: f64,
    max_range: f64,
) -> f64 {
    let dir = DVec2::new(angle.cos(), angle.sin());
    let mut best = max_range;

    for obstacle in &world.obstacles {
        let hit = match *obstacle {
            StaticObstacle::Circle { center, radius } => ray_circle(origin, dir, center, radius),
            StaticObstacle::Rect {
                center,
                half_extents,
            } => ray_aabb(origin, dir, center - half_extents, center + half_extents),
        };
        if let Some(t) = hit {
            best = best.min(t);
        }
    }
    for ped in &world.pedestrians {
        for leg in ped.leg_disks() {
            if let Some(t) = ray_circle(origin, dir, leg.center, leg.radius) {
                best = best.min(t);
            }
        }
    }
    for (j, robot) in world.robots.iter().enumerate() {
        if Some(j) == ignore_robot {
            continue;
        }
        if let Some(t) = ray_circle(origin, dir, robot.position(), robot.radius) {
            best = best.min(t);
        }
    }
    if let Some(bounds) = &world.bounds {
        best = best.min(ray_exit_bounds(origin, dir, bounds));
    }
    best
}
