//! Optimal reciprocal collision avoidance in the plane.
//!
//! Follows the RVO2 reference algorithm: every neighbor and every nearby
//! obstacle edge contributes one half-plane of permitted velocities, and an
//! incremental 2D linear program picks the permitted velocity closest to the
//! preferred one. When the half-planes have no common point inside the speed
//! disk, a 3D relaxation minimizes the largest violation of the agent lines
//! while keeping the obstacle lines hard.

use glam::DVec2;
use serde::{Deserialize, Serialize};

use crate::world::{AgentBody, StaticObstacle};

const RVO_EPSILON: f64 = 1e-5;
/// Circles enter the solver as circumscribed polygons with this many edges.
const CIRCLE_SEGMENTS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrcaParams {
    pub neighbor_dist: f64,
    pub time_horizon_agents: f64,
    pub time_horizon_obstacles: f64,
    pub max_speed: f64,
}

impl Default for OrcaParams {
    fn default() -> Self {
        Self {
            neighbor_dist: 5.0,
            time_horizon_agents: 5.0,
            time_horizon_obstacles: 2.0,
            max_speed: super::MAX_PEDESTRIAN_SPEED,
        }
    }
}

/// Directed line in velocity space. Permitted velocities lie to its left.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrcaLine {
    pub point: DVec2,
    pub direction: DVec2,
}

impl OrcaLine {
    /// Positive when `v` is on the forbidden side, by that distance.
    pub fn violation(&self, v: DVec2) -> f64 {
        det(self.direction, self.point - v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrcaSolution {
    pub velocity: DVec2,
    /// False when the constraints were infeasible and the relaxed program was used.
    pub feasible: bool,
}

fn det(a: DVec2, b: DVec2) -> f64 {
    a.x * b.y - a.y * b.x
}

fn normalize_or(v: DVec2, fallback: DVec2) -> DVec2 {
    let len = v.length();
    if len > 0.0 {
        v / len
    } else {
        fallback
    }
}

#[derive(Clone, Copy, Debug)]
struct ObstacleVertex {
    point: DVec2,
    unit_dir: DVec2,
    is_convex: bool,
    next: usize,
    prev: usize,
}

fn obstacle_vertices(obstacles: &[StaticObstacle]) -> Vec<ObstacleVertex> {
    let mut out = Vec::new();
    for obstacle in obstacles {
        let poly = obstacle.polygon(CIRCLE_SEGMENTS);
        let base = out.len();
        let n = poly.len();
        for i in 0..n {
            let next = (i + 1) % n;
            let prev = (i + n - 1) % n;
            let is_convex = det(poly[i] - poly[prev], poly[next] - poly[i]) >= 0.0;
            out.push(ObstacleVertex {
                point: poly[i],
                unit_dir: (poly[next] - poly[i]).normalize(),
                is_convex,
                next: base + next,
                prev: base + prev,
            });
        }
    }
    out
}

fn dist_sq_point_segment(a: DVec2, b: DVec2, c: DVec2) -> f64 {
    let r = (c - a).dot(b - a) / (b - a).length_squared();
    if r < 0.0 {
        (c - a).length_squared()
    } else if r > 1.0 {
        (c - b).length_squared()
    } else {
        (c - (a + r * (b - a))).length_squared()
    }
}

/// Builds the constraint lines for `agent`. Obstacle lines come first; the
/// returned count says how many of them there are.
pub fn orca_lines(
    agent: &AgentBody,
    neighbors: &[AgentBody],
    obstacles: &[StaticObstacle],
    params: &OrcaParams,
    dt: f64,
) -> (Vec<OrcaLine>, usize) {
    let position = agent.position();
    let velocity = agent.velocity;
    let radius = agent.radius;
    let mut lines = Vec::new();

    // Obstacle edges the agent faces from outside, nearest first.
    let vertices = obstacle_vertices(obstacles);
    let range = params.time_horizon_obstacles * params.max_speed + radius;
    let mut edges: Vec<(f64, usize)> = vertices
        .iter()
        .enumerate()
        .filter_map(|(i, v1)| {
            let v2 = &vertices[v1.next];
            let left_of = det(v1.point - position, v2.point - v1.point);
            if left_of >= 0.0 {
                return None;
            }
            let d = dist_sq_point_segment(v1.point, v2.point, position);
            (d < range * range).then_some((d, i))
        })
        .collect();
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let inv_th_obst = 1.0 / params.time_horizon_obstacles;
    for &(_, first) in &edges {
        let mut o1 = first;
        let mut o2 = vertices[o1].next;
        let rel1 = vertices[o1].point - position;
        let rel2 = vertices[o2].point - position;

        let already_covered = lines.iter().any(|l: &OrcaLine| {
            det(inv_th_obst * rel1 - l.point, l.direction) - inv_th_obst * radius >= -RVO_EPSILON
                && det(inv_th_obst * rel2 - l.point, l.direction) - inv_th_obst * radius
                    >= -RVO_EPSILON
        });
        if already_covered {
            continue;
        }

        let dist_sq1 = rel1.length_squared();
        let dist_sq2 = rel2.length_squared();
        let radius_sq = radius * radius;
        let obstacle_vector = vertices[o2].point - vertices[o1].point;
        let s = (-rel1).dot(obstacle_vector) / obstacle_vector.length_squared();
        let dist_sq_line = (-rel1 - s * obstacle_vector).length_squared();

        if s < 0.0 && dist_sq1 <= radius_sq {
            // Touching the left vertex.
            if vertices[o1].is_convex {
                lines.push(OrcaLine {
                    point: DVec2::ZERO,
                    direction: DVec2::new(-rel1.y, rel1.x).normalize(),
                });
            }
            continue;
        } else if s > 1.0 && dist_sq2 <= radius_sq {
            // Touching the right vertex; the next edge handles it unless convex here.
            if vertices[o2].is_convex && det(rel2, vertices[o2].unit_dir) >= 0.0 {
                lines.push(OrcaLine {
                    point: DVec2::ZERO,
                    direction: DVec2::new(-rel2.y, rel2.x).normalize(),
                });
            }
            continue;
        } else if (0.0..1.0).contains(&s) && dist_sq_line <= radius_sq {
            // Touching the edge itself.
            lines.push(OrcaLine {
                point: DVec2::ZERO,
                direction: -vertices[o1].unit_dir,
            });
            continue;
        }

        let left_leg_from = |rel: DVec2, d_sq: f64| {
            let leg = (d_sq - radius_sq).sqrt();
            DVec2::new(rel.x * leg - rel.y * radius, rel.x * radius + rel.y * leg) / d_sq
        };
        let right_leg_from = |rel: DVec2, d_sq: f64| {
            let leg = (d_sq - radius_sq).sqrt();
            DVec2::new(rel.x * leg + rel.y * radius, -rel.x * radius + rel.y * leg) / d_sq
        };

        let mut left_leg;
        let mut right_leg;
        if s < 0.0 && dist_sq_line <= radius_sq {
            // Seen obliquely: the left vertex defines the whole obstacle.
            if !vertices[o1].is_convex {
                continue;
            }
            o2 = o1;
            left_leg = left_leg_from(rel1, dist_sq1);
            right_leg = right_leg_from(rel1, dist_sq1);
        } else if s > 1.0 && dist_sq_line <= radius_sq {
            if !vertices[o2].is_convex {
                continue;
            }
            o1 = o2;
            left_leg = left_leg_from(rel2, dist_sq2);
            right_leg = right_leg_from(rel2, dist_sq2);
        } else {
            left_leg = if vertices[o1].is_convex {
                left_leg_from(rel1, dist_sq1)
            } else {
                -vertices[o1].unit_dir
            };
            right_leg = if vertices[o2].is_convex {
                right_leg_from(rel2, dist_sq2)
            } else {
                vertices[o1].unit_dir
            };
        }

        // A leg pointing into the neighboring edge is replaced by that edge.
        let left_neighbor = vertices[o1].prev;
        let mut left_foreign = false;
        let mut right_foreign = false;
        if vertices[o1].is_convex && det(left_leg, -vertices[left_neighbor].unit_dir) >= 0.0 {
            left_leg = -vertices[left_neighbor].unit_dir;
            left_foreign = true;
        }
        if vertices[o2].is_convex && det(right_leg, vertices[o2].unit_dir) <= 0.0 {
            right_leg = vertices[o2].unit_dir;
            right_foreign = true;
        }

        let left_cutoff = inv_th_obst * (vertices[o1].point - position);
        let right_cutoff = inv_th_obst * (vertices[o2].point - position);
        let cutoff_vec = right_cutoff - left_cutoff;
        let same_vertex = o1 == o2;

        let t = if same_vertex {
            0.5
        } else {
            (velocity - left_cutoff).dot(cutoff_vec) / cutoff_vec.length_squared()
        };
        let t_left = (velocity - left_cutoff).dot(left_leg);
        let t_right = (velocity - right_cutoff).dot(right_leg);

        if (t < 0.0 && t_left < 0.0) || (same_vertex && t_left < 0.0 && t_right < 0.0) {
            let unit_w = normalize_or(velocity - left_cutoff, -left_cutoff.normalize_or_zero());
            lines.push(OrcaLine {
                direction: DVec2::new(unit_w.y, -unit_w.x),
                point: left_cutoff + radius * inv_th_obst * unit_w,
            });
            continue;
        } else if t > 1.0 && t_right < 0.0 {
            let unit_w = normalize_or(velocity - right_cutoff, -right_cutoff.normalize_or_zero());
            lines.push(OrcaLine {
                direction: DVec2::new(unit_w.y, -unit_w.x),
                point: right_cutoff + radius * inv_th_obst * unit_w,
            });
            continue;
        }

        let dist_sq_cutoff = if t < 0.0 || t > 1.0 || same_vertex {
            f64::INFINITY
        } else {
            (velocity - (left_cutoff + t * cutoff_vec)).length_squared()
        };
        let dist_sq_left = if t_left < 0.0 {
            f64::INFINITY
        } else {
            (velocity - (left_cutoff + t_left * left_leg)).length_squared()
        };
        let dist_sq_right = if t_right < 0.0 {
            f64::INFINITY
        } else {
            (velocity - (right_cutoff + t_right * right_leg)).length_squared()
        };

        if dist_sq_cutoff <= dist_sq_left && dist_sq_cutoff <= dist_sq_right {
            let direction = -vertices[o1].unit_dir;
            lines.push(OrcaLine {
                direction,
                point: left_cutoff + radius * inv_th_obst * DVec2::new(-direction.y, direction.x),
            });
        } else if dist_sq_left <= dist_sq_right {
            if left_foreign {
                continue;
            }
            lines.push(OrcaLine {
                direction: left_leg,
                point: left_cutoff + radius * inv_th_obst * DVec2::new(-left_leg.y, left_leg.x),
            });
        } else {
            if right_foreign {
                continue;
            }
            let direction = -right_leg;
            lines.push(OrcaLine {
                direction,
                point: right_cutoff + radius * inv_th_obst * DVec2::new(-direction.y, direction.x),
            });
        }
    }

    let num_obstacle_lines = lines.len();
    let inv_th = 1.0 / params.time_horizon_agents;

    for other in neighbors {
        let relative_position = other.position() - position;
        let dist_sq = relative_position.length_squared();
        if dist_sq > params.neighbor_dist * params.neighbor_dist {
            continue;
        }
        let relative_velocity = velocity - other.velocity;
        let combined_radius = radius + other.radius;
        let combined_radius_sq = combined_radius * combined_radius;

        let direction;
        let u;
        if dist_sq > combined_radius_sq {
            let w = relative_velocity - inv_th * relative_position;
            let w_length_sq = w.length_squared();
            let dot1 = w.dot(relative_position);
            if dot1 < 0.0 && dot1 * dot1 > combined_radius_sq * w_length_sq {
                // Project on the cut-off circle.
                let w_length = w_length_sq.sqrt();
                let unit_w = w / w_length;
                direction = DVec2::new(unit_w.y, -unit_w.x);
                u = (combined_radius * inv_th - w_length) * unit_w;
            } else {
                // Project on the nearer leg of the cone.
                let leg = (dist_sq - combined_radius_sq).sqrt();
                let rp = relative_position;
                direction = if det(rp, w) > 0.0 {
                    DVec2::new(
                        rp.x * leg - rp.y * combined_radius,
                        rp.x * combined_radius + rp.y * leg,
                    ) / dist_sq
                } else {
                    -DVec2::new(
                        rp.x * leg + rp.y * combined_radius,
                        -rp.x * combined_radius + rp.y * leg,
                    ) / dist_sq
                };
                u = relative_velocity.dot(direction) * direction - relative_velocity;
            }
        } else {
            // Already overlapping: resolve within one time step.
            let inv_dt = 1.0 / dt;
            let w = relative_velocity - inv_dt * relative_position;
            let w_length = w.length();
            let unit_w = normalize_or(w, -normalize_or(relative_position, DVec2::X));
            direction = DVec2::new(unit_w.y, -unit_w.x);
            u = (combined_radius * inv_dt - w_length) * unit_w;
        }
        lines.push(OrcaLine {
            point: velocity + 0.5 * u,
            direction,
        });
    }

    (lines, num_obstacle_lines)
}

/// Optimum along line `line_no` subject to earlier lines and the speed disk.
fn linear_program1(
    lines: &[OrcaLine],
    line_no: usize,
    radius: f64,
    opt_velocity: DVec2,
    direction_opt: bool,
) -> Option<DVec2> {
    let line = lines[line_no];
    let dot = line.point.dot(line.direction);
    let discriminant = dot * dot + radius * radius - line.point.length_squared();
    if discriminant < 0.0 {
        return None;
    }
    let sqrt_disc = discriminant.sqrt();
    let mut t_left = -dot - sqrt_disc;
    let mut t_right = -dot + sqrt_disc;

    for prior in &lines[..line_no] {
        let denominator = det(line.direction, prior.direction);
        let numerator = det(prior.direction, line.point - prior.point);
        if denominator.abs() <= RVO_EPSILON {
            if numerator < 0.0 {
                return None;
            }
            continue;
        }
        let t = numerator / denominator;
        if denominator >= 0.0 {
            t_right = t_right.min(t);
        } else {
            t_left = t_left.max(t);
        }
        if t_left > t_right {
            return None;
        }
    }

    let t = if direction_opt {
        if opt_velocity.dot(line.direction) > 0.0 {
            t_right
        } else {
            t_left
        }
    } else {
        line.direction
            .dot(opt_velocity - line.point)
            .clamp(t_left, t_right)
    };
    Some(line.point + t * line.direction)
}

/// Returns the result and the index of the first line that could not be
/// satisfied (`lines.len()` on success).
fn linear_program2(
    lines: &[OrcaLine],
    radius: f64,
    opt_velocity: DVec2,
    direction_opt: bool,
) -> (DVec2, usize) {
    let mut result = if direction_opt {
        opt_velocity * radius
    } else if opt_velocity.length_squared() > radius * radius {
        opt_velocity.normalize() * radius
    } else {
        opt_velocity
    };
    for i in 0..lines.len() {
        if lines[i].violation(result) > 0.0 {
            match linear_program1(lines, i, radius, opt_velocity, direction_opt) {
                Some(r) => result = r,
                None => return (result, i),
            }
        }
    }
    (result, lines.len())
}

fn linear_program3(
    lines: &[OrcaLine],
    num_obst_lines: usize,
    begin_line: usize,
    radius: f64,
    mut result: DVec2,
) -> DVec2 {
    let mut distance = 0.0;
    for i in begin_line..lines.len() {
        if lines[i].violation(result) > distance {
            let mut projected: Vec<OrcaLine> = lines[..num_obst_lines].to_vec();
            for j in num_obst_lines..i {
                let determinant = det(lines[i].direction, lines[j].direction);
                let point = if determinant.abs() <= RVO_EPSILON {
                    if lines[i].direction.dot(lines[j].direction) > 0.0 {
                        continue;
                    }
                    0.5 * (lines[i].point + lines[j].point)
                } else {
                    lines[i].point
                        + (det(lines[j].direction, lines[i].point - lines[j].point) / determinant)
                            * lines[i].direction
                };
                projected.push(OrcaLine {
                    point,
                    direction: (lines[j].direction - lines[i].direction).normalize(),
                });
            }
            let previous = result;
            let opt = DVec2::new(-lines[i].direction.y, lines[i].direction.x);
            let (r, fail) = linear_program2(&projected, radius, opt, true);
            // Failure here can only come from rounding; keep the previous answer.
            result = if fail < projected.len() { previous } else { r };
            distance = lines[i].violation(result);
        }
    }
    result
}

/// Velocity closest to `preferred` within the speed disk satisfying every line.
pub fn solve_orca(
    lines: &[OrcaLine],
    num_obstacle_lines: usize,
    max_speed: f64,
    preferred: DVec2,
) -> OrcaSolution {
    let (velocity, fail) = linear_program2(lines, max_speed, preferred, false);
    if fail < lines.len() {
        OrcaSolution {
            velocity: linear_program3(lines, num_obstacle_lines, fail, max_speed, velocity),
            feasible: false,
        }
    } else {
        OrcaSolution {
            velocity,
            feasible: true,
        }
    }
}

/// New collision-avoiding velocity for `agent`, which currently moves with
/// `agent.velocity` and would like to move with `preferred`.
pub fn orca_velocity(
    agent: &AgentBody,
    preferred: DVec2,
    neighbors: &[AgentBody],
    obstacles: &[StaticObstacle],
    params: &OrcaParams,
    dt: f64,
) -> OrcaSolution {
    let (lines, num_obst) = orca_lines(agent, neighbors, obstacles, params, dt);
    let mut sol = solve_orca(&lines, num_obst, params.max_speed, preferred);
    // Guard the speed cap against rounding in the relaxed program.
    let speed = sol.velocity.length();
    if speed > params.max_speed {
        sol.velocity *= params.max_speed / speed;
    }
    sol
}
