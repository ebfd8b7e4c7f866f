//! Egocentric observation maps.
//!
//! Both maps cover a 6 m x 6 m window centered on the robot at 0.125 m
//! resolution (48 x 48 cells). Column index grows along the robot's heading
//! (+x), row index grows to the robot's left (+y). The robot sits on the
//! corner shared by cells (23, 23), (23, 24), (24, 23) and (24, 24).

use std::f64::consts::PI;
use std::fmt::Write as _;

use glam::DVec2;
use serde::{Deserialize, Serialize};

use crate::pedestrians::MAX_PEDESTRIAN_SPEED;
use crate::world::{normalize_angle, raycast, Pose2D, WorldState};

pub const MAP_CELLS: usize = 48;
pub const MAP_RESOLUTION: f64 = 0.125;
pub const MAP_EXTENT: f64 = MAP_CELLS as f64 * MAP_RESOLUTION;
const HALF_EXTENT: f64 = MAP_EXTENT / 2.0;
/// Number of input channels in the packed observation tensor.
pub const OBS_CHANNELS: usize = 4;
/// Goal coordinates are divided by this before entering the network.
pub const GOAL_POSITION_SCALE: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LidarConfig {
    pub beams: usize,
    /// Total field of view (rad), centered on the heading.
    pub fov: f64,
    pub max_range: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            beams: 720,
            fov: 270f64.to_radians(),
            max_range: 6.0,
        }
    }
}

impl LidarConfig {
    /// Beam angle relative to the heading; the first and last beams sit on the FOV edges.
    pub fn beam_angle(&self, k: usize) -> f64 {
        if self.beams <= 1 {
            return 0.0;
        }
        -self.fov / 2.0 + self.fov * k as f64 / (self.beams - 1) as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SensorCell {
    Obstacle,
    Free,
    Unknown,
    Footprint,
}

impl SensorCell {
    /// Scalar fed to the network.
    pub fn encoding(self) -> f32 {
        match self {
            SensorCell::Obstacle => 0.0,
            SensorCell::Footprint => 0.25,
            SensorCell::Unknown => 0.5,
            SensorCell::Free => 1.0,
        }
    }

    /// 8-bit gray level used in image dumps: `round(encoding * 255)`.
    pub fn gray(self) -> u8 {
        (self.encoding() * 255.0).round() as u8
    }

    pub fn symbol(self) -> char {
        match self {
            SensorCell::Obstacle => '#',
            SensorCell::Free => '.',
            SensorCell::Unknown => '?',
            SensorCell::Footprint => 'R',
        }
    }
}

/// Cell containing a robot-frame point, if it lies inside the window.
pub fn cell_of(local: DVec2) -> Option<(usize, usize)> {
    let col = ((local.x + HALF_EXTENT) / MAP_RESOLUTION).floor();
    let row = ((local.y + HALF_EXTENT) / MAP_RESOLUTION).floor();
    let n = MAP_CELLS as f64;
    (col >= 0.0 && row >= 0.0 && col < n && row < n).then_some((row as usize, col as usize))
}

/// Robot-frame coordinates of a cell center.
pub fn cell_center(row: usize, col: usize) -> DVec2 {
    DVec2::new(
        -HALF_EXTENT + (col as f64 + 0.5) * MAP_RESOLUTION,
        -HALF_EXTENT + (row as f64 + 0.5) * MAP_RESOLUTION,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorMap {
    cells: Vec<SensorCell>,
}

impl Default for SensorMap {
    fn default() -> Self {
        Self {
            cells: vec![SensorCell::Unknown; MAP_CELLS * MAP_CELLS],
        }
    }
}

impl SensorMap {
    pub fn get(&self, row: usize, col: usize) -> SensorCell {
        self.cells[row * MAP_CELLS + col]
    }

    fn set(&mut self, row: usize, col: usize, cell: SensorCell) {
        self.cells[row * MAP_CELLS + col] = cell;
    }

    pub fn cells(&self) -> &[SensorCell] {
        &self.cells
    }

    pub fn count(&self, kind: SensorCell) -> usize {
        self.cells.iter().filter(|&&c| c == kind).count()
    }

    /// One line per row, top line = leftmost row (largest +y), so the text
    /// reads as a top-down view with the robot facing right.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(MAP_CELLS * (MAP_CELLS + 1));
        for row in (0..MAP_CELLS).rev() {
            for col in 0..MAP_CELLS {
                out.push(self.get(row, col).symbol());
            }
            out.push('\n');
        }
        out
    }

    /// Binary PGM (P5), same orientation as [`SensorMap::to_text`].
    pub fn to_pgm(&self) -> Vec<u8> {
        pgm(|row, col| self.get(row, col).gray())
    }
}

fn pgm(pixel: impl Fn(usize, usize) -> u8) -> Vec<u8> {
    let mut out = format!("P5\n{MAP_CELLS} {MAP_CELLS}\n255\n").into_bytes();
    for row in (0..MAP_CELLS).rev() {
        for col in 0..MAP_CELLS {
            out.push(pixel(row, col));
        }
    }
    out
}

/// Walks the cells crossed by the segment `start -> end` (grid units),
/// calling `visit` on each in-window cell in order. Stops once the segment
/// leaves the window.
fn traverse(start: DVec2, end: DVec2, mut visit: impl FnMut(usize, usize, bool)) {
    let n = MAP_CELLS as i64;
    let mut cx = start.x.floor() as i64;
    let mut cy = start.y.floor() as i64;
    let end_cx = end.x.floor() as i64;
    let end_cy = end.y.floor() as i64;
    let d = end - start;

    let axis = |s: f64, dd: f64, c: i64| -> (i64, f64, f64) {
        if dd > 0.0 {
            (1, ((c + 1) as f64 - s) / dd, 1.0 / dd)
        } else if dd < 0.0 {
            (-1, (c as f64 - s) / dd, -1.0 / dd)
        } else {
            (0, f64::INFINITY, f64::INFINITY)
        }
    };
    let (step_x, mut t_max_x, t_delta_x) = axis(start.x, d.x, cx);
    let (step_y, mut t_max_y, t_delta_y) = axis(start.y, d.y, cy);

    for _ in 0..(4 * MAP_CELLS) {
        let inside = (0..n).contains(&cx) && (0..n).contains(&cy);
        let is_end = cx == end_cx && cy == end_cy;
        if !inside {
            // Rays start inside the window and cannot re-enter it.
            return;
        }
        visit(cy as usize, cx as usize, is_end);
        if is_end {
            return;
        }
        if t_max_x < t_max_y {
            if t_max_x > 1.0 {
                return;
            }
            cx += step_x;
            t_max_x += t_delta_x;
        } else {
            if t_max_y > 1.0 {
                return;
            }
            cy += step_y;
            t_max_y += t_delta_y;
        }
    }
}

/// Simulated lidar scan rasterized into the robot's sensor map.
pub fn build_sensor_map(world: &WorldState, robot_index: usize, lidar: &LidarConfig) -> SensorMap {
    let robot = &world.robots[robot_index];
    let pose = robot.pose;
    let origin = pose.position();
    let mut map = SensorMap::default();
    let to_grid = |p: DVec2| (p + DVec2::splat(HALF_EXTENT)) / MAP_RESOLUTION;
    let grid_origin = to_grid(DVec2::ZERO);

    for k in 0..lidar.beams {
        let rel = lidar.beam_angle(k);
        let range = raycast(world, Some(robot_index), origin, pose.theta + rel, lidar.max_range);
        let hit = range < lidar.max_range;
        let end = to_grid(DVec2::from_angle(rel) * range);
        traverse(grid_origin, end, |row, col, is_end| {
            if is_end && hit {
                map.set(row, col, SensorCell::Obstacle);
            } else if map.get(row, col) == SensorCell::Unknown {
                map.set(row, col, SensorCell::Free);
            }
        });
    }

    // Footprint: every cell whose center lies within the robot disk.
    let reach = (robot.radius / MAP_RESOLUTION).ceil() as usize + 1;
    let lo = (MAP_CELLS / 2).saturating_sub(reach);
    let hi = (MAP_CELLS / 2 + reach).min(MAP_CELLS);
    for row in lo..hi {
        for col in lo..hi {
            if cell_center(row, col).length() <= robot.radius {
                map.set(row, col, SensorCell::Footprint);
            }
        }
    }
    map
}

/// Pedestrian occupancy and robot-frame velocity, one value per cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PedestrianMap {
    pub occupancy: Vec<f64>,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
}

impl Default for PedestrianMap {
    fn default() -> Self {
        let n = MAP_CELLS * MAP_CELLS;
        Self {
            occupancy: vec![0.0; n],
            vx: vec![0.0; n],
            vy: vec![0.0; n],
        }
    }
}

impl PedestrianMap {
    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o > 0.0).count()
    }

    pub fn is_zero(&self) -> bool {
        self.occupancy
            .iter()
            .chain(&self.vx)
            .chain(&self.vy)
            .all(|&x| x == 0.0)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for row in (0..MAP_CELLS).rev() {
            for col in 0..MAP_CELLS {
                out.push(if self.occupancy[row * MAP_CELLS + col] > 0.0 {
                    'P'
                } else {
                    '.'
                });
            }
            out.push('\n');
        }
        out
    }

    /// Occupancy as a PGM: occupied 255, empty 0.
    pub fn to_pgm(&self) -> Vec<u8> {
        pgm(|row, col| {
            if self.occupancy[row * MAP_CELLS + col] > 0.0 {
                255
            } else {
                0
            }
        })
    }
}

/// Rasterizes every pedestrian body disk overlapping the window. A cell is
/// covered when its center lies in the disk. Where disks overlap, the
/// pedestrian nearest to the robot owns the cell.
pub fn build_pedestrian_map(world: &WorldState, robot_index: usize) -> PedestrianMap {
    let pose = world.robots[robot_index].pose;
    let mut map = PedestrianMap::default();
    let mut owner_distance = vec![f64::INFINITY; MAP_CELLS * MAP_CELLS];

    for ped in &world.pedestrians {
        let center = pose.to_local(ped.body.position());
        let velocity = pose.rotate_to_local(ped.body.velocity);
        let r = ped.body.radius;
        let distance = center.length();
        let to_index = |x: f64| ((x + HALF_EXTENT) / MAP_RESOLUTION).floor();
        let max_index = (MAP_CELLS - 1) as f64;
        let col_lo = to_index(center.x - r).max(0.0);
        let col_hi = to_index(center.x + r).min(max_index);
        let row_lo = to_index(center.y - r).max(0.0);
        let row_hi = to_index(center.y + r).min(max_index);
        if col_lo > col_hi || row_lo > row_hi {
            continue;
        }
        for row in row_lo as usize..=row_hi as usize {
            for col in col_lo as usize..=col_hi as usize {
                if cell_center(row, col).distance_squared(center) > r * r {
                    continue;
                }
                let i = row * MAP_CELLS + col;
                if distance < owner_distance[i] {
                    owner_distance[i] = distance;
                    map.occupancy[i] = 1.0;
                    map.vx[i] = velocity.x;
                    map.vy[i] = velocity.y;
                }
            }
        }
    }
    map
}

/// Goal pose expressed in the robot frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetPose {
    pub x: f64,
    pub y: f64,
    pub alpha: f64,
}

pub fn target_in_robot_frame(robot: &Pose2D, goal: &Pose2D) -> TargetPose {
    let local = robot.to_local(goal.position());
    TargetPose {
        x: local.x,
        y: local.y,
        alpha: normalize_angle(goal.theta - robot.theta),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationBundle {
    pub sensor_map: SensorMap,
    pub pedestrian_map: PedestrianMap,
    pub target: TargetPose,
}

impl ObservationBundle {
    /// Network input: a `4 x 48 x 48` channel-major map tensor plus the
    /// scaled goal vector.
    ///
    /// Channel 0 is the sensor encoding, channel 1 pedestrian occupancy and
    /// channels 2-3 the pedestrian velocity divided by the maximum
    /// pedestrian speed, so every map entry lies in `[-1, 1]`.
    pub fn to_tensor(&self) -> (Vec<f32>, [f32; 3]) {
        let n = MAP_CELLS * MAP_CELLS;
        let mut maps = Vec::with_capacity(OBS_CHANNELS * n);
        maps.extend(self.sensor_map.cells().iter().map(|c| c.encoding()));
        maps.extend(self.pedestrian_map.occupancy.iter().map(|&o| o as f32));
        let scale = |v: f64| (v / MAX_PEDESTRIAN_SPEED).clamp(-1.0, 1.0) as f32;
        maps.extend(self.pedestrian_map.vx.iter().map(|&v| scale(v)));
        maps.extend(self.pedestrian_map.vy.iter().map(|&v| scale(v)));
        let goal = [
            (self.target.x / GOAL_POSITION_SCALE) as f32,
            (self.target.y / GOAL_POSITION_SCALE) as f32,
            (self.target.alpha / PI) as f32,
        ];
        (maps, goal)
    }

    /// Human-readable dump of both maps and the target.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "target {:.6} {:.6} {:.6}",
            self.target.x, self.target.y, self.target.alpha
        );
        out.push_str("sensor\n");
        out.push_str(&self.sensor_map.to_text());
        out.push_str("pedestrians\n");
        out.push_str(&self.pedestrian_map.to_text());
        out
    }
}

pub fn build_observation(
    world: &WorldState,
    robot_index: usize,
    goal: &Pose2D,
    lidar: &LidarConfig,
    use_pedestrian_map: bool,
) -> ObservationBundle {
    let pose = world.robots[robot_index].pose;
    ObservationBundle {
        sensor_map: build_sensor_map(world, robot_index, lidar),
        pedestrian_map: if use_pedestrian_map {
            build_pedestrian_map(world, robot_index)
        } else {
            PedestrianMap::default()
        },
        target: target_in_robot_frame(&pose, goal),
    }
}
