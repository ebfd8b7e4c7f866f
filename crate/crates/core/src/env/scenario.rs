//! Seeded scenario generation.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use glam::DVec2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ParseError;
use crate::pedestrians::{Pedestrian, Strategy};
use crate::world::{AgentBody, Bounds, Pose2D, StaticObstacle, WorldState};

/// Total placement draws before a scenario is thrown away and redrawn.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;
/// Minimum free gap between any two placed bodies (m).
pub const PLACEMENT_CLEARANCE: f64 = 0.1;
/// Minimum robot start-to-goal distance in the random scenario (m).
pub const MIN_GOAL_DISTANCE: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// Two robots, four pedestrians and four rectangular blocks at random spots.
    Random,
    /// Two robots and four pedestrians on a circle, each heading for its antipode.
    Circular,
    /// Five robots on a circle and no pedestrians.
    PpoCircular,
    /// One robot in an empty arena.
    Solo,
}

impl ScenarioKind {
    pub fn robot_count(self) -> usize {
        match self {
            ScenarioKind::Random | ScenarioKind::Circular => 2,
            ScenarioKind::PpoCircular => 5,
            ScenarioKind::Solo => 1,
        }
    }

    pub fn pedestrian_count(self, strategy: Strategy) -> usize {
        match (self, strategy) {
            (_, Strategy::None) => 0,
            (ScenarioKind::Random | ScenarioKind::Circular, _) => 4,
            (ScenarioKind::PpoCircular | ScenarioKind::Solo, _) => 0,
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioKind::Random => "random",
            ScenarioKind::Circular => "circular",
            ScenarioKind::PpoCircular => "ppo-circular",
            ScenarioKind::Solo => "solo",
        })
    }
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(ScenarioKind::Random),
            "circular" => Ok(ScenarioKind::Circular),
            "ppo-circular" | "ppo_circular" => Ok(ScenarioKind::PpoCircular),
            "solo" => Ok(ScenarioKind::Solo),
            other => Err(format!("unknown scenario kind `{other}`")),
        }
    }
}

/// `(kind, strategy, seed)`: everything needed to rebuild an initial world.
///
/// Serialized as one line, e.g. `random orca 42`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub strategy: Strategy,
    pub seed: u64,
}

impl fmt::Display for ScenarioSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.kind, self.strategy, self.seed)
    }
}

impl FromStr for ScenarioSpec {
    type Err = ParseError;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let err = |message: String| ParseError { line: 1, message };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(err(format!(
                "expected `<kind> <strategy> <seed>`, got {} fields",
                fields.len()
            )));
        }
        Ok(ScenarioSpec {
            kind: fields[0].parse().map_err(err)?,
            strategy: fields[1].parse().map_err(err)?,
            seed: fields[2]
                .parse()
                .map_err(|e| err(format!("bad seed `{}`: {e}", fields[2])))?,
        })
    }
}

/// Geometry knobs shared by all generators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioParams {
    pub arena_size: f64,
    pub robot_radius: f64,
    pub pedestrian_radius: f64,
    pub circle_radius_min: f64,
    pub circle_radius_max: f64,
    /// Angular jitter as a fraction of half the even spacing.
    pub circle_jitter: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            arena_size: 12.0,
            robot_radius: crate::world::ROBOT_RADIUS,
            pedestrian_radius: crate::pedestrians::PEDESTRIAN_RADIUS,
            circle_radius_min: 2.5,
            circle_radius_max: 4.5,
            circle_jitter: 0.3,
        }
    }
}

/// Initial world plus one goal per robot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub world: WorldState,
    pub goals: Vec<Pose2D>,
    /// Number of times placement gave up and started over.
    pub regenerations: usize,
}

struct Placer<'a, R: Rng> {
    rng: &'a mut R,
    attempts: usize,
}

impl<R: Rng> Placer<'_, R> {
    /// Draws from `sample` until `accept` holds; `None` once the global budget is spent.
    fn place<T>(
        &mut self,
        mut sample: impl FnMut(&mut R) -> T,
        accept: impl Fn(&T) -> bool,
    ) -> Option<T> {
        while self.attempts < MAX_PLACEMENT_ATTEMPTS {
            self.attempts += 1;
            let candidate = sample(self.rng);
            if accept(&candidate) {
                return Some(candidate);
            }
        }
        None
    }
}

fn rect_gap(a: &StaticObstacle, b: &StaticObstacle) -> f64 {
    match (a, b) {
        (
            StaticObstacle::Rect {
                center: ca,
                half_extents: ha,
            },
            StaticObstacle::Rect {
                center: cb,
                half_extents: hb,
            },
        ) => {
            let d = ((*ca - *cb).abs() - (*ha + *hb)).max(DVec2::ZERO);
            d.length()
        }
        _ => unreachable!("random scenario only places rectangles"),
    }
}

fn disk_clear(p: DVec2, r: f64, disks: &[(DVec2, f64)], obstacles: &[StaticObstacle]) -> bool {
    disks
        .iter()
        .all(|&(q, rq)| p.distance(q) >= r + rq + PLACEMENT_CLEARANCE)
        && obstacles
            .iter()
            .all(|o| o.distance(p) >= r + PLACEMENT_CLEARANCE)
}

fn try_random<R: Rng>(rng: &mut R, strategy: Strategy, params: &ScenarioParams) -> Option<Episode> {
    let half = params.arena_size / 2.0;
    let mut placer = Placer { rng, attempts: 0 };

    let mut obstacles: Vec<StaticObstacle> = Vec::new();
    for _ in 0..4 {
        let existing = obstacles.clone();
        let rect = placer.place(
            |rng| StaticObstacle::Rect {
                center: DVec2::new(
                    rng.random_range(-half + 1.5..half - 1.5),
                    rng.random_range(-half + 1.5..half - 1.5),
                ),
                half_extents: DVec2::new(rng.random_range(0.25..0.75), rng.random_range(0.25..0.75)),
            },
            |r| existing.iter().all(|o| rect_gap(o, r) >= PLACEMENT_CLEARANCE),
        )?;
        obstacles.push(rect);
    }

    let mut start_disks: Vec<(DVec2, f64)> = Vec::new();
    let mut goal_disks: Vec<(DVec2, f64)> = Vec::new();
    let mut robots = Vec::new();
    let mut goals = Vec::new();
    let rr = params.robot_radius;
    let robot_margin = half - rr - 0.4;
    for _ in 0..2 {
        let (s_disks, g_disks) = (start_disks.clone(), goal_disks.clone());
        let (start, goal) = placer.place(
            |rng| {
                (
                    DVec2::new(
                        rng.random_range(-robot_margin..robot_margin),
                        rng.random_range(-robot_margin..robot_margin),
                    ),
                    DVec2::new(
                        rng.random_range(-robot_margin..robot_margin),
                        rng.random_range(-robot_margin..robot_margin),
                    ),
                )
            },
            |(s, g)| {
                s.distance(*g) >= MIN_GOAL_DISTANCE
                    && disk_clear(*s, rr, &s_disks, &obstacles)
                    && disk_clear(*g, rr, &g_disks, &obstacles)
            },
        )?;
        let heading = placer.rng.random_range(-PI..PI);
        let goal_heading = placer.rng.random_range(-PI..PI);
        robots.push(AgentBody::robot(Pose2D::new(start.x, start.y, heading)));
        goals.push(Pose2D::new(goal.x, goal.y, goal_heading));
        start_disks.push((start, rr));
        goal_disks.push((goal, rr));
    }

    let pr = params.pedestrian_radius;
    let ped_margin = half - pr - 0.5;
    let mut pedestrians = Vec::new();
    for id in 0..ScenarioKind::Random.pedestrian_count(strategy) {
        let s_disks = start_disks.clone();
        let (start, goal) = placer.place(
            |rng| {
                (
                    DVec2::new(
                        rng.random_range(-ped_margin..ped_margin),
                        rng.random_range(-ped_margin..ped_margin),
                    ),
                    DVec2::new(
                        rng.random_range(-ped_margin..ped_margin),
                        rng.random_range(-ped_margin..ped_margin),
                    ),
                )
            },
            |(s, g)| {
                s.distance(*g) >= 2.0
                    && disk_clear(*s, pr, &s_disks, &obstacles)
                    && disk_clear(*g, pr, &[], &obstacles)
            },
        )?;
        pedestrians.push(Pedestrian::new(id, start, goal, pr));
        start_disks.push((start, pr));
    }

    Some(Episode {
        world: WorldState {
            robots,
            pedestrians,
            obstacles,
            bounds: Some(Bounds::square(params.arena_size)),
            time: 0.0,
        },
        goals,
        regenerations: 0,
    })
}

/// Two robots, four pedestrians (unless `strategy` is none) and four blocks,
/// all at random non-overlapping spots.
pub fn generate_random_scenario<R: Rng>(
    rng: &mut R,
    strategy: Strategy,
    params: &ScenarioParams,
) -> Episode {
    let mut regenerations = 0;
    loop {
        if let Some(mut ep) = try_random(rng, strategy, params) {
            ep.regenerations = regenerations;
            return ep;
        }
        regenerations += 1;
        log::warn!("random scenario placement exhausted its budget; redrawing");
    }
}

/// Agents evenly spread (with jitter) on a circle of random radius; each
/// agent's goal is the antipodal point.
pub fn generate_circular_scenario<R: Rng>(
    rng: &mut R,
    kind: ScenarioKind,
    strategy: Strategy,
    params: &ScenarioParams,
) -> Episode {
    let n_robots = kind.robot_count();
    let n_peds = kind.pedestrian_count(strategy);
    let n = n_robots + n_peds;
    let radius = rng.random_range(params.circle_radius_min..params.circle_radius_max);
    let base = rng.random_range(0.0..TAU);
    let spacing = TAU / n as f64;
    let max_jitter = params.circle_jitter * spacing / 2.0;

    let mut slots: Vec<usize> = (0..n).collect();
    slots.shuffle(rng);

    let mut positions = Vec::with_capacity(n);
    for k in 0..n {
        let jitter = rng.random_range(-max_jitter..=max_jitter);
        let angle = base + spacing * k as f64 + jitter;
        positions.push(radius * DVec2::from_angle(angle));
    }

    let mut robots = Vec::new();
    let mut goals = Vec::new();
    let mut pedestrians = Vec::new();
    for (i, &slot) in slots.iter().enumerate() {
        let start = positions[slot];
        let goal = -start;
        let heading = (goal - start).to_angle();
        if i < n_robots {
            robots.push(AgentBody::robot(Pose2D::new(start.x, start.y, heading)));
            goals.push(Pose2D::new(goal.x, goal.y, heading));
        } else {
            pedestrians.push(Pedestrian::new(
                pedestrians.len(),
                start,
                goal,
                params.pedestrian_radius,
            ));
        }
    }

    Episode {
        world: WorldState {
            robots,
            pedestrians,
            obstacles: Vec::new(),
            bounds: Some(Bounds::square(params.arena_size)),
            time: 0.0,
        },
        goals,
        regenerations: 0,
    }
}

/// One robot, nothing else. Start and goal are at least 3 m apart.
pub fn generate_solo_scenario<R: Rng>(rng: &mut R, params: &ScenarioParams) -> Episode {
    let margin = params.arena_size / 2.0 - params.robot_radius - 1.0;
    let (start, goal) = loop {
        let s = DVec2::new(rng.random_range(-margin..margin), rng.random_range(-margin..margin));
        let g = DVec2::new(rng.random_range(-margin..margin), rng.random_range(-margin..margin));
        if s.distance(g) >= MIN_GOAL_DISTANCE {
            break (s, g);
        }
    };
    let heading = rng.random_range(-PI..PI);
    let goal_heading = rng.random_range(-PI..PI);
    Episode {
        world: WorldState {
            robots: vec![AgentBody::robot(Pose2D::new(start.x, start.y, heading))],
            pedestrians: Vec::new(),
            obstacles: Vec::new(),
            bounds: Some(Bounds::square(params.arena_size)),
            time: 0.0,
        },
        goals: vec![Pose2D::new(goal.x, goal.y, goal_heading)],
        regenerations: 0,
    }
}

pub fn generate<R: Rng>(
    rng: &mut R,
    kind: ScenarioKind,
    strategy: Strategy,
    params: &ScenarioParams,
) -> Episode {
    match kind {
        ScenarioKind::Random => generate_random_scenario(rng, strategy, params),
        ScenarioKind::Circular | ScenarioKind::PpoCircular => {
            generate_circular_scenario(rng, kind, strategy, params)
        }
        ScenarioKind::Solo => generate_solo_scenario(rng, params),
    }
}

impl ScenarioSpec {
    /// Rebuilds the initial world this spec names.
    pub fn build(&self, params: &ScenarioParams) -> Episode {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        generate(&mut rng, self.kind, self.strategy, params)
    }
}
