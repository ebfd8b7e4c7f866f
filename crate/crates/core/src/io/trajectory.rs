//! Plain-text trajectory files.
//!
//! ```text
//! # crowdnav trajectory v1
//! # columns: tick agent_id kind x y theta v w flags radius phase
//! dt 0.1
//! scenario circular orca 7
//! bounds -6 -6 6 6
//! obstacle circle <cx> <cy> <r>
//! obstacle rect <cx> <cy> <hx> <hy>
//! goal <robot> <x> <y> <theta>
//! 0 0 robot 1.5 0 3.14159 0 0 running 0.17 -
//! 0 0 pedestrian 0.2 -1 1.57 0.5 0 - 0.3 0.25
//! ```
//!
//! `flags` is the robot outcome after that tick (`-` for pedestrians) and
//! `phase` the gait phase (`-` for robots). Other lines starting with `#`
//! are comments. Floats are written in shortest round-trip form, so
//! parsing a written file gives back the identical value.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use glam::DVec2;

use crate::env::{Outcome, ScenarioSpec};
use crate::error::ParseError;
use crate::world::{AgentKind, Bounds, Pose2D, StaticObstacle};

pub const HEADER: &str = "# crowdnav trajectory v1";
pub const COLUMNS: &str = "# columns: tick agent_id kind x y theta v w flags radius phase";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub tick: usize,
    /// Robot index, or pedestrian id.
    pub agent_id: usize,
    pub kind: AgentKind,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub w: f64,
    /// Robot outcome; `None` for pedestrians.
    pub outcome: Option<Outcome>,
    pub radius: f64,
    /// Gait phase; `None` for robots.
    pub phase: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub scenario: Option<ScenarioSpec>,
    pub bounds: Option<Bounds>,
    pub obstacles: Vec<StaticObstacle>,
    pub goals: Vec<(usize, Pose2D)>,
    pub records: Vec<TrajectoryRecord>,
}

impl Default for Trajectory {
    fn default() -> Self {
        Self {
            dt: 0.1,
            scenario: None,
            bounds: None,
            obstacles: Vec::new(),
            goals: Vec::new(),
            records: Vec::new(),
        }
    }
}

impl Trajectory {
    /// Distinct `(kind, agent_id)` pairs in order of first appearance.
    pub fn agents(&self) -> Vec<(AgentKind, usize)> {
        let mut seen = Vec::new();
        for r in &self.records {
            if !seen.contains(&(r.kind, r.agent_id)) {
                seen.push((r.kind, r.agent_id));
            }
        }
        seen
    }

    /// The records of one agent, in file order.
    pub fn path(&self, kind: AgentKind, agent_id: usize) -> Vec<&TrajectoryRecord> {
        self.records
            .iter()
            .filter(|r| r.kind == kind && r.agent_id == agent_id)
            .collect()
    }

    pub fn last_tick(&self) -> Option<usize> {
        self.records.iter().map(|r| r.tick).max()
    }
}

fn kind_str(k: AgentKind) -> &'static str {
    match k {
        AgentKind::Robot => "robot",
        AgentKind::Pedestrian => "pedestrian",
    }
}

impl fmt::Display for Trajectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{HEADER}")?;
        writeln!(f, "{COLUMNS}")?;
        writeln!(f, "dt {}", self.dt)?;
        if let Some(s) = &self.scenario {
            writeln!(f, "scenario {s}")?;
        }
        if let Some(b) = &self.bounds {
            writeln!(f, "bounds {} {} {} {}", b.min.x, b.min.y, b.max.x, b.max.y)?;
        }
        for o in &self.obstacles {
            match o {
                StaticObstacle::Circle { center, radius } => {
                    writeln!(f, "obstacle circle {} {} {}", center.x, center.y, radius)?
                }
                StaticObstacle::Rect { center, half_extents } => writeln!(
                    f,
                    "obstacle rect {} {} {} {}",
                    center.x, center.y, half_extents.x, half_extents.y
                )?,
            }
        }
        for (i, g) in &self.goals {
            writeln!(f, "goal {i} {} {} {}", g.x, g.y, g.theta)?;
        }
        let mut line = String::new();
        for r in &self.records {
            line.clear();
            let _ = write!(
                line,
                "{} {} {} {} {} {} {} {} ",
                r.tick,
                r.agent_id,
                kind_str(r.kind),
                r.x,
                r.y,
                r.theta,
                r.v,
                r.w
            );
            match r.outcome {
                Some(o) => {
                    let _ = write!(line, "{o} ");
                }
                None => line.push_str("- "),
            }
            let _ = write!(line, "{} ", r.radius);
            match r.phase {
                Some(p) => {
                    let _ = write!(line, "{p}");
                }
                None => line.push('-'),
            }
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

struct Fields<'a> {
    line: usize,
    iter: std::str::SplitWhitespace<'a>,
}

impl<'a> Fields<'a> {
    fn next(&mut self, what: &str) -> Result<&'a str, ParseError> {
        self.iter
            .next()
            .ok_or_else(|| ParseError::new(self.line, format!("missing {what}")))
    }

    fn num<T: FromStr>(&mut self, what: &str) -> Result<T, ParseError> {
        let s = self.next(what)?;
        s.parse()
            .map_err(|_| ParseError::new(self.line, format!("bad {what} `{s}`")))
    }

    fn float(&mut self, what: &str) -> Result<f64, ParseError> {
        let v: f64 = self.num(what)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ParseError::new(self.line, format!("non-finite {what}")))
        }
    }

    fn end(mut self) -> Result<(), ParseError> {
        match self.iter.next() {
            None => Ok(()),
            Some(extra) => Err(ParseError::new(self.line, format!("unexpected field `{extra}`"))),
        }
    }
}

fn parse_outcome(s: &str, line: usize) -> Result<Outcome, ParseError> {
    match s {
        "running" => Ok(Outcome::Running),
        "reached" => Ok(Outcome::Reached),
        "collided" => Ok(Outcome::Collided),
        "timeout" => Ok(Outcome::Timeout),
        other => Err(ParseError::new(line, format!("unknown flag `{other}`"))),
    }
}

fn parse_record(mut f: Fields<'_>) -> Result<TrajectoryRecord, ParseError> {
    let line = f.line;
    let tick = f.num("tick")?;
    let agent_id = f.num("agent id")?;
    let kind = match f.next("kind")? {
        "robot" => AgentKind::Robot,
        "pedestrian" => AgentKind::Pedestrian,
        other => return Err(ParseError::new(line, format!("unknown agent kind `{other}`"))),
    };
    let x = f.float("x")?;
    let y = f.float("y")?;
    let theta = f.float("theta")?;
    let v = f.float("v")?;
    let w = f.float("w")?;
    let outcome = match (kind, f.next("flags")?) {
        (AgentKind::Pedestrian, "-") => None,
        (AgentKind::Robot, s) => Some(parse_outcome(s, line)?),
        (AgentKind::Pedestrian, s) => {
            return Err(ParseError::new(line, format!("pedestrian flags must be `-`, got `{s}`")))
        }
    };
    let radius = f.float("radius")?;
    if radius <= 0.0 {
        return Err(ParseError::new(line, "radius must be positive"));
    }
    let phase = match (kind, f.next("phase")?) {
        (AgentKind::Robot, "-") => None,
        (AgentKind::Pedestrian, s) => Some(
            s.parse::<f64>()
                .ok()
                .filter(|p| p.is_finite())
                .ok_or_else(|| ParseError::new(line, format!("bad phase `{s}`")))?,
        ),
        (AgentKind::Robot, s) => return Err(ParseError::new(line, format!("robot phase must be `-`, got `{s}`"))),
    };
    f.end()?;
    Ok(TrajectoryRecord {
        tick,
        agent_id,
        kind,
        x,
        y,
        theta,
        v,
        w,
        outcome,
        radius,
        phase,
    })
}

impl FromStr for Trajectory {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut lines = s.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, l)) if l.trim_end() == HEADER => {}
            _ => return Err(ParseError::new(1, format!("expected header `{HEADER}`"))),
        }
        let mut t = Trajectory::default();
        let mut saw_dt = false;
        let mut last_tick = 0;
        for (n, raw) in lines {
            let l = raw.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let mut f = Fields {
                line: n,
                iter: l.split_whitespace(),
            };
            let first = l.split_whitespace().next().unwrap_or_default();
            if first.as_bytes()[0].is_ascii_digit() {
                let r = parse_record(f)?;
                if r.tick < last_tick {
                    return Err(ParseError::new(n, "ticks must not decrease"));
                }
                last_tick = r.tick;
                t.records.push(r);
                continue;
            }
            if !t.records.is_empty() {
                return Err(ParseError::new(n, format!("`{first}` line after the first record")));
            }
            f.next("keyword")?;
            match first {
                "dt" => {
                    t.dt = f.float("dt")?;
                    if t.dt <= 0.0 {
                        return Err(ParseError::new(n, "dt must be positive"));
                    }
                    saw_dt = true;
                }
                "scenario" => {
                    let rest = l["scenario".len()..].trim();
                    t.scenario = Some(rest.parse().map_err(|e: ParseError| ParseError::new(n, e.message))?);
                    continue;
                }
                "bounds" => {
                    let min = DVec2::new(f.float("min x")?, f.float("min y")?);
                    let max = DVec2::new(f.float("max x")?, f.float("max y")?);
                    if !(min.x < max.x && min.y < max.y) {
                        return Err(ParseError::new(n, "empty bounds"));
                    }
                    t.bounds = Some(Bounds { min, max });
                }
                "obstacle" => {
                    let shape = f.next("shape")?;
                    let center = DVec2::new(f.float("center x")?, f.float("center y")?);
                    let o = match shape {
                        "circle" => StaticObstacle::Circle {
                            center,
                            radius: f.float("radius")?,
                        },
                        "rect" => StaticObstacle::Rect {
                            center,
                            half_extents: DVec2::new(f.float("half x")?, f.float("half y")?),
                        },
                        other => return Err(ParseError::new(n, format!("unknown obstacle shape `{other}`"))),
                    };
                    t.obstacles.push(o);
                }
                "goal" => {
                    let i = f.num("robot index")?;
                    let g = Pose2D::new(f.float("goal x")?, f.float("goal y")?, f.float("goal theta")?);
                    t.goals.push((i, g));
                }
                other => return Err(ParseError::new(n, format!("unknown line `{other}`"))),
            }
            f.end()?;
        }
        if !saw_dt {
            return Err(ParseError::new(1, "missing `dt` line"));
        }
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pedestrians::Strategy;
    use crate::env::ScenarioKind;

    fn sample() -> Trajectory {
        Trajectory {
            dt: 0.1,
            scenario: Some(ScenarioSpec {
                kind: ScenarioKind::Circular,
                strategy: Strategy::Sfm,
                seed: 9,
            }),
            bounds: Some(Bounds::square(12.0)),
            obstacles: vec![
                StaticObstacle::Circle {
                    center: DVec2::new(1.0, 2.0),
                    radius: 0.4,
                },
                StaticObstacle::Rect {
                    center: DVec2::new(-1.25, 0.1),
                    half_extents: DVec2::new(0.3, 0.7),
                },
            ],
            goals: vec![(0, Pose2D::new(3.0, 0.1, 0.7))],
            records: vec![
                TrajectoryRecord {
                    tick: 0,
                    agent_id: 0,
                    kind: AgentKind::Robot,
                    x: 0.1,
                    y: -1.0 / 3.0,
                    theta: std::f64::consts::PI,
                    v: 0.6,
                    w: -0.9,
                    outcome: Some(Outcome::Running),
                    radius: 0.17,
                    phase: None,
                },
                TrajectoryRecord {
                    tick: 1,
                    agent_id: 4,
                    kind: AgentKind::Pedestrian,
                    x: 1e-17,
                    y: 2.0,
                    theta: 0.0,
                    v: 0.5,
                    w: 0.0,
                    outcome: None,
                    radius: 0.3,
                    phase: Some(1.234_567_890_123),
                },
            ],
        }
    }

    #[test]
    fn roundtrip_identity() {
        let t = sample();
        let text = t.to_string();
        let back: Trajectory = text.parse().unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_string(), text);
    }

    #[test]
    fn empty_trajectory_parses() {
        let t = Trajectory::default();
        let back: Trajectory = t.to_string().parse().unwrap();
        assert!(back.records.is_empty());
        assert!(back.agents().is_empty());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let good = sample().to_string();
        let mut lines: Vec<&str> = good.lines().collect();
        let n = lines.len();
        lines[n - 1] = "1 4 pedestrian 0 2 0 0.5 0 - 0.3 nope";
        let err = lines.join("\n").parse::<Trajectory>().unwrap_err();
        assert_eq!(err.line, n);
        assert!("garbage".parse::<Trajectory>().unwrap_err().line == 1);
        let bad = format!("{HEADER}\ndt 0.1\n0 0 robot 0 0 0 0 0 running 0.17\n");
        assert_eq!(bad.parse::<Trajectory>().unwrap_err().line, 3);
    }
}
