use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{orca_robot_policy, straight_line_time, ComparisonReport, EvalError, MetricRecord, ReportRow};
use crate::env::{CrowdEnv, EnvConfig, ScenarioKind, ScenarioSpec};
use crate::io::trajectory::{Trajectory, TrajectoryRecord};
use crate::net::{greedy_action, ActorCritic};
use crate::pedestrians::Strategy;
use crate::world::{normalize_angle, Action, AgentKind};

/// Robot controller under evaluation.
#[derive(Clone, Debug)]
pub enum Method {
    /// ORCA with perfect sensing, converted to unicycle commands.
    OrcaBaseline,
    /// A trained policy, acting greedily on its observations.
    Policy {
        name: String,
        model: ActorCritic<f32>,
        use_pedestrian_map: bool,
    },
}

impl Method {
    pub fn name(&self) -> &str {
        match self {
            Method::OrcaBaseline => "orca",
            Method::Policy { name, .. } => name,
        }
    }

    fn reports_angular(&self) -> bool {
        !matches!(self, Method::OrcaBaseline)
    }
}

/// A scenario family with its pedestrian behavior, e.g. `sfm-circular`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EvalScenario {
    pub kind: ScenarioKind,
    pub strategy: Strategy,
}

impl fmt::Display for EvalScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ScenarioKind::PpoCircular | ScenarioKind::Solo => write!(f, "{}", self.kind),
            _ => write!(f, "{}-{}", self.strategy, self.kind),
        }
    }
}

impl FromStr for EvalScenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        for kind in [ScenarioKind::PpoCircular, ScenarioKind::Solo] {
            if s == kind.to_string() {
                return Ok(Self {
                    kind,
                    strategy: Strategy::None,
                });
            }
        }
        let (strategy, kind) = s
            .split_once('-')
            .ok_or_else(|| format!("expected `<strategy>-<kind>`, got `{s}`"))?;
        Ok(Self {
            kind: kind.parse()?,
            strategy: strategy.parse()?,
        })
    }
}

impl TryFrom<String> for EvalScenario {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<EvalScenario> for String {
    fn from(s: EvalScenario) -> Self {
        s.to_string()
    }
}

/// The five comparison scenarios: both pedestrian models on random and
/// circular layouts, plus the robots-only circle.
pub fn default_scenarios() -> Vec<EvalScenario> {
    let mut v = Vec::new();
    for kind in [ScenarioKind::Random, ScenarioKind::Circular] {
        for strategy in [Strategy::Orca, Strategy::Sfm] {
            v.push(EvalScenario { kind, strategy });
        }
    }
    v.push(EvalScenario {
        kind: ScenarioKind::PpoCircular,
        strategy: Strategy::None,
    });
    v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Episodes per scenario; episode `i` uses seed `seed_base + i`.
    pub episodes: usize,
    pub seed_base: u64,
    /// Physics and limits; scenario, strategy and seed are set per episode.
    pub env: EnvConfig,
    /// Trajectories kept per method and scenario (the first episodes).
    pub trajectories: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 500,
            seed_base: 0,
            env: EnvConfig::default(),
            trajectories: 10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EpisodeRun {
    pub records: Vec<MetricRecord>,
    pub trajectory: Option<Trajectory>,
}

fn controller_actions(method: &Method, env: &CrowdEnv) -> Result<Vec<Action>, EvalError> {
    let n = env.num_robots();
    let mut actions = vec![Action::STOP; n];
    let live: Vec<usize> = (0..n).filter(|&i| !env.outcomes()[i].is_done()).collect();
    match method {
        Method::OrcaBaseline => {
            let cfg = env.config();
            for &i in &live {
                actions[i] = orca_robot_policy(env.world(), i, env.goals()[i].position(), &cfg.orca, cfg.dt);
            }
        }
        Method::Policy { model, .. } => {
            if live.is_empty() {
                return Ok(actions);
            }
            let mut maps = Vec::new();
            let mut goals = Vec::new();
            for &i in &live {
                let (m, g) = env.observe_robot(i).to_tensor();
                maps.extend_from_slice(&m);
                goals.extend_from_slice(&g);
            }
            let cache = model.policy_forward(&maps, &goals, live.len())?;
            for (&i, out) in live.iter().zip(model.outputs_from_head(&cache.output)) {
                actions[i] = greedy_action(&out);
            }
        }
    }
    Ok(actions)
}

fn snapshot(env: &CrowdEnv, tick: usize, prev_theta: &mut [f64], out: &mut Vec<TrajectoryRecord>) {
    let world = env.world();
    let dt = env.config().dt;
    for (i, r) in world.robots.iter().enumerate() {
        let a = if tick == 0 { Action::STOP } else { env.last_actions()[i] };
        out.push(TrajectoryRecord {
            tick,
            agent_id: i,
            kind: AgentKind::Robot,
            x: r.pose.x,
            y: r.pose.y,
            theta: r.pose.theta,
            v: a.v,
            w: a.w,
            outcome: Some(env.outcomes()[i]),
            radius: r.radius,
            phase: None,
        });
    }
    for (k, p) in world.pedestrians.iter().enumerate() {
        let w = if tick == 0 {
            0.0
        } else {
            normalize_angle(p.body.pose.theta - prev_theta[k]) / dt
        };
        prev_theta[k] = p.body.pose.theta;
        out.push(TrajectoryRecord {
            tick,
            agent_id: p.id,
            kind: AgentKind::Pedestrian,
            x: p.body.pose.x,
            y: p.body.pose.y,
            theta: p.body.pose.theta,
            v: p.body.velocity.length(),
            w,
            outcome: None,
            radius: p.body.radius,
            phase: Some(p.gait.phase),
        });
    }
}

/// Runs episode `episode` of `scenario` under `method` until every robot
/// is done, returning one record per robot.
pub fn run_episode(
    method: &Method,
    scenario: EvalScenario,
    config: &EvalConfig,
    episode: usize,
    capture: bool,
) -> Result<EpisodeRun, EvalError> {
    let seed = config.seed_base.wrapping_add(episode as u64);
    let mut env_cfg = EnvConfig {
        scenario: scenario.kind,
        strategy: scenario.strategy,
        seed,
        ..config.env.clone()
    };
    if let Method::Policy {
        model,
        use_pedestrian_map,
        ..
    } = method
    {
        env_cfg.action_mode = model.config.mode;
        env_cfg.use_pedestrian_map = *use_pedestrian_map;
    }
    let dt = env_cfg.dt;
    let tolerance = env_cfg.goal_tolerance;
    let mut env = CrowdEnv::new(env_cfg);
    env.set_observe(false);
    let n = env.num_robots();
    let starts: Vec<_> = env.world().robots.iter().map(|r| r.position()).collect();
    let goals: Vec<_> = env.goals().to_vec();
    let mut omegas = vec![Vec::new(); n];
    let mut paths: Vec<Vec<[f64; 2]>> = starts.iter().map(|p| vec![[p.x, p.y]]).collect();
    let mut end_time = vec![None; n];

    let mut traj = capture.then(|| Trajectory {
        dt,
        scenario: Some(ScenarioSpec {
            kind: scenario.kind,
            strategy: scenario.strategy,
            seed,
        }),
        bounds: env.world().bounds,
        obstacles: env.world().obstacles.clone(),
        goals: goals.iter().copied().enumerate().collect(),
        records: Vec::new(),
    });
    let mut prev_theta: Vec<f64> = env.world().pedestrians.iter().map(|p| p.body.pose.theta).collect();
    if let Some(t) = traj.as_mut() {
        snapshot(&env, 0, &mut prev_theta, &mut t.records);
    }

    while !env.all_done() {
        let actions = controller_actions(method, &env)?;
        let live: Vec<bool> = env.outcomes().iter().map(|o| !o.is_done()).collect();
        env.step(&actions);
        for i in 0..n {
            if !live[i] {
                continue;
            }
            omegas[i].push(env.last_actions()[i].w);
            let p = env.world().robots[i].position();
            paths[i].push([p.x, p.y]);
            if env.outcomes()[i].is_done() {
                end_time[i] = Some(env.steps() as f64 * dt);
            }
        }
        if let Some(t) = traj.as_mut() {
            snapshot(&env, env.steps(), &mut prev_theta, &mut t.records);
        }
    }

    let records = (0..n)
        .map(|i| MetricRecord {
            method: method.name().to_string(),
            scenario: scenario.to_string(),
            episode,
            seed,
            robot: i,
            outcome: env.outcomes()[i],
            episode_time: end_time[i].unwrap_or(env.steps() as f64 * dt),
            straight_time: straight_line_time((starts[i].distance(goals[i].position()) - tolerance).max(0.0)),
            angular_velocities: std::mem::take(&mut omegas[i]),
            trajectory: std::mem::take(&mut paths[i]),
        })
        .collect();
    Ok(EpisodeRun {
        records,
        trajectory: traj,
    })
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: ComparisonReport,
    pub records: Vec<MetricRecord>,
    /// `(method, scenario, episode, trajectory)` for the captured episodes.
    pub trajectories: Vec<(String, String, usize, Trajectory)>,
}

/// Evaluates every method on every scenario over the same seeded episode
/// sequence.
pub fn run_comparison(
    methods: &[Method],
    scenarios: &[EvalScenario],
    config: &EvalConfig,
) -> Result<RunOutput, EvalError> {
    let mut report = ComparisonReport {
        seed_base: config.seed_base,
        rows: Vec::new(),
    };
    let mut all = Vec::new();
    let mut trajectories = Vec::new();
    for method in methods {
        for &scenario in scenarios {
            let mut records = Vec::with_capacity(config.episodes * scenario.kind.robot_count());
            for ep in 0..config.episodes {
                let run = run_episode(method, scenario, config, ep, ep < config.trajectories)?;
                records.extend(run.records);
                if let Some(t) = run.trajectory {
                    trajectories.push((method.name().to_string(), scenario.to_string(), ep, t));
                }
            }
            if records.is_empty() {
                return Err(EvalError::Empty);
            }
            let row = ReportRow::from_records(
                method.name(),
                &scenario.to_string(),
                config.episodes,
                &records,
                method.reports_angular(),
            )?;
            log::info!(
                "{} on {}: success {:.3} over {} records",
                row.method,
                row.scenario,
                row.success_rate,
                row.records
            );
            report.rows.push(row);
            all.extend(records);
        }
    }
    Ok(RunOutput {
        report,
        records: all,
        trajectories,
    })
}
