//! Gym-style multi-robot navigation environment.

pub mod reward;
pub mod scenario;

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::pedestrians::{advance_pedestrians, OrcaParams, SfmParams, Strategy};
use crate::perception::{build_observation, LidarConfig, ObservationBundle};
use crate::world::{detect_collisions, step_diff_drive, Action, Pose2D, WorldState};

pub use reward::{compute_reward, RewardBreakdown, RewardConfig};
pub use scenario::{
    generate, generate_circular_scenario, generate_random_scenario, generate_solo_scenario, Episode,
    ScenarioKind, ScenarioParams, ScenarioSpec,
};

/// Whether the policy picks from the 28-entry grid or outputs raw velocities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionMode {
    Discrete,
    Continuous,
}

impl fmt::Display for ActionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActionMode::Discrete => "discrete",
            ActionMode::Continuous => "continuous",
        })
    }
}

impl std::str::FromStr for ActionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "discrete" => Ok(ActionMode::Discrete),
            "continuous" => Ok(ActionMode::Continuous),
            other => Err(format!("unknown action mode `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Running,
    Reached,
    Collided,
    Timeout,
}

impl Outcome {
    pub fn is_done(self) -> bool {
        self != Outcome::Running
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Running => "running",
            Outcome::Reached => "reached",
            Outcome::Collided => "collided",
            Outcome::Timeout => "timeout",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub scenario: ScenarioKind,
    pub strategy: Strategy,
    pub action_mode: ActionMode,
    pub dt: f64,
    pub max_steps: usize,
    pub goal_tolerance: f64,
    pub reward: RewardConfig,
    pub use_pedestrian_map: bool,
    pub seed: u64,
    pub scenario_params: ScenarioParams,
    pub lidar: LidarConfig,
    pub orca: OrcaParams,
    pub sfm: SfmParams,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioKind::Random,
            strategy: Strategy::Orca,
            action_mode: ActionMode::Discrete,
            dt: 0.1,
            max_steps: 200,
            goal_tolerance: 0.3,
            reward: RewardConfig::default(),
            use_pedestrian_map: true,
            seed: 0,
            scenario_params: ScenarioParams::default(),
            lidar: LidarConfig::default(),
            orca: OrcaParams::default(),
            sfm: SfmParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    /// `None` when observations are switched off (baseline controllers).
    pub observation: Option<ObservationBundle>,
    pub reward: f64,
    pub breakdown: RewardBreakdown,
    pub done: bool,
    pub outcome: Outcome,
    /// The submitted action was outside the velocity limits and got clamped.
    pub clamped: bool,
}

/// One environment instance with its own RNG stream.
///
/// The first episode is built from `config.seed` alone, so it matches
/// [`ScenarioSpec::build`] for the same triple. Later resets keep drawing from
/// the same stream.
#[derive(Clone, Debug)]
pub struct CrowdEnv {
    config: EnvConfig,
    rng: ChaCha8Rng,
    world: WorldState,
    goals: Vec<Pose2D>,
    outcomes: Vec<Outcome>,
    last_actions: Vec<Action>,
    steps: usize,
    observe: bool,
    regenerations: usize,
}

impl CrowdEnv {
    pub fn new(config: EnvConfig) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut env = Self {
            config,
            rng,
            world: WorldState::empty(None),
            goals: Vec::new(),
            outcomes: Vec::new(),
            last_actions: Vec::new(),
            steps: 0,
            observe: true,
            regenerations: 0,
        };
        env.load_next_episode();
        env
    }

    /// Turns observation building on or off. Baselines that read the world
    /// directly skip the raycasting cost.
    pub fn set_observe(&mut self, observe: bool) {
        self.observe = observe;
    }

    fn load_next_episode(&mut self) {
        let ep = generate(
            &mut self.rng,
            self.config.scenario,
            self.config.strategy,
            &self.config.scenario_params,
        );
        self.regenerations += ep.regenerations;
        let n = ep.world.robots.len();
        self.world = ep.world;
        self.goals = ep.goals;
        self.outcomes = vec![Outcome::Running; n];
        self.last_actions = vec![Action::STOP; n];
        self.steps = 0;
    }

    /// Starts a new episode and returns the initial observation of every robot.
    pub fn reset(&mut self) -> Vec<ObservationBundle> {
        self.load_next_episode();
        self.observations()
    }

    pub fn observations(&self) -> Vec<ObservationBundle> {
        (0..self.world.robots.len()).map(|i| self.observe_robot(i)).collect()
    }

    pub fn observe_robot(&self, i: usize) -> ObservationBundle {
        build_observation(
            &self.world,
            i,
            &self.goals[i],
            &self.config.lidar,
            self.config.use_pedestrian_map,
        )
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn goals(&self) -> &[Pose2D] {
        &self.goals
    }

    pub fn outcomes(&self) -> &[Outcome] {
        &self.outcomes
    }

    pub fn last_actions(&self) -> &[Action] {
        &self.last_actions
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn num_robots(&self) -> usize {
        self.world.robots.len()
    }

    pub fn all_done(&self) -> bool {
        self.outcomes.iter().all(|o| o.is_done())
    }

    /// Times scenario placement ran out of attempts and had to start over.
    pub fn regenerations(&self) -> usize {
        self.regenerations
    }

    /// Replaces the current episode, e.g. with a scenario loaded from disk.
    pub fn load_episode(&mut self, episode: Episode) {
        let n = episode.world.robots.len();
        self.world = episode.world;
        self.goals = episode.goals;
        self.outcomes = vec![Outcome::Running; n];
        self.last_actions = vec![Action::STOP; n];
        self.steps = 0;
    }

    /// Advances the episode by one tick.
    ///
    /// `actions` holds one entry per robot; entries for robots that are
    /// already done are ignored. Once every robot is done this is a no-op.
    pub fn step(&mut self, actions: &[Action]) -> Vec<StepResult> {
        let n = self.world.robots.len();
        assert_eq!(actions.len(), n, "one action per robot");

        if self.all_done() {
            return (0..n)
                .map(|i| StepResult {
                    observation: self.observe.then(|| self.observe_robot(i)),
                    reward: 0.0,
                    breakdown: RewardBreakdown::default(),
                    done: true,
                    outcome: self.outcomes[i],
                    clamped: false,
                })
                .collect();
        }

        let dt = self.config.dt;
        let prev = self.world.clone();
        advance_pedestrians(
            &mut self.world.pedestrians,
            &prev.robots,
            &prev.obstacles,
            self.config.strategy,
            &self.config.orca,
            &self.config.sfm,
            dt,
        );

        let mut clamped = vec![false; n];
        for i in 0..n {
            let robot = &mut self.world.robots[i];
            if self.outcomes[i].is_done() {
                robot.velocity = glam::DVec2::ZERO;
                continue;
            }
            let mut action = actions[i];
            if !action.is_within_bounds() {
                action = action.clamped();
                clamped[i] = self.config.action_mode == ActionMode::Continuous;
            }
            robot.pose = step_diff_drive(robot.pose, action, dt);
            robot.velocity = robot.pose.heading() * action.v;
            self.last_actions[i] = action;
        }
        self.world.time += dt;
        self.steps += 1;

        let mut results = Vec::with_capacity(n);
        for i in 0..n {
            if self.outcomes[i].is_done() {
                results.push(StepResult {
                    observation: self.observe.then(|| self.observe_robot(i)),
                    reward: 0.0,
                    breakdown: RewardBreakdown::default(),
                    done: true,
                    outcome: self.outcomes[i],
                    clamped: false,
                });
                continue;
            }
            let report = detect_collisions(&self.world, i);
            let goal = self.goals[i].position();
            let outcome = if report.collided {
                Outcome::Collided
            } else if self.world.robots[i].position().distance(goal) <= self.config.goal_tolerance {
                Outcome::Reached
            } else if self.steps >= self.config.max_steps {
                Outcome::Timeout
            } else {
                Outcome::Running
            };
            let breakdown = compute_reward(&prev, &self.world, i, goal, outcome, &self.config.reward);
            results.push(StepResult {
                observation: None,
                reward: breakdown.total(),
                breakdown,
                done: outcome.is_done(),
                outcome,
                clamped: clamped[i],
            });
        }
        // Outcomes are committed after every robot is evaluated so the order
        // of robots cannot matter.
        for (i, r) in results.iter_mut().enumerate() {
            self.outcomes[i] = r.outcome;
            if self.observe && r.observation.is_none() {
                r.observation = Some(self.observe_robot(i));
            }
        }
        results
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{AgentBody, Bounds};

    fn solo_env(start: Pose2D, goal: Pose2D, bounds: Option<Bounds>) -> CrowdEnv {
        let mut env = CrowdEnv::new(EnvConfig {
            scenario: ScenarioKind::Solo,
            strategy: Strategy::None,
            ..Default::default()
        });
        let mut world = WorldState::empty(bounds);
        world.robots.push(AgentBody::robot(start));
        env.load_episode(Episode {
            world,
            goals: vec![goal],
            regenerations: 0,
        });
        env
    }

    #[test]
    fn straight_run_reaches_goal_and_shaping_telescopes() {
        let goal = Pose2D::new(3.0, 0.0, 0.0);
        let mut env = solo_env(Pose2D::new(0.0, 0.0, 0.0), goal, None);
        let mut shaping = 0.0;
        let mut last = None;
        for _ in 0..200 {
            let r = env.step(&[Action::new(0.6, 0.0)]).remove(0);
            shaping += r.breakdown.shaping;
            if r.done {
                last = Some(r);
                break;
            }
        }
        let last = last.expect("episode ended");
        assert_eq!(last.outcome, Outcome::Reached);
        let residual = env.world().robots[0].position().distance(goal.position());
        assert!(residual <= 0.3);
        assert!((shaping - 200.0 * (3.0 - residual)).abs() < 1e-9);
    }

    #[test]
    fn driving_into_wall_collides_in_time() {
        let bounds = Bounds::square(12.0);
        let mut env = solo_env(Pose2D::new(4.0, 0.0, 0.0), Pose2D::new(-4.0, 0.0, 0.0), Some(bounds));
        let distance: f64 = 6.0 - 0.17 - 4.0;
        let limit = (distance / (0.6 * 0.1)).ceil() as usize;
        let mut steps = 0;
        loop {
            steps += 1;
            let r = env.step(&[Action::new(0.6, 0.0)]).remove(0);
            if r.done {
                assert_eq!(r.outcome, Outcome::Collided);
                assert_eq!(r.reward, -505.0 + r.breakdown.shaping);
                break;
            }
            assert!(steps < limit + 1);
        }
        assert!(steps <= limit);
    }

    #[test]
    fn done_env_is_noop() {
        let mut env = solo_env(Pose2D::new(0.0, 0.0, 0.0), Pose2D::new(0.2, 0.0, 0.0), None);
        let first = env.step(&[Action::STOP]).remove(0);
        assert_eq!(first.outcome, Outcome::Reached);
        let snapshot = env.world().clone();
        for _ in 0..3 {
            let r = env.step(&[Action::new(0.6, 0.9)]).remove(0);
            assert!(r.done);
            assert_eq!(r.reward, 0.0);
            assert_eq!(r.outcome, Outcome::Reached);
        }
        assert_eq!(env.world(), &snapshot);
    }

    #[test]
    fn timeout_at_max_steps() {
        let mut env = solo_env(Pose2D::new(0.0, 0.0, 0.0), Pose2D::new(5.0, 0.0, 0.0), None);
        for k in 1..=200 {
            let r = env.step(&[Action::STOP]).remove(0);
            assert_eq!(r.done, k == 200);
            if k == 200 {
                assert_eq!(r.outcome, Outcome::Timeout);
            }
        }
    }

    #[test]
    fn continuous_clamp_is_flagged() {
        let mut env = solo_env(Pose2D::new(0.0, 0.0, 0.0), Pose2D::new(5.0, 0.0, 0.0), None);
        env.config.action_mode = ActionMode::Continuous;
        let r = env.step(&[Action::new(2.0, -3.0)]).remove(0);
        assert!(r.clamped);
        assert_eq!(env.last_actions()[0], Action::new(0.6, -0.9));
    }

    #[test]
    fn identical_seeds_identical_traces() {
        let config = EnvConfig {
            scenario: ScenarioKind::Random,
            strategy: Strategy::Sfm,
            seed: 5,
            ..Default::default()
        };
        let run = || {
            let mut env = CrowdEnv::new(config.clone());
            env.set_observe(false);
            let mut trace = Vec::new();
            for t in 0..60 {
                let a = Action::from_discrete(t % 28).unwrap();
                let rs = env.step(&[a, a]);
                trace.push((env.world().clone(), rs.iter().map(|r| r.reward).collect::<Vec<_>>()));
            }
            trace
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn ablation_zeroes_pedestrian_map() {
        let mut env = CrowdEnv::new(EnvConfig {
            scenario: ScenarioKind::Circular,
            use_pedestrian_map: false,
            seed: 1,
            ..Default::default()
        });
        for obs in env.reset() {
            assert!(obs.pedestrian_map.is_zero());
            let (maps, _) = obs.to_tensor();
            assert_eq!(maps.len(), 4 * 48 * 48);
        }
    }
}
