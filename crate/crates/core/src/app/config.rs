use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::env::{ActionMode, EnvConfig, ScenarioKind};
use crate::eval::{default_scenarios, EvalScenario};
use crate::net::PolicyConfig;
use crate::perception::{MAP_CELLS, OBS_CHANNELS};
use crate::pedestrians::Strategy;
use crate::ppo::PpoConfig;

use super::AppError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub iterations: u64,
    /// Write `checkpoints/iter_NNNNNN.ckpt` every this many iterations.
    pub checkpoint_every: u64,
    /// Parallel training environments.
    pub num_envs: usize,
    /// Scenario families, cycled over the environments.
    pub scenarios: Vec<EvalScenario>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resume: Option<PathBuf>,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            iterations: 500,
            checkpoint_every: 50,
            num_envs: 4,
            scenarios: default_scenarios()[..4].to_vec(),
            resume: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub name: String,
    pub path: PathBuf,
    #[serde(default = "yes")]
    pub use_pedestrian_map: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub episodes: usize,
    pub trajectories: usize,
    pub scenarios: Vec<EvalScenario>,
    pub baseline: bool,
    pub checkpoints: Vec<CheckpointEntry>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            episodes: 500,
            trajectories: 10,
            scenarios: default_scenarios(),
            baseline: true,
            checkpoints: Vec::new(),
        }
    }
}

/// Everything a run depends on. Resolved once from defaults, then the
/// config file, then command-line flags, and dumped as `config.toml` next to
/// every output.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Seeds network initialization, training environments, the sampling
    /// stream and the first evaluation episode.
    pub seed: u64,
    pub env: EnvConfig,
    pub policy: PolicyConfig,
    pub ppo: PpoConfig,
    pub train: TrainSettings,
    pub eval: EvalSettings,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub scenario: Option<ScenarioKind>,
    pub strategy: Option<Strategy>,
    pub mode: Option<ActionMode>,
    pub no_ped_map: bool,
    pub episodes: Option<usize>,
    pub iterations: Option<u64>,
    pub checkpoint_every: Option<u64>,
    pub trajectories: Option<usize>,
    pub resume: Option<PathBuf>,
    pub no_baseline: bool,
    pub checkpoints: Vec<CheckpointEntry>,
}

/// Scenario list selected by `--scenario` / `--strategy`. Robots-only
/// kinds ignore the strategy.
pub fn scenario_selection(kind: Option<ScenarioKind>, strategy: Option<Strategy>) -> Vec<EvalScenario> {
    let kinds = kind.map_or(vec![ScenarioKind::Random, ScenarioKind::Circular], |k| vec![k]);
    let strategies = strategy.map_or(vec![Strategy::Orca, Strategy::Sfm], |s| vec![s]);
    let mut out = Vec::new();
    for k in kinds {
        if matches!(k, ScenarioKind::PpoCircular | ScenarioKind::Solo) {
            out.push(EvalScenario {
                kind: k,
                strategy: Strategy::None,
            });
            continue;
        }
        for &s in &strategies {
            out.push(EvalScenario { kind: k, strategy: s });
        }
    }
    out
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, AppError> {
        toml::from_str(text).map_err(|e| AppError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, AppError> {
        toml::to_string(self).map_err(|e| AppError::Config(e.to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if o.scenario.is_some() || o.strategy.is_some() {
            let selected = scenario_selection(o.scenario, o.strategy);
            self.env.scenario = selected[0].kind;
            self.env.strategy = selected[0].strategy;
            self.train.scenarios = selected.clone();
            self.eval.scenarios = selected;
        }
        if let Some(mode) = o.mode {
            self.env.action_mode = mode;
            self.policy.mode = mode;
        }
        if o.no_ped_map {
            self.env.use_pedestrian_map = false;
            for c in &mut self.eval.checkpoints {
                c.use_pedestrian_map = false;
            }
        }
        if let Some(n) = o.episodes {
            self.eval.episodes = n;
        }
        if let Some(n) = o.iterations {
            self.train.iterations = n;
        }
        if let Some(n) = o.checkpoint_every {
            self.train.checkpoint_every = n;
        }
        if let Some(n) = o.trajectories {
            self.eval.trajectories = n;
        }
        if o.resume.is_some() {
            self.train.resume = o.resume.clone();
        }
        if o.no_baseline {
            self.eval.baseline = false;
        }
        for c in &o.checkpoints {
            let mut c = c.clone();
            c.use_pedestrian_map &= self.env.use_pedestrian_map;
            self.eval.checkpoints.retain(|e| e.name != c.name);
            self.eval.checkpoints.push(c);
        }
    }

    /// Defaults, then `file` (TOML text) if given, then `overrides`.
    pub fn resolve(file: Option<&str>, overrides: &Overrides) -> Result<Self, AppError> {
        let mut cfg = match file {
            Some(text) => Self::from_toml(text)?,
            None => Self::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), AppError> {
        let bad = |m: &str| Err(AppError::Config(m.to_string()));
        if self.policy.mode != self.env.action_mode {
            return bad("policy.mode and env.action_mode disagree");
        }
        // TOML integers are signed 64-bit.
        if self.seed > i64::MAX as u64 {
            return bad("seed must fit in a signed 64-bit integer");
        }
        if !(self.env.dt > 0.0 && self.env.dt.is_finite()) {
            return bad("env.dt must be positive");
        }
        if self.env.max_steps == 0 {
            return bad("env.max_steps must be positive");
        }
        if self.env.goal_tolerance.is_nan() || self.env.goal_tolerance < 0.0 {
            return bad("env.goal_tolerance must be non-negative");
        }
        let arch = &self.policy.arch;
        if (arch.input_channels, arch.input_size, arch.goal_inputs) != (OBS_CHANNELS, MAP_CELLS, 3) {
            return bad("policy.arch inputs must match the observation: 4 channels of 48x48 cells and 3 goal values");
        }
        if self.train.num_envs == 0 || self.train.scenarios.is_empty() {
            return bad("training needs at least one environment and scenario");
        }
        if self.eval.scenarios.is_empty() {
            return bad("eval.scenarios is empty");
        }
        if self.eval.episodes == 0 {
            return bad("eval.episodes must be positive");
        }
        let mut names: Vec<&str> = self.eval.checkpoints.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) || names.contains(&"orca") {
            return bad("checkpoint names must be unique and not `orca`");
        }
        self.ppo.validate().map_err(|e| AppError::Config(e.to_string()))
    }
}
