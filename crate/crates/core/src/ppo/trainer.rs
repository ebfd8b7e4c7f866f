use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, Outcome, ScenarioKind};
use crate::net::{ActorCritic, Checkpoint, PolicyConfig};
use crate::pedestrians::Strategy;

use super::rollout::{collect_rollouts, RolloutWorker};
use super::update::{ppo_update, NetLearner, PpoConfig};
use super::PpoError;

/// The four training environments: random and circular scenarios, each
/// with ORCA and with social-force pedestrians.
pub fn training_envs(base: &EnvConfig, seed: u64) -> Vec<EnvConfig> {
    [
        (ScenarioKind::Random, Strategy::Orca),
        (ScenarioKind::Random, Strategy::Sfm),
        (ScenarioKind::Circular, Strategy::Orca),
        (ScenarioKind::Circular, Strategy::Sfm),
    ]
    .into_iter()
    .enumerate()
    .map(|(i, (scenario, strategy))| EnvConfig {
        scenario,
        strategy,
        seed: env_seed(seed, i),
        ..base.clone()
    })
    .collect()
}

/// `count` environments cycling through `scenarios`, seeded like
/// [`training_envs`].
pub fn scenario_envs(base: &EnvConfig, scenarios: &[(ScenarioKind, Strategy)], count: usize, seed: u64) -> Vec<EnvConfig> {
    (0..count)
        .map(|i| {
            let (scenario, strategy) = scenarios[i % scenarios.len()];
            EnvConfig {
                scenario,
                strategy,
                seed: env_seed(seed, i),
                ..base.clone()
            }
        })
        .collect()
}

/// Seed of training environment `index` for run seed `seed`.
pub fn env_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(1000).wrapping_add(index as u64 + 1)
}

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: u64,
    /// Mean total reward of robot episodes that ended during collection.
    pub mean_reward: f64,
    pub success_rate: f64,
    pub episodes: usize,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub rolled_back: bool,
}

/// Collect-then-update loop. The policy is the only writer of parameters.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub learner: NetLearner<f32>,
    pub ppo: PpoConfig,
    worker: RolloutWorker,
    rng: ChaCha8Rng,
    iteration: u64,
}

fn sampling_rng(seed: u64, iteration: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration + 1);
    rng
}

impl Trainer {
    pub fn new(policy: PolicyConfig, ppo: PpoConfig, envs: Vec<EnvConfig>, seed: u64) -> Result<Self, PpoError> {
        ppo.validate()?;
        let model = ActorCritic::new(policy, seed)?;
        Ok(Self {
            learner: NetLearner::new(model, &ppo),
            worker: RolloutWorker::new(envs),
            rng: sampling_rng(seed, 0),
            ppo,
            iteration: 0,
        })
    }

    /// Continues from a checkpoint. Environments restart from their seeds;
    /// the sampling stream is derived from the checkpoint's iteration.
    pub fn resume(checkpoint: Checkpoint, ppo: PpoConfig, envs: Vec<EnvConfig>, seed: u64) -> Result<Self, PpoError> {
        ppo.validate()?;
        let learner = match checkpoint.optimizer {
            Some((p, v)) => NetLearner::from_parts(checkpoint.model, p, v),
            None => NetLearner::new(checkpoint.model, &ppo),
        };
        Ok(Self {
            learner,
            worker: RolloutWorker::new(envs),
            rng: sampling_rng(seed, checkpoint.iteration),
            ppo,
            iteration: checkpoint.iteration,
        })
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn model(&self) -> &ActorCritic<f32> {
        &self.learner.model
    }

    /// Collects one buffer with the current policy, then updates on it.
    /// The log describes the collected episodes, i.e. the policy before
    /// the update.
    pub fn iterate(&mut self) -> Result<IterationLog, PpoError> {
        let (buffer, episodes) = collect_rollouts(&mut self.worker, &self.learner.model, &self.ppo, &mut self.rng)?;
        let stats = ppo_update(&mut self.learner, &buffer, &self.ppo, &mut self.rng)?;
        let n = episodes.len();
        let (mean_reward, success_rate) = if n == 0 {
            (f64::NAN, f64::NAN)
        } else {
            (
                episodes.iter().map(|e| e.total_reward).sum::<f64>() / n as f64,
                episodes.iter().filter(|e| e.outcome == Outcome::Reached).count() as f64 / n as f64,
            )
        };
        let log = IterationLog {
            iteration: self.iteration,
            mean_reward,
            success_rate,
            episodes: n,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            approx_kl: stats.approx_kl,
            clip_fraction: stats.clip_fraction,
            rolled_back: stats.rolled_back,
        };
        self.iteration += 1;
        Ok(log)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.learner.model.clone(),
            iteration: self.iteration,
            optimizer: Some((self.learner.policy_adam.clone(), self.learner.value_adam.clone())),
        }
    }
}
