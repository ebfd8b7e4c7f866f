use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{CrowdEnv, EnvConfig, Outcome};
use crate::net::{sample_action, ActorCritic};
use crate::world::Action;

use super::buffer::{RolloutBuffer, Transition};
use super::update::PpoConfig;
use super::PpoError;

type Tensor = (Vec<f32>, [f32; 3]);

/// One finished robot episode seen during collection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub env_id: usize,
    pub robot: usize,
    pub total_reward: f64,
    pub outcome: Outcome,
    pub steps: usize,
}

/// The parallel training environments plus the state carried between
/// collections (current observations, running returns).
#[derive(Clone, Debug)]
pub struct RolloutWorker {
    envs: Vec<CrowdEnv>,
    current: Vec<Vec<Tensor>>,
    running_return: Vec<Vec<f64>>,
    running_steps: Vec<Vec<usize>>,
}

impl RolloutWorker {
    pub fn new(configs: Vec<EnvConfig>) -> Self {
        let envs: Vec<CrowdEnv> = configs.into_iter().map(CrowdEnv::new).collect();
        let current = envs
            .iter()
            .map(|e| e.observations().iter().map(|o| o.to_tensor()).collect())
            .collect();
        let running_return = envs.iter().map(|e| vec![0.0; e.num_robots()]).collect();
        let running_steps = envs.iter().map(|e| vec![0; e.num_robots()]).collect();
        Self {
            envs,
            current,
            running_return,
            running_steps,
        }
    }

    pub fn envs(&self) -> &[CrowdEnv] {
        &self.envs
    }

    fn reset_env(&mut self, e: usize) {
        self.current[e] = self.envs[e].reset().iter().map(|o| o.to_tensor()).collect();
        let n = self.envs[e].num_robots();
        self.running_return[e] = vec![0.0; n];
        self.running_steps[e] = vec![0; n];
    }
}

/// Fills a buffer of `capacity` transitions, split evenly across the
/// environments and gathered round-robin: each round runs one batched
/// forward pass over every live robot of every environment that still has
/// quota, then steps each of those environments once.
///
/// Buffered rewards are multiplied by `config.reward_scale`; episode
/// summaries keep the environment's reward. Returns the finished buffer (GAE
/// applied) and every robot episode that ended during collection.
pub fn collect_rollouts<R: Rng>(
    worker: &mut RolloutWorker,
    model: &ActorCritic<f32>,
    config: &PpoConfig,
    rng: &mut R,
) -> Result<(RolloutBuffer, Vec<EpisodeSummary>), PpoError> {
    let capacity = config.buffer_size;
    let n_envs = worker.envs.len();
    if n_envs == 0 {
        return Err(PpoError::BadConfig("no environments".into()));
    }
    let quota: Vec<usize> = (0..n_envs)
        .map(|e| capacity / n_envs + usize::from(e < capacity % n_envs))
        .collect();
    let mut counts = vec![0usize; n_envs];
    let mut buffer = RolloutBuffer::new(capacity);
    let mut episodes = Vec::new();
    // Observation following each stream's latest transition, if not terminal.
    let mut pending: BTreeMap<(usize, usize), Tensor> = BTreeMap::new();

    while counts.iter().zip(&quota).any(|(c, q)| c < q) {
        let mut slots = Vec::new();
        for e in 0..n_envs {
            if counts[e] >= quota[e] {
                continue;
            }
            for (i, outcome) in worker.envs[e].outcomes().iter().enumerate() {
                if !outcome.is_done() {
                    slots.push((e, i));
                }
            }
        }
        let mut maps = Vec::new();
        let mut goals = Vec::new();
        for &(e, i) in &slots {
            let (m, g) = &worker.current[e][i];
            maps.extend_from_slice(m);
            goals.extend_from_slice(g);
        }
        let (dists, values) = model.forward(&maps, &goals, slots.len())?;

        let mut by_env: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
        let mut sampled = Vec::with_capacity(slots.len());
        for (k, &(e, i)) in slots.iter().enumerate() {
            sampled.push(sample_action(&dists[k], rng));
            by_env.entry(e).or_default().push((i, k));
        }

        for (e, members) in by_env {
            let env = &mut worker.envs[e];
            let mut actions = vec![Action::STOP; env.num_robots()];
            for &(i, k) in &members {
                actions[i] = sampled[k].action;
            }
            let results = env.step(&actions);
            for &(i, k) in &members {
                let r = &results[i];
                worker.running_return[e][i] += r.reward;
                worker.running_steps[e][i] += 1;
                let next = r.observation.as_ref().expect("training envs observe").to_tensor();
                if counts[e] < quota[e] {
                    let (m, g) = std::mem::replace(&mut worker.current[e][i], next.clone());
                    buffer.push(Transition {
                        maps: m,
                        goal: g,
                        action: sampled[k].raw,
                        log_prob: sampled[k].log_prob,
                        reward: r.reward * config.reward_scale,
                        value: values[k],
                        done: r.done,
                        env_id: e,
                        robot: i,
                    })?;
                    counts[e] += 1;
                    if r.done {
                        pending.remove(&(e, i));
                    } else {
                        pending.insert((e, i), next);
                    }
                } else {
                    worker.current[e][i] = next;
                }
                if r.done {
                    episodes.push(EpisodeSummary {
                        env_id: e,
                        robot: i,
                        total_reward: worker.running_return[e][i],
                        outcome: r.outcome,
                        steps: worker.running_steps[e][i],
                    });
                }
            }
            if worker.envs[e].all_done() {
                worker.reset_env(e);
            }
        }
    }

    let mut bootstrap = BTreeMap::new();
    if !pending.is_empty() {
        let keys: Vec<(usize, usize)> = pending.keys().copied().collect();
        let mut maps = Vec::new();
        let mut goals = Vec::new();
        for (m, g) in pending.values() {
            maps.extend_from_slice(m);
            goals.extend_from_slice(g);
        }
        let cache = model.value_forward(&maps, &goals, keys.len())?;
        for (key, v) in keys.into_iter().zip(cache.output) {
            bootstrap.insert(key, v as f64);
        }
    }
    buffer.finish(&bootstrap, config.gamma, config.lambda)?;
    Ok((buffer, episodes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::ScenarioKind;
    use crate::net::{ArchConfig, PolicyConfig};
    use crate::pedestrians::Strategy;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_model() -> ActorCritic<f32> {
        ActorCritic::new(
            PolicyConfig {
                arch: ArchConfig {
                    conv_filters: [2, 2, 2],
                    flatten_units: 8,
                    hidden_units: 8,
                    ..Default::default()
                },
                ..Default::default()
            },
            0,
        )
        .unwrap()
    }

    fn four_envs() -> Vec<EnvConfig> {
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
            seed: 10 + i as u64,
            ..Default::default()
        })
        .collect()
    }

    fn cfg256() -> PpoConfig {
        PpoConfig {
            buffer_size: 256,
            ..Default::default()
        }
    }

    #[test]
    fn buffer_composition_and_determinism() {
        let model = tiny_model();
        let run = || {
            let mut worker = RolloutWorker::new(four_envs());
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            collect_rollouts(&mut worker, &model, &cfg256(), &mut rng).unwrap()
        };
        let (a, ep_a) = run();
        let (b, ep_b) = run();
        assert_eq!(a.len(), 256);
        for e in 0..4 {
            assert_eq!(a.count_for_env(e), 64);
        }
        assert_eq!(a.transitions(), b.transitions());
        assert_eq!(a.advantages(), b.advantages());
        assert_eq!(ep_a, ep_b);
    }
}
