use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::net::dist::{categorical_terms, gaussian_terms, LogProbTerms};
use crate::net::{ActorCritic, ForwardCache, NetError, RawAction, Real};

use super::adam::{adam_step, AdamState};
use super::buffer::RolloutBuffer;
use super::PpoError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub lr_policy: f64,
    pub lr_value: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub entropy_coef: f64,
    /// Global L2 cap applied separately to the policy and value gradients.
    pub max_grad_norm: f64,
    pub buffer_size: usize,
    /// Multiplies rewards before GAE, so the critic fits returns of order
    /// one instead of hundreds.
    pub reward_scale: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            lr_policy: 5e-5,
            lr_value: 1e-3,
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            epochs: 4,
            minibatch: 256,
            entropy_coef: 0.01,
            max_grad_norm: 0.5,
            buffer_size: 2048,
            reward_scale: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), PpoError> {
        let ok = self.gamma > 0.0
            && self.gamma < 1.0
            && self.lambda > 0.0
            && self.lambda <= 1.0
            && self.clip > 0.0
            && self.epochs > 0
            && self.minibatch > 0
            && self.buffer_size > 0
            && self.lr_policy > 0.0
            && self.lr_value > 0.0
            && self.reward_scale > 0.0
            && self.reward_scale.is_finite();
        if ok {
            Ok(())
        } else {
            Err(PpoError::BadConfig(format!("{self:?}")))
        }
    }
}

/// What PPO needs from a trainable actor-critic.
pub trait Learner: Clone {
    /// Log-probability terms of the stored actions under the current
    /// policy, for the transitions at `indices`. Keeps whatever
    /// [`Learner::policy_backward`] needs.
    fn policy_terms(&mut self, buffer: &RolloutBuffer, indices: &[usize]) -> Result<Vec<LogProbTerms>, NetError>;

    /// Policy-side parameter gradient given the loss gradient with respect
    /// to each sample's distribution parameters.
    fn policy_backward(&mut self, d_dist: &[Vec<f64>]) -> Vec<f64>;

    fn value_predictions(&mut self, buffer: &RolloutBuffer, indices: &[usize]) -> Result<Vec<f64>, NetError>;

    fn value_backward(&mut self, d_values: &[f64]) -> Vec<f64>;

    /// One optimizer step on each side.
    fn apply(&mut self, policy_grad: &[f64], value_grad: &[f64], config: &PpoConfig);
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyLossStats {
    /// `-mean(min(r A, clip(r) A))`.
    pub surrogate: f64,
    pub entropy: f64,
    /// Surrogate minus the entropy bonus.
    pub loss: f64,
    /// Mean of `old_logp - new_logp`.
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub max_ratio_deviation: f64,
}

/// Clipped surrogate with entropy bonus over one minibatch, and its
/// gradient with respect to each sample's distribution parameters.
///
/// Samples whose ratio sits on the clipped side of the minimum contribute
/// no surrogate gradient.
pub fn clipped_objective(
    terms: &[LogProbTerms],
    old_log_probs: &[f64],
    advantages: &[f64],
    clip: f64,
    entropy_coef: f64,
) -> (PolicyLossStats, Vec<Vec<f64>>) {
    let n = terms.len() as f64;
    let mut stats = PolicyLossStats::default();
    let mut grads = Vec::with_capacity(terms.len());
    for ((t, &old), &a) in terms.iter().zip(old_log_probs).zip(advantages) {
        let ratio = (t.log_prob - old).exp();
        let clipped = ratio.clamp(1.0 - clip, 1.0 + clip);
        let unclipped_term = ratio * a;
        let clipped_term = clipped * a;
        stats.surrogate -= unclipped_term.min(clipped_term) / n;
        stats.entropy += t.entropy / n;
        stats.approx_kl += (old - t.log_prob) / n;
        if (ratio - 1.0).abs() > clip {
            stats.clip_fraction += 1.0 / n;
        }
        stats.max_ratio_deviation = stats.max_ratio_deviation.max((ratio - 1.0).abs());

        let saturated = (a > 0.0 && ratio > 1.0 + clip) || (a < 0.0 && ratio < 1.0 - clip);
        let d_logp = if saturated { 0.0 } else { -unclipped_term / n };
        let d_ent = -entropy_coef / n;
        grads.push(
            t.d_log_prob
                .iter()
                .zip(&t.d_entropy)
                .map(|(dl, de)| d_logp * dl + d_ent * de)
                .collect(),
        );
    }
    stats.loss = stats.surrogate - entropy_coef * stats.entropy;
    (stats, grads)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub minibatches: usize,
    /// Loss of the very first minibatch, before any parameter moved.
    pub first_surrogate: f64,
    pub first_max_ratio_deviation: f64,
    /// Mean normalized advantage of that first minibatch.
    pub first_mean_advantage: f64,
    /// A non-finite loss or gradient aborted the update and the learner was
    /// restored to its state before the call.
    pub rolled_back: bool,
}

fn clip_norm(g: &mut [f64], max_norm: f64) -> f64 {
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for x in g.iter_mut() {
            *x *= s;
        }
    }
    norm
}

/// Runs `epochs` passes of shuffled minibatch PPO over a finished buffer.
pub fn ppo_update<L: Learner, R: Rng>(
    learner: &mut L,
    buffer: &RolloutBuffer,
    config: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateStats, PpoError> {
    if buffer.advantages().len() != buffer.len() || buffer.is_empty() {
        return Err(PpoError::NotFinished);
    }
    let snapshot = learner.clone();
    let mut stats = UpdateStats::default();
    let mut indices: Vec<usize> = (0..buffer.len()).collect();
    let old: Vec<f64> = buffer.transitions().iter().map(|t| t.log_prob).collect();

    for _ in 0..config.epochs {
        indices.shuffle(rng);
        for chunk in indices.chunks(config.minibatch) {
            let terms = learner.policy_terms(buffer, chunk)?;
            let old_lp: Vec<f64> = chunk.iter().map(|&i| old[i]).collect();
            let adv: Vec<f64> = chunk.iter().map(|&i| buffer.advantages()[i]).collect();
            let (pstats, d_dist) = clipped_objective(&terms, &old_lp, &adv, config.clip, config.entropy_coef);
            let mut pgrad = learner.policy_backward(&d_dist);

            let values = learner.value_predictions(buffer, chunk)?;
            let targets: Vec<f64> = chunk.iter().map(|&i| buffer.returns()[i]).collect();
            let (vloss, d_values) = crate::net::dist::mse_loss(&values, &targets);
            let mut vgrad = learner.value_backward(&d_values);

            let finite = pstats.loss.is_finite()
                && vloss.is_finite()
                && pgrad.iter().chain(&vgrad).all(|g| g.is_finite());
            if !finite {
                log::warn!("non-finite PPO loss; rolling back this update");
                *learner = snapshot;
                return Ok(UpdateStats {
                    rolled_back: true,
                    ..stats
                });
            }
            if stats.minibatches == 0 {
                stats.first_surrogate = pstats.surrogate;
                stats.first_max_ratio_deviation = pstats.max_ratio_deviation;
                stats.first_mean_advantage = adv.iter().sum::<f64>() / adv.len() as f64;
            }
            clip_norm(&mut pgrad, config.max_grad_norm);
            clip_norm(&mut vgrad, config.max_grad_norm);
            learner.apply(&pgrad, &vgrad, config);

            stats.minibatches += 1;
            stats.policy_loss += pstats.loss;
            stats.value_loss += vloss;
            stats.entropy += pstats.entropy;
            stats.approx_kl += pstats.approx_kl;
            stats.clip_fraction += pstats.clip_fraction;
        }
    }
    let m = stats.minibatches as f64;
    stats.policy_loss /= m;
    stats.value_loss /= m;
    stats.entropy /= m;
    stats.approx_kl /= m;
    stats.clip_fraction /= m;
    Ok(stats)
}

/// [`ActorCritic`] plus its two Adam states.
#[derive(Clone, Debug)]
pub struct NetLearner<T> {
    pub model: ActorCritic<T>,
    /// Covers the policy network followed by the standalone log-std block.
    pub policy_adam: AdamState<T>,
    pub value_adam: AdamState<T>,
    policy_cache: Option<ForwardCache<T>>,
    value_cache: Option<ForwardCache<T>>,
}

impl<T: Real> NetLearner<T> {
    pub fn new(model: ActorCritic<T>, config: &PpoConfig) -> Self {
        let adam = |n| AdamState::with_betas(n, config.adam_beta1, config.adam_beta2, config.adam_eps);
        Self {
            policy_adam: adam(model.policy_param_count()),
            value_adam: adam(model.value.param_count()),
            model,
            policy_cache: None,
            value_cache: None,
        }
    }

    pub fn from_parts(model: ActorCritic<T>, policy_adam: AdamState<T>, value_adam: AdamState<T>) -> Self {
        Self {
            model,
            policy_adam,
            value_adam,
            policy_cache: None,
            value_cache: None,
        }
    }

    fn gather(buffer: &RolloutBuffer, indices: &[usize]) -> (Vec<T>, Vec<T>) {
        let ts = buffer.transitions();
        let per = ts[indices[0]].maps.len();
        let mut maps = Vec::with_capacity(indices.len() * per);
        let mut goals = Vec::with_capacity(indices.len() * 3);
        for &i in indices {
            maps.extend(ts[i].maps.iter().map(|&x| T::of(x as f64)));
            goals.extend(ts[i].goal.iter().map(|&x| T::of(x as f64)));
        }
        (maps, goals)
    }
}

impl<T: Real> Learner for NetLearner<T> {
    fn policy_terms(&mut self, buffer: &RolloutBuffer, indices: &[usize]) -> Result<Vec<LogProbTerms>, NetError> {
        let (maps, goals) = Self::gather(buffer, indices);
        let cache = self.model.policy_forward(&maps, &goals, indices.len())?;
        let params = self.model.dist_params(&cache.output);
        self.policy_cache = Some(cache);
        Ok(indices
            .iter()
            .zip(params)
            .map(|(&i, p)| match buffer.transitions()[i].action {
                RawAction::Discrete(k) => categorical_terms(&p, k),
                RawAction::Continuous(a) => gaussian_terms(&[p[0], p[1]], &[p[2], p[3]], &a),
            })
            .collect())
    }

    fn policy_backward(&mut self, d_dist: &[Vec<f64>]) -> Vec<f64> {
        let cache = self.policy_cache.take().expect("policy_terms before policy_backward");
        let (d_head, d_log_std) = self.model.split_dist_grads(d_dist);
        let g = self.model.policy.backward(&cache, &d_head);
        g.iter().chain(&d_log_std).map(|x| x.f64()).collect()
    }

    fn value_predictions(&mut self, buffer: &RolloutBuffer, indices: &[usize]) -> Result<Vec<f64>, NetError> {
        let (maps, goals) = Self::gather(buffer, indices);
        let cache = self.model.value_forward(&maps, &goals, indices.len())?;
        let v = cache.output.iter().map(|x| x.f64()).collect();
        self.value_cache = Some(cache);
        Ok(v)
    }

    fn value_backward(&mut self, d_values: &[f64]) -> Vec<f64> {
        let cache = self.value_cache.take().expect("value_predictions before value_backward");
        let d: Vec<T> = d_values.iter().map(|&x| T::of(x)).collect();
        self.model.value.backward(&cache, &d).iter().map(|x| x.f64()).collect()
    }

    fn apply(&mut self, policy_grad: &[f64], value_grad: &[f64], config: &PpoConfig) {
        let n = self.model.policy.param_count();
        let mut params: Vec<T> = self.model.policy.params.clone();
        params.extend_from_slice(&self.model.log_std);
        let g: Vec<T> = policy_grad.iter().map(|&x| T::of(x)).collect();
        adam_step(&mut self.policy_adam, &mut params, &g, config.lr_policy);
        self.model.log_std.copy_from_slice(&params[n..]);
        params.truncate(n);
        self.model.policy.params = params;

        let g: Vec<T> = value_grad.iter().map(|&x| T::of(x)).collect();
        adam_step(&mut self.value_adam, &mut self.model.value.params, &g, config.lr_value);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::dist::softmax;
    use crate::ppo::buffer::Transition;
    use rand::SeedableRng;
    use std::collections::BTreeMap;

    /// Two-action categorical policy whose logits are the parameters
    /// themselves, and a constant value `w`.
    #[derive(Clone, Debug)]
    struct ToyHead {
        theta: [f64; 2],
        w: f64,
        policy_adam: AdamState<f64>,
        value_adam: AdamState<f64>,
    }

    impl Learner for ToyHead {
        fn policy_terms(&mut self, buffer: &RolloutBuffer, indices: &[usize]) -> Result<Vec<LogProbTerms>, NetError> {
            Ok(indices
                .iter()
                .map(|&i| match buffer.transitions()[i].action {
                    RawAction::Discrete(k) => categorical_terms(&self.theta, k),
                    _ => unreachable!(),
                })
                .collect())
        }

        fn policy_backward(&mut self, d_dist: &[Vec<f64>]) -> Vec<f64> {
            let mut g = vec![0.0; 2];
            for row in d_dist {
                g[0] += row[0];
                g[1] += row[1];
            }
            g
        }

        fn value_predictions(&mut self, _: &RolloutBuffer, indices: &[usize]) -> Result<Vec<f64>, NetError> {
            Ok(vec![self.w; indices.len()])
        }

        fn value_backward(&mut self, d: &[f64]) -> Vec<f64> {
            vec![d.iter().sum()]
        }

        fn apply(&mut self, pg: &[f64], vg: &[f64], config: &PpoConfig) {
            adam_step(&mut self.policy_adam, &mut self.theta, pg, config.lr_policy);
            let mut w = [self.w];
            adam_step(&mut self.value_adam, &mut w, vg, config.lr_value);
            self.w = w[0];
        }
    }

    fn toy_buffer(theta: [f64; 2]) -> RolloutBuffer {
        let p = softmax(&theta);
        let mut b = RolloutBuffer::new(4);
        for (k, (action, reward)) in [(0, 1.0), (1, -1.0), (0, 2.0), (1, 0.5)].into_iter().enumerate() {
            b.push(Transition {
                maps: Vec::new(),
                goal: [0.0; 3],
                action: RawAction::Discrete(action),
                log_prob: p[action].ln(),
                reward,
                value: 0.0,
                done: true,
                env_id: 0,
                robot: k,
            })
            .unwrap();
        }
        b.finish(&BTreeMap::new(), 0.99, 0.95).unwrap();
        b
    }

    #[test]
    fn toy_head_single_step_matches_hand_computation() {
        let theta = [0.3, -0.2];
        let buffer = toy_buffer(theta);
        let config = PpoConfig {
            epochs: 1,
            minibatch: 4,
            lr_policy: 1e-2,
            lr_value: 1e-2,
            max_grad_norm: 1e9,
            ..Default::default()
        };
        let mut toy = ToyHead {
            theta,
            w: 0.0,
            policy_adam: AdamState::new(2),
            value_adam: AdamState::new(1),
        };
        let stats = ppo_update(&mut toy, &buffer, &config, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0)).unwrap();

        // By hand: terminal single steps, so A = r; normalized over the batch.
        let r = [1.0, -1.0, 2.0, 0.5];
        let mean = r.iter().sum::<f64>() / 4.0;
        let sd = (r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
        let a: Vec<f64> = r.iter().map(|x| (x - mean) / sd).collect();
        let actions = [0usize, 1, 0, 1];
        let p = softmax(&theta);
        let h = -(p[0] * p[0].ln() + p[1] * p[1].ln());
        let mut g = [0.0; 2];
        for (ai, &k) in a.iter().zip(&actions) {
            for j in 0..2 {
                let dlogp = if j == k { 1.0 } else { 0.0 } - p[j];
                let dh = -p[j] * (p[j].ln() + h);
                // Ratio is 1, so d(-rA)/dlogp = -A.
                g[j] += (-ai * dlogp - config.entropy_coef * dh) / 4.0;
            }
        }
        for j in 0..2 {
            let expected = theta[j] - 1e-2 * g[j] / (g[j].abs() + 1e-8);
            assert!((toy.theta[j] - expected).abs() < 1e-6, "{j}: {} vs {expected}", toy.theta[j]);
        }
        assert!(stats.first_max_ratio_deviation < 1e-6);
        assert!((stats.first_surrogate + stats.first_mean_advantage).abs() < 1e-9);
        assert!(!stats.rolled_back);
    }

    #[test]
    fn saturated_clip_has_no_surrogate_gradient() {
        let t = categorical_terms(&[0.0, 0.0], 0);
        // Ratio = exp(0.5) > 1.2 with positive advantage.
        let old = t.log_prob - 0.5;
        let (stats, grads) = clipped_objective(&[t.clone()], &[old], &[1.0], 0.2, 0.0);
        assert!(grads[0].iter().all(|&g| g == 0.0));
        assert_eq!(stats.clip_fraction, 1.0);
        // Clipped surrogate is never more attractive than the unclipped one.
        assert!(-stats.surrogate <= 0.5f64.exp() * 1.0);
    }

    #[test]
    fn non_finite_loss_rolls_back() {
        let buffer = toy_buffer([0.0, 0.0]);
        let mut toy = ToyHead {
            theta: [f64::NAN, 0.0],
            w: 0.0,
            policy_adam: AdamState::new(2),
            value_adam: AdamState::new(1),
        };
        let before = toy.clone();
        let stats = ppo_update(&mut toy, &buffer, &PpoConfig::default(), &mut rand_chacha::ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(stats.rolled_back);
        assert_eq!(toy.policy_adam, before.policy_adam);
        assert_eq!(toy.w, before.w);
    }

}
