//! Action distributions and the losses built on them. All math runs in
//! `f64`; the callers convert at the network boundary.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::world::{Action, MAX_ANGULAR_VELOCITY, MAX_LINEAR_VELOCITY};

const HALF_LOG_TWO_PI: f64 = 0.918_938_533_204_672_8;

/// Distribution the policy head describes for one observation.
#[derive(Clone, Debug, PartialEq)]
pub enum PolicyOutput {
    Discrete { probs: Vec<f64> },
    Continuous { mean: [f64; 2], log_std: [f64; 2] },
}

/// The sampled action as the distribution sees it: a grid index, or the
/// Gaussian draw before clipping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RawAction {
    Discrete(usize),
    Continuous([f64; 2]),
}

impl RawAction {
    /// The command actually sent to the robot.
    pub fn to_action(self) -> Action {
        match self {
            RawAction::Discrete(k) => Action::from_discrete(k).expect("index within the action grid"),
            RawAction::Continuous([v, w]) => Action::new(
                v.clamp(0.0, MAX_LINEAR_VELOCITY),
                w.clamp(-MAX_ANGULAR_VELOCITY, MAX_ANGULAR_VELOCITY),
            ),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sampled {
    pub action: Action,
    pub raw: RawAction,
    pub log_prob: f64,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&z| z - lse).collect()
}

/// Categorical draw, or Gaussian draw with the log-probability of the
/// unclipped sample.
pub fn sample_action<R: Rng>(out: &PolicyOutput, rng: &mut R) -> Sampled {
    match out {
        PolicyOutput::Discrete { probs } => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut k = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
            for (i, &p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    k = i;
                    break;
                }
            }
            let raw = RawAction::Discrete(k);
            Sampled {
                action: raw.to_action(),
                raw,
                log_prob: probs[k].ln(),
            }
        }
        PolicyOutput::Continuous { mean, log_std } => {
            let mut a = [0.0; 2];
            for i in 0..2 {
                let z: f64 = rng.sample(StandardNormal);
                a[i] = mean[i] + log_std[i].exp() * z;
            }
            let raw = RawAction::Continuous(a);
            Sampled {
                action: raw.to_action(),
                raw,
                log_prob: gaussian_log_prob(mean, log_std, &a),
            }
        }
    }
}

/// Most likely action: the arg-max grid entry or the clipped mean.
pub fn greedy_action(out: &PolicyOutput) -> Action {
    match out {
        PolicyOutput::Discrete { probs } => {
            let mut best = 0;
            for (i, &p) in probs.iter().enumerate() {
                if p > probs[best] {
                    best = i;
                }
            }
            RawAction::Discrete(best).to_action()
        }
        PolicyOutput::Continuous { mean, .. } => RawAction::Continuous(*mean).to_action(),
    }
}

pub fn gaussian_log_prob(mean: &[f64; 2], log_std: &[f64; 2], a: &[f64; 2]) -> f64 {
    (0..2)
        .map(|i| {
            let z = (a[i] - mean[i]) * (-log_std[i]).exp();
            -0.5 * z * z - log_std[i] - HALF_LOG_TWO_PI
        })
        .sum()
}

/// Log-probability and entropy of one action together with their
/// gradients with respect to the distribution parameters.
///
/// Parameters are the logits for the categorical case and
/// `[mean_v, mean_w, log_std_v, log_std_w]` for the Gaussian case.
#[derive(Clone, Debug, PartialEq)]
pub struct LogProbTerms {
    pub log_prob: f64,
    pub entropy: f64,
    pub d_log_prob: Vec<f64>,
    pub d_entropy: Vec<f64>,
}

pub fn categorical_terms(logits: &[f64], k: usize) -> LogProbTerms {
    let logp = log_softmax(logits);
    let p: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
    let entropy = -p.iter().zip(&logp).map(|(p, l)| p * l).sum::<f64>();
    let d_log_prob = p
        .iter()
        .enumerate()
        .map(|(j, &pj)| if j == k { 1.0 - pj } else { -pj })
        .collect();
    let d_entropy = p.iter().zip(&logp).map(|(&pj, &lj)| -pj * (lj + entropy)).collect();
    LogProbTerms {
        log_prob: logp[k],
        entropy,
        d_log_prob,
        d_entropy,
    }
}

pub fn gaussian_terms(mean: &[f64; 2], log_std: &[f64; 2], a: &[f64; 2]) -> LogProbTerms {
    let mut d = vec![0.0; 4];
    for i in 0..2 {
        let inv_var = (-2.0 * log_std[i]).exp();
        let diff = a[i] - mean[i];
        d[i] = diff * inv_var;
        d[2 + i] = diff * diff * inv_var - 1.0;
    }
    LogProbTerms {
        log_prob: gaussian_log_prob(mean, log_std, a),
        entropy: log_std.iter().map(|s| s + 0.5 + HALF_LOG_TWO_PI).sum(),
        d_log_prob: d,
        d_entropy: vec![0.0, 0.0, 1.0, 1.0],
    }
}

/// Mean softmax cross-entropy against target indices, with the gradient per logit.
pub fn cross_entropy_loss(logits: &[f64], classes: usize, targets: &[usize]) -> (f64, Vec<f64>) {
    let n = targets.len() as f64;
    let mut grad = vec![0.0; logits.len()];
    let mut loss = 0.0;
    for (b, &k) in targets.iter().enumerate() {
        let row = &logits[b * classes..(b + 1) * classes];
        let t = categorical_terms(row, k);
        loss -= t.log_prob / n;
        for (g, d) in grad[b * classes..(b + 1) * classes].iter_mut().zip(&t.d_log_prob) {
            *g = -d / n;
        }
    }
    (loss, grad)
}

/// Mean squared error with its gradient per prediction.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let n = pred.len() as f64;
    let loss = pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n;
    let grad = pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect();
    (loss, grad)
}

/// Mean negative Gaussian log-likelihood. Returns gradients with respect
/// to means and log-stds, each `batch x 2`.
pub fn gaussian_nll_loss(
    means: &[[f64; 2]],
    log_stds: &[[f64; 2]],
    actions: &[[f64; 2]],
) -> (f64, Vec<[f64; 2]>, Vec<[f64; 2]>) {
    let n = actions.len() as f64;
    let mut loss = 0.0;
    let mut dm = Vec::with_capacity(actions.len());
    let mut ds = Vec::with_capacity(actions.len());
    for ((m, s), a) in means.iter().zip(log_stds).zip(actions) {
        let t = gaussian_terms(m, s, a);
        loss -= t.log_prob / n;
        dm.push([-t.d_log_prob[0] / n, -t.d_log_prob[1] / n]);
        ds.push([-t.d_log_prob[2] / n, -t.d_log_prob[3] / n]);
    }
    (loss, dm, ds)
}
