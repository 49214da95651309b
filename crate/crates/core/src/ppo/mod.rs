//! Shared-parameter PPO: every agent in every world acts with, and trains,
//! the same [`PolicyParams`].

mod gae;
mod rollout;
mod train;

pub use gae::compute_gae;
pub use rollout::{collect_rollouts, evaluate, run_episode, Rollout, Segment, Transition, WorldRunner};
pub use train::{train, IterationLog, Trainer, TrainingLog};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geometry::Vec2;
use crate::policy::{LossSpec, LossStats, NetInput, PolicyParams, Sample};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoConfig {
    #[serde(default = "defaults::gamma")]
    pub gamma: f64,
    #[serde(default = "defaults::gae_lambda")]
    pub gae_lambda: f64,
    #[serde(default = "defaults::clip_eps")]
    pub clip_eps: f64,
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    #[serde(default = "defaults::minibatch_size")]
    pub minibatch_size: usize,
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub ent_coef: f64,
    #[serde(default = "defaults::vf_coef")]
    pub vf_coef: f64,
    /// Global gradient-norm clip; 0 disables it.
    #[serde(default = "defaults::max_grad_norm")]
    pub max_grad_norm: f64,
    /// Decision steps each world advances per iteration.
    #[serde(default = "defaults::steps_per_iteration")]
    pub steps_per_iteration: usize,
    #[serde(default = "defaults::n_parallel_worlds")]
    pub n_parallel_worlds: usize,
    #[serde(default)]
    pub seed: u64,
}

mod defaults {
    pub fn gamma() -> f64 {
        0.99
    }
    pub fn gae_lambda() -> f64 {
        0.95
    }
    pub fn clip_eps() -> f64 {
        0.2
    }
    pub fn epochs() -> usize {
        4
    }
    pub fn minibatch_size() -> usize {
        256
    }
    pub fn learning_rate() -> f64 {
        3e-4
    }
    pub fn vf_coef() -> f64 {
        0.5
    }
    pub fn max_grad_norm() -> f64 {
        0.5
    }
    pub fn steps_per_iteration() -> usize {
        256
    }
    pub fn n_parallel_worlds() -> usize {
        4
    }
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: defaults::gamma(),
            gae_lambda: defaults::gae_lambda(),
            clip_eps: defaults::clip_eps(),
            epochs: defaults::epochs(),
            minibatch_size: defaults::minibatch_size(),
            learning_rate: defaults::learning_rate(),
            ent_coef: 0.0,
            vf_coef: defaults::vf_coef(),
            max_grad_norm: defaults::max_grad_norm(),
            steps_per_iteration: defaults::steps_per_iteration(),
            n_parallel_worlds: defaults::n_parallel_worlds(),
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(format!("ppo: {msg}")));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if !(self.clip_eps > 0.0) {
            return bad("clip_eps must be positive");
        }
        if self.minibatch_size == 0 || self.steps_per_iteration == 0 || self.n_parallel_worlds == 0 {
            return bad("minibatch_size, steps_per_iteration and n_parallel_worlds must be positive");
        }
        if !(self.learning_rate >= 0.0) || !(self.max_grad_norm >= 0.0) {
            return bad("learning_rate and max_grad_norm must be non-negative");
        }
        Ok(())
    }

    fn loss(&self) -> LossSpec {
        LossSpec::Ppo { clip_eps: self.clip_eps, vf_coef: self.vf_coef, ent_coef: self.ent_coef }
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for ((p, g), (m, v)) in theta.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

/// Flattened training data for one update.
#[derive(Clone, Debug, Default)]
pub struct Batch {
    pub inputs: Vec<NetInput>,
    pub actions: Vec<Vec2>,
    pub log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub loss: LossStats,
    pub advantage_mean: f64,
    pub advantage_std: f64,
    pub grad_norm: f64,
    pub n_minibatches: usize,
    /// A non-finite loss or parameter stopped the update and the parameters
    /// were restored.
    pub aborted: bool,
}

/// Rescales to zero mean and unit variance; returns `(mean, std)` before.
fn normalize(values: &mut [f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    for v in values.iter_mut() {
        *v = (*v - mean) / (std + 1e-8);
    }
    (mean, std)
}

fn clip_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// Runs `cfg.epochs` passes of shuffled minibatch updates over `batch`.
pub fn ppo_update<R: Rng + ?Sized>(
    params: &mut PolicyParams,
    opt: &mut Adam,
    batch: &Batch,
    cfg: &PpoConfig,
    rng: &mut R,
    exec: Exec,
) -> Result<UpdateStats> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("empty rollout buffer".into()));
    }
    let mut advantages = batch.advantages.clone();
    let (advantage_mean, advantage_std) = normalize(&mut advantages);
    let snapshot = (params.theta.clone(), opt.clone());
    let spec = cfg.loss();

    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut stats = UpdateStats { advantage_mean, advantage_std, ..Default::default() };
    let mut sum = LossStats::default();
    'epochs: for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for idx in order.chunks(cfg.minibatch_size) {
            let samples: Vec<Sample> = idx
                .iter()
                .map(|&i| Sample {
                    input: &batch.inputs[i],
                    action: batch.actions[i],
                    old_log_prob: batch.log_probs[i],
                    advantage: advantages[i],
                    ret: batch.returns[i],
                })
                .collect();
            let (loss, mut grad) = match params.loss_and_grad(&samples, &spec, exec) {
                Ok(r) => r,
                Err(Error::NonFiniteLoss) => {
                    stats.aborted = true;
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            stats.grad_norm += clip_norm(&mut grad, cfg.max_grad_norm);
            opt.step(&mut params.theta, &grad, cfg.learning_rate);
            params.clamp_log_std();
            if !params.is_finite() {
                stats.aborted = true;
                break 'epochs;
            }
            sum.loss += loss.loss;
            sum.policy_loss += loss.policy_loss;
            sum.value_loss += loss.value_loss;
            sum.entropy += loss.entropy;
            sum.clip_fraction += loss.clip_fraction;
            sum.approx_kl += loss.approx_kl;
            stats.n_minibatches += 1;
        }
    }
    if stats.aborted {
        params.theta = snapshot.0;
        *opt = snapshot.1;
    }
    if stats.n_minibatches > 0 {
        let k = stats.n_minibatches as f64;
        stats.loss = LossStats {
            loss: sum.loss / k,
            policy_loss: sum.policy_loss / k,
            value_loss: sum.value_loss / k,
            entropy: sum.entropy / k,
            clip_fraction: sum.clip_fraction / k,
            approx_kl: sum.approx_kl / k,
        };
        stats.grad_norm /= k;
    }
    Ok(stats)
}

#[cfg(test)]
mod tests;
