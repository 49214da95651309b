//! Losses and their exact gradients.

use serde::{Deserialize, Serialize};

use super::{log_prob_and_entropy, NetInput, PolicyParams, LOG_STD_MAX, LOG_STD_MIN};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geometry::Vec2;

/// Samples per gradient chunk. Chunks are reduced in index order, so the
/// result does not depend on how many threads computed them.
pub const GRADIENT_CHUNK: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LossSpec {
    /// `−min(ρA, clip(ρ, 1±ε)A) + c_v (V − R)² − c_H H`, averaged.
    Ppo { clip_eps: f64, vf_coef: f64, ent_coef: f64 },
    /// `(V − R)²`, averaged; touches the value network only.
    ValueMse,
}

/// One training example.
#[derive(Clone, Debug)]
pub struct Sample<'a> {
    pub input: &'a NetInput,
    /// Pre-clamp action that was executed.
    pub action: Vec2,
    pub old_log_prob: f64,
    pub advantage: f64,
    /// Regression target for the value head.
    pub ret: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    /// Mean of `(ρ − 1) − ln ρ`, a non-negative KL estimate.
    pub approx_kl: f64,
}

impl LossStats {
    fn add(&mut self, o: &LossStats) {
        self.loss += o.loss;
        self.policy_loss += o.policy_loss;
        self.value_loss += o.value_loss;
        self.entropy += o.entropy;
        self.clip_fraction += o.clip_fraction;
        self.approx_kl += o.approx_kl;
    }

    fn scale(&mut self, s: f64) {
        self.loss *= s;
        self.policy_loss *= s;
        self.value_loss *= s;
        self.entropy *= s;
        self.clip_fraction *= s;
        self.approx_kl *= s;
    }
}

impl PolicyParams {
    /// Mean loss over `batch` and its exact gradient with respect to
    /// `theta`. Fails on an empty batch or a non-finite loss.
    pub fn loss_and_grad(&self, batch: &[Sample], spec: &LossSpec, exec: Exec) -> Result<(LossStats, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::InvalidConfig("empty batch".into()));
        }
        let chunks: Vec<&[Sample]> = batch.chunks(GRADIENT_CHUNK).collect();
        let partials = exec.map(chunks.len(), |c| {
            let mut grad = vec![0.0; self.theta.len()];
            let mut stats = LossStats::default();
            for s in chunks[c] {
                stats.add(&self.accumulate(s, spec, &mut grad));
            }
            (stats, grad)
        });
        let mut stats = LossStats::default();
        let mut grad = vec![0.0; self.theta.len()];
        for (s, g) in &partials {
            stats.add(s);
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        let inv = 1.0 / batch.len() as f64;
        stats.scale(inv);
        grad.iter_mut().for_each(|g| *g *= inv);
        if !stats.loss.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        Ok((stats, grad))
    }

    /// Adds one sample's (unaveraged) gradient into `grad`.
    fn accumulate(&self, s: &Sample, spec: &LossSpec, grad: &mut [f64]) -> LossStats {
        let arch = &self.arch;
        let value_cache = arch.value.forward(&self.theta, s.input);
        let value = value_cache.out[0];
        let residual = value - s.ret;

        match *spec {
            LossSpec::ValueMse => {
                arch.value.backward(&self.theta, &value_cache, &[2.0 * residual], grad);
                let l = residual * residual;
                LossStats { loss: l, value_loss: l, ..Default::default() }
            }
            LossSpec::Ppo { clip_eps, vf_coef, ent_coef } => {
                let policy_cache = arch.policy.forward(&self.theta, s.input);
                let out = self.output(&policy_cache.out, value);
                let (log_prob, entropy) = log_prob_and_entropy(&out, s.action);
                let ratio = (log_prob - s.old_log_prob).exp();
                let surr = ratio * s.advantage;
                let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps) * s.advantage;
                let policy_loss = -surr.min(clipped);
                // The unclipped branch is active iff it is the smaller one.
                let d_log_prob = if surr <= clipped { -surr } else { 0.0 };

                let mean = [out.action_mean.x, out.action_mean.y];
                let std = [out.action_std.x, out.action_std.y];
                let action = [s.action.x, s.action.y];
                let mut d_mean = [0.0; 2];
                let raw_log_std = self.log_std();
                for d in 0..2 {
                    let z = (action[d] - mean[d]) / std[d];
                    d_mean[d] = d_log_prob * z / std[d];
                    let d_log_std = d_log_prob * (z * z - 1.0) - ent_coef;
                    if (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw_log_std[d]) {
                        grad[arch.log_std + d] += d_log_std;
                    }
                }
                arch.policy.backward(&self.theta, &policy_cache, &d_mean, grad);
                arch.value.backward(&self.theta, &value_cache, &[2.0 * vf_coef * residual], grad);

                let value_loss = residual * residual;
                LossStats {
                    loss: policy_loss + vf_coef * value_loss - ent_coef * entropy,
                    policy_loss,
                    value_loss,
                    entropy,
                    clip_fraction: if (ratio - 1.0).abs() > clip_eps { 1.0 } else { 0.0 },
                    approx_kl: (ratio - 1.0) - (log_prob - s.old_log_prob),
                }
            }
        }
    }
}
