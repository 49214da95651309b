//! Shared policy and value networks.
//!
//! Both networks have the same shape: an MLP trunk over proprioception (and
//! rays, when present), a Deep-Sets encoder `φ(Σ ψ(x_i))` over neighbor
//! features (when present), and a linear head over the concatenation. The
//! policy head emits a 2D Gaussian mean with a trainable, state-independent
//! log standard deviation; the value head emits one scalar. All weights live
//! in one flat `Vec<f64>` described by a [`ParamLayout`].

mod checkpoint;
mod layers;
mod loss;

pub use checkpoint::{Checkpoint, Tensor, CHECKPOINT_FORMAT};
pub use layers::{Activation, ParamLayout, Segment};
pub use loss::{LossSpec, LossStats, Sample, GRADIENT_CHUNK};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::perception::{NeighborFeature, Observation, PerceptionConfig, PerceptionMode, NEIGHBOR_FEATURES, PROPRIO_LEN};
use crate::sim::DynamicsConfig;
use layers::{Linear, Mlp};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Positions and distances are divided by this before entering the network.
pub const POSITION_SCALE: f64 = 10.0;

const HIDDEN_GAIN: f64 = std::f64::consts::SQRT_2;
const POLICY_HEAD_GAIN: f64 = 0.01;
const VALUE_HEAD_GAIN: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    #[serde(default = "defaults::trunk")]
    pub trunk: Vec<usize>,
    #[serde(default = "defaults::set_layer")]
    pub psi: Vec<usize>,
    #[serde(default = "defaults::set_layer")]
    pub phi: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
}

mod defaults {
    pub fn trunk() -> Vec<usize> {
        vec![64, 64]
    }
    pub fn set_layer() -> Vec<usize> {
        vec![64]
    }
}

impl Default for NetConfig {
    fn default() -> Self {
        Self { trunk: defaults::trunk(), psi: defaults::set_layer(), phi: defaults::set_layer(), activation: Activation::Tanh }
    }
}

pub const MIN_WIDTH: usize = 32;
pub const MAX_WIDTH: usize = 128;

impl NetConfig {
    /// Trunk depth 2–6; ψ and φ at least one layer each; every width 32–128.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(2..=6).contains(&self.trunk.len()) {
            return bad(format!("trunk depth {} outside 2..=6", self.trunk.len()));
        }
        for (name, widths) in [("psi", &self.psi), ("phi", &self.phi)] {
            if !(1..=6).contains(&widths.len()) {
                return bad(format!("{name} depth {} outside 1..=6", widths.len()));
            }
        }
        for (name, widths) in [("trunk", &self.trunk), ("psi", &self.psi), ("phi", &self.phi)] {
            if let Some(w) = widths.iter().find(|w| !(MIN_WIDTH..=MAX_WIDTH).contains(*w)) {
                return bad(format!("{name} width {w} outside {MIN_WIDTH}..={MAX_WIDTH}"));
            }
        }
        Ok(())
    }
}

/// What the network expects to see, fixed at construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputSpec {
    pub mode: PerceptionMode,
    /// Total ray entries (rays × stacked frames); 0 without rays.
    pub ray_len: usize,
    /// Velocity normaliser.
    pub v_max: f64,
}

impl InputSpec {
    pub fn new(perception: &PerceptionConfig, dynamics: &DynamicsConfig) -> Self {
        let ray_len = if perception.mode.uses_rays() { perception.ray_block_len() } else { 0 };
        Self { mode: perception.mode, ray_len, v_max: dynamics.v_max }
    }

    fn trunk_input(&self) -> usize {
        PROPRIO_LEN + self.ray_len
    }
}

/// An observation rescaled for the network.
#[derive(Clone, Debug, PartialEq)]
pub struct NetInput {
    pub trunk: Vec<f64>,
    pub neighbors: Option<Vec<Vec<f64>>>,
}

impl InputSpec {
    /// Checks the layout and rescales positions, velocities and distances.
    pub fn normalize(&self, obs: &Observation) -> Result<NetInput> {
        if obs.proprio.len() != PROPRIO_LEN {
            return Err(Error::LayoutMismatch(format!("proprio has {} entries, expected {PROPRIO_LEN}", obs.proprio.len())));
        }
        match (&obs.rays, self.mode.uses_rays()) {
            (Some(r), true) if r.len() != self.ray_len => {
                return Err(Error::LayoutMismatch(format!("{} ray entries, expected {}", r.len(), self.ray_len)));
            }
            (Some(_), false) => return Err(Error::LayoutMismatch("unexpected ray block".into())),
            (None, true) => return Err(Error::LayoutMismatch("missing ray block".into())),
            _ => {}
        }
        match (&obs.neighbors, self.mode.uses_neighbors()) {
            (Some(_), false) => return Err(Error::LayoutMismatch("unexpected neighbor set".into())),
            (None, true) => return Err(Error::LayoutMismatch("missing neighbor set".into())),
            _ => {}
        }
        let p = &obs.proprio;
        let s = POSITION_SCALE;
        let v = self.v_max;
        let mut trunk = vec![p[0] / s, p[1] / s, p[2] / s, p[3] / s, p[4], p[5], p[6] / v, p[7] / v];
        if let Some(rays) = &obs.rays {
            trunk.extend_from_slice(rays);
        }
        let neighbors = obs.neighbors.as_ref().map(|ns| ns.iter().map(|n| self.normalize_neighbor(n)).collect());
        Ok(NetInput { trunk, neighbors })
    }

    pub fn normalize_neighbor(&self, n: &NeighborFeature) -> Vec<f64> {
        let s = POSITION_SCALE;
        let v = self.v_max;
        vec![n[0] / s, n[1] / s, n[2] / v, n[3] / v, n[4] / s]
    }
}

/// One of the two networks.
#[derive(Clone, Debug, PartialEq)]
struct Tower {
    trunk: Mlp,
    /// `(ψ, φ)` when the observation carries neighbors.
    set: Option<(Mlp, Mlp)>,
    head: Linear,
}

/// Everything `Tower::backward` needs from the forward pass.
#[derive(Clone, Debug)]
struct TowerCache {
    trunk: Vec<Vec<f64>>,
    psi: Vec<Vec<Vec<f64>>>,
    phi: Vec<Vec<f64>>,
    head_in: Vec<f64>,
    out: Vec<f64>,
}

impl Tower {
    fn build(layout: &mut ParamLayout, prefix: &str, net: &NetConfig, input: &InputSpec, n_out: usize) -> Self {
        let n_trunk = input.trunk_input();
        let trunk = layout.mlp(&format!("{prefix}.trunk"), n_trunk, &net.trunk, net.activation);
        let mut head_in = trunk.out_dim(n_trunk);
        let set = input.mode.uses_neighbors().then(|| {
            let psi = layout.mlp(&format!("{prefix}.psi"), NEIGHBOR_FEATURES, &net.psi, net.activation);
            let n_sum = psi.out_dim(NEIGHBOR_FEATURES);
            let phi = layout.mlp(&format!("{prefix}.phi"), n_sum, &net.phi, net.activation);
            head_in += phi.out_dim(n_sum);
            (psi, phi)
        });
        let head = layout.linear(&format!("{prefix}.head"), head_in, n_out);
        Self { trunk, set, head }
    }

    fn init<R: Rng + ?Sized>(&self, theta: &mut [f64], head_gain: f64, rng: &mut R) {
        self.trunk.init(theta, HIDDEN_GAIN, rng);
        if let Some((psi, phi)) = &self.set {
            psi.init(theta, HIDDEN_GAIN, rng);
            phi.init(theta, HIDDEN_GAIN, rng);
        }
        self.head.init(theta, head_gain, rng);
    }

    fn neighbor_sum(psi: &Mlp, theta: &[f64], neighbors: &[Vec<f64>]) -> (Vec<Vec<Vec<f64>>>, Vec<f64>) {
        let width = psi.out_dim(NEIGHBOR_FEATURES);
        let mut sum = vec![0.0; width];
        let mut caches = Vec::with_capacity(neighbors.len());
        for n in neighbors {
            let acts = psi.forward(theta, n.clone());
            for (s, v) in sum.iter_mut().zip(acts.last().expect("output")) {
                *s += v;
            }
            caches.push(acts);
        }
        (caches, sum)
    }

    fn forward(&self, theta: &[f64], x: &NetInput) -> TowerCache {
        let trunk = self.trunk.forward(theta, x.trunk.clone());
        let mut head_in = trunk.last().expect("trunk output").clone();
        let (psi, phi) = match (&self.set, &x.neighbors) {
            (Some((psi, phi)), Some(ns)) => {
                let (psi_acts, sum) = Self::neighbor_sum(psi, theta, ns);
                let phi_acts = phi.forward(theta, sum);
                head_in.extend_from_slice(phi_acts.last().expect("phi output"));
                (psi_acts, phi_acts)
            }
            _ => (Vec::new(), Vec::new()),
        };
        let out = self.head.forward(theta, &head_in);
        TowerCache { trunk, psi, phi, head_in, out }
    }

    fn backward(&self, theta: &[f64], cache: &TowerCache, dout: &[f64], grad: &mut [f64]) {
        let d_head_in = self.head.backward(theta, &cache.head_in, dout, grad, true);
        let n_trunk = cache.trunk.last().map_or(0, Vec::len);
        self.trunk.backward(theta, &cache.trunk, &d_head_in[..n_trunk], grad, false);
        if let Some((psi, phi)) = &self.set {
            let d_sum = phi.backward(theta, &cache.phi, &d_head_in[n_trunk..], grad, true);
            for acts in &cache.psi {
                psi.backward(theta, acts, &d_sum, grad, false);
            }
        }
    }
}

/// Network shapes and where each tensor sits in the flat vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    pub net: NetConfig,
    pub input: InputSpec,
    pub layout: ParamLayout,
    policy: Tower,
    value: Tower,
    log_std: usize,
}

impl Architecture {
    pub fn new(net: &NetConfig, input: InputSpec) -> Result<Self> {
        net.validate()?;
        let mut layout = ParamLayout::default();
        let policy = Tower::build(&mut layout, "policy", net, &input, 2);
        let log_std = layout.scalar_block("policy.log_std", 2);
        let value = Tower::build(&mut layout, "value", net, &input, 1);
        Ok(Self { net: net.clone(), input, layout, policy, value, log_std })
    }

    pub fn n_params(&self) -> usize {
        self.layout.len
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolicyOutput {
    pub action_mean: Vec2,
    pub action_std: Vec2,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    pub arch: Architecture,
    pub theta: Vec<f64>,
}

impl PolicyParams {
    /// Orthogonal hidden layers (gain √2), policy head ×0.01, value head ×1,
    /// zero biases and zero log standard deviation.
    pub fn init<R: Rng + ?Sized>(net: &NetConfig, input: InputSpec, rng: &mut R) -> Result<Self> {
        let arch = Architecture::new(net, input)?;
        let mut theta = vec![0.0; arch.n_params()];
        arch.policy.init(&mut theta, POLICY_HEAD_GAIN, rng);
        arch.value.init(&mut theta, VALUE_HEAD_GAIN, rng);
        Ok(Self { arch, theta })
    }

    pub fn n_params(&self) -> usize {
        self.theta.len()
    }

    /// Raw (unclamped) log standard deviation parameters.
    pub fn log_std(&self) -> [f64; 2] {
        [self.theta[self.arch.log_std], self.theta[self.arch.log_std + 1]]
    }

    pub fn clamp_log_std(&mut self) {
        let i = self.arch.log_std;
        for v in &mut self.theta[i..i + 2] {
            *v = v.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|v| v.is_finite())
    }

    pub fn forward(&self, obs: &Observation) -> Result<PolicyOutput> {
        let x = self.arch.input.normalize(obs)?;
        Ok(self.forward_normalized(&x))
    }

    pub fn forward_normalized(&self, x: &NetInput) -> PolicyOutput {
        let p = self.arch.policy.forward(&self.theta, x);
        let v = self.arch.value.forward(&self.theta, x);
        self.output(&p.out, v.out[0])
    }

    fn output(&self, mean: &[f64], value: f64) -> PolicyOutput {
        let [a, b] = self.log_std();
        PolicyOutput {
            action_mean: Vec2::new(mean[0], mean[1]),
            action_std: Vec2::new(a.clamp(LOG_STD_MIN, LOG_STD_MAX).exp(), b.clamp(LOG_STD_MIN, LOG_STD_MAX).exp()),
            value,
        }
    }

    /// `φ(Σ ψ(x_i))` of the policy network for already normalised neighbor
    /// features; the empty set maps to `φ(0)`.
    pub fn embed_neighbors(&self, neighbors: &[Vec<f64>]) -> Result<Vec<f64>> {
        let (psi, phi) = self
            .arch
            .policy
            .set
            .as_ref()
            .ok_or_else(|| Error::LayoutMismatch("network has no neighbor encoder".into()))?;
        if let Some(n) = neighbors.iter().find(|n| n.len() != NEIGHBOR_FEATURES) {
            return Err(Error::LayoutMismatch(format!("neighbor feature of width {}", n.len())));
        }
        let (_, sum) = Tower::neighbor_sum(psi, &self.theta, neighbors);
        Ok(phi.forward(&self.theta, sum).pop().expect("phi output"))
    }
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Diagonal-Gaussian log density at `action` and the distribution's entropy.
pub fn log_prob_and_entropy(out: &PolicyOutput, action: Vec2) -> (f64, f64) {
    let mut log_prob = 0.0;
    let mut entropy = 0.0;
    for (a, mu, sigma) in [(action.x, out.action_mean.x, out.action_std.x), (action.y, out.action_mean.y, out.action_std.y)] {
        let z = (a - mu) / sigma;
        log_prob += -0.5 * z * z - sigma.ln() - 0.5 * LN_2PI;
        entropy += 0.5 * (LN_2PI + 1.0) + sigma.ln();
    }
    (log_prob, entropy)
}

/// Draws an action from the policy distribution (before clamping).
pub fn sample_action<R: Rng + ?Sized>(out: &PolicyOutput, rng: &mut R) -> Vec2 {
    let ex: f64 = rng.sample(StandardNormal);
    let ey: f64 = rng.sample(StandardNormal);
    Vec2::new(out.action_mean.x + out.action_std.x * ex, out.action_mean.y + out.action_std.y * ey)
}

/// Clamps each component to `[-1, 1]` before it reaches the simulator.
pub fn clamp_action(a: Vec2) -> Vec2 {
    Vec2::new(a.x.clamp(-1.0, 1.0), a.y.clamp(-1.0, 1.0))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionMode {
    /// Use the distribution mean.
    #[default]
    Mean,
    /// Sample from the distribution.
    Sample,
}

pub fn select_action<R: Rng + ?Sized>(out: &PolicyOutput, mode: ActionMode, rng: &mut R) -> Vec2 {
    match mode {
        ActionMode::Mean => clamp_action(out.action_mean),
        ActionMode::Sample => clamp_action(sample_action(out, rng)),
    }
}

#[cfg(test)]
mod tests;
