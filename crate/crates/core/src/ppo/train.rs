//! The collect → advantage → update loop.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{collect_rollouts, ppo_update, Adam, PpoConfig, WorldRunner};
use crate::env::EnvConfig;
use crate::error::Result;
use crate::exec::Exec;
use crate::policy::{InputSpec, NetConfig, PolicyParams};
use crate::reward::Metrics;

/// One row of the training log. Episode metrics average the episodes that
/// finished during the iteration and are NaN when none did.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub n_transitions: usize,
    pub n_episodes: usize,
    pub reward_total: f64,
    pub reward_goal: f64,
    pub reward_progress: f64,
    pub reward_speed: f64,
    pub reward_collision: f64,
    pub reward_urgency: f64,
    pub energy: f64,
    pub success_rate: f64,
    pub collisions: f64,
    pub mean_speed: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub advantage_mean: f64,
    pub advantage_std: f64,
    pub grad_norm: f64,
    pub aborted: bool,
}

impl IterationLog {
    fn set_episode_means(&mut self, episodes: &[Metrics]) {
        self.n_episodes = episodes.len();
        let mean = |f: &dyn Fn(&Metrics) -> f64| {
            if episodes.is_empty() {
                f64::NAN
            } else {
                episodes.iter().map(f).sum::<f64>() / episodes.len() as f64
            }
        };
        self.reward_total = mean(&|m| m.reward.total);
        self.reward_goal = mean(&|m| m.reward.goal);
        self.reward_progress = mean(&|m| m.reward.progress);
        self.reward_speed = mean(&|m| m.reward.speed);
        self.reward_collision = mean(&|m| m.reward.collision);
        self.reward_urgency = mean(&|m| m.reward.urgency);
        self.energy = mean(&|m| m.energy);
        self.success_rate = mean(&|m| m.success_rate);
        self.collisions = mean(&|m| m.collisions);
        self.mean_speed = mean(&|m| m.mean_speed);
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub iterations: Vec<IterationLog>,
}

impl TrainingLog {
    /// Mean of `f` over the last `window` iterations, skipping NaN entries.
    pub fn tail_mean(&self, window: usize, f: impl Fn(&IterationLog) -> f64) -> f64 {
        let start = self.iterations.len().saturating_sub(window);
        let vals: Vec<f64> = self.iterations[start..].iter().map(f).filter(|v| v.is_finite()).collect();
        if vals.is_empty() {
            f64::NAN
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    }
}

pub struct Trainer {
    cfg: PpoConfig,
    exec: Exec,
    params: PolicyParams,
    opt: Adam,
    worlds: Vec<WorldRunner>,
    rng: ChaCha8Rng,
    iteration: usize,
}

impl Trainer {
    pub fn new(env_cfg: &EnvConfig, cfg: &PpoConfig, net: &NetConfig, exec: Exec) -> Result<Self> {
        env_cfg.validate()?;
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let input = InputSpec::new(&env_cfg.perception, &env_cfg.dynamics);
        let params = PolicyParams::init(net, input, &mut rng)?;
        let worlds = (0..cfg.n_parallel_worlds)
            .map(|i| WorldRunner::new(env_cfg, cfg.seed, i))
            .collect::<Result<Vec<_>>>()?;
        let opt = Adam::new(params.n_params());
        Ok(Self { cfg: cfg.clone(), exec, params, opt, worlds, rng, iteration: 0 })
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    pub fn into_params(self) -> PolicyParams {
        self.params
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// One collect → GAE → update iteration.
    pub fn step(&mut self) -> Result<IterationLog> {
        let rollout = collect_rollouts(&mut self.worlds, &self.params, self.cfg.steps_per_iteration, self.exec)?;
        let batch = rollout.to_batch(&self.params, self.cfg.gamma, self.cfg.gae_lambda)?;
        let mut log = IterationLog { iteration: self.iteration, n_transitions: batch.len(), ..Default::default() };
        log.set_episode_means(&rollout.episodes);
        if !batch.is_empty() {
            let stats = ppo_update(&mut self.params, &mut self.opt, &batch, &self.cfg, &mut self.rng, self.exec)?;
            log.policy_loss = stats.loss.policy_loss;
            log.value_loss = stats.loss.value_loss;
            log.entropy = stats.loss.entropy;
            log.clip_fraction = stats.loss.clip_fraction;
            log.approx_kl = stats.loss.approx_kl;
            log.advantage_mean = stats.advantage_mean;
            log.advantage_std = stats.advantage_std;
            log.grad_norm = stats.grad_norm;
            log.aborted = stats.aborted;
        }
        self.iteration += 1;
        Ok(log)
    }
}

/// Trains for `n_iterations`, calling `on_iteration` after each one (for
/// logging and periodic checkpoints).
pub fn train<F>(
    env_cfg: &EnvConfig,
    cfg: &PpoConfig,
    net: &NetConfig,
    n_iterations: usize,
    exec: Exec,
    mut on_iteration: F,
) -> Result<(PolicyParams, TrainingLog)>
where
    F: FnMut(&IterationLog, &PolicyParams) -> Result<()>,
{
    let mut trainer = Trainer::new(env_cfg, cfg, net, exec)?;
    let mut log = TrainingLog::default();
    for _ in 0..n_iterations {
        let row = trainer.step()?;
        on_iteration(&row, trainer.params())?;
        log.iterations.push(row);
    }
    Ok((trainer.into_params(), log))
}
