//! Experience collection and policy evaluation.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{compute_gae, Batch};
use crate::env::{CrowdEnv, EnvConfig};
use crate::error::Result;
use crate::exec::Exec;
use crate::geometry::Vec2;
use crate::perception::Observation;
use crate::policy::{self, clamp_action, log_prob_and_entropy, ActionMode, PolicyParams};
use crate::reward::Metrics;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub agent_id: usize,
    pub observation: Observation,
    /// Sampled action before clamping.
    pub action: Vec2,
    pub log_prob: f64,
    /// Sum of the reward components.
    pub reward: f64,
    pub value: f64,
    /// The agent reached its goal on this step.
    pub done: bool,
}

/// Consecutive transitions of one agent within one episode. `bootstrap` is
/// the value estimate after the last transition; zero when it ended in `done`.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub world: usize,
    pub transitions: Vec<Transition>,
    pub bootstrap: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Rollout {
    pub segments: Vec<Segment>,
    /// Metrics of every episode that finished during collection.
    pub episodes: Vec<Metrics>,
}

impl Rollout {
    pub fn n_transitions(&self) -> usize {
        self.segments.iter().map(|s| s.transitions.len()).sum()
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.segments.iter().flat_map(|s| s.transitions.iter())
    }

    /// Runs GAE per segment and flattens everything into a batch.
    pub fn to_batch(&self, params: &PolicyParams, gamma: f64, lambda: f64) -> Result<Batch> {
        let mut batch = Batch::default();
        for seg in &self.segments {
            let rewards: Vec<f64> = seg.transitions.iter().map(|t| t.reward).collect();
            let values: Vec<f64> = seg.transitions.iter().map(|t| t.value).collect();
            let dones: Vec<bool> = seg.transitions.iter().map(|t| t.done).collect();
            let (adv, ret) = compute_gae(&rewards, &values, &dones, seg.bootstrap, gamma, lambda);
            for (t, (a, r)) in seg.transitions.iter().zip(adv.into_iter().zip(ret)) {
                batch.inputs.push(params.arch.input.normalize(&t.observation)?);
                batch.actions.push(t.action);
                batch.log_probs.push(t.log_prob);
                batch.advantages.push(a);
                batch.returns.push(r);
            }
        }
        Ok(batch)
    }
}

/// One simulation that persists across iterations, with its own RNG for
/// action sampling and episode seeds.
#[derive(Clone, Debug)]
pub struct WorldRunner {
    env: CrowdEnv,
    rng: ChaCha8Rng,
    open: Vec<Vec<Transition>>,
}

impl WorldRunner {
    /// World `index` of a run seeded with `seed`; each index gets its own
    /// random stream.
    pub fn new(cfg: &EnvConfig, seed: u64, index: usize) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64 + 1);
        let env = CrowdEnv::new(cfg.clone(), rng.next_u64())?;
        let n = env.n_agents();
        Ok(Self { env, rng, open: vec![Vec::new(); n] })
    }

    pub fn env(&self) -> &CrowdEnv {
        &self.env
    }

    fn close(&mut self, agent: usize, world: usize, bootstrap: f64, out: &mut Vec<Segment>) {
        let transitions = std::mem::take(&mut self.open[agent]);
        if !transitions.is_empty() {
            out.push(Segment { world, transitions, bootstrap });
        }
    }

    fn bootstrap(&self, params: &PolicyParams, agent: usize) -> Result<f64> {
        Ok(params.forward(&self.env.observe(agent))?.value)
    }

    /// Advances `steps` decisions, sampling actions from `params`.
    pub fn run(&mut self, params: &PolicyParams, steps: usize, world: usize) -> Result<(Vec<Segment>, Vec<Metrics>)> {
        let mut segments = Vec::new();
        let mut episodes = Vec::new();
        for _ in 0..steps {
            let travelling = self.env.travelling();
            let mut actions = vec![Vec2::ZERO; self.env.n_agents()];
            let mut pending = Vec::with_capacity(travelling.len());
            for &i in &travelling {
                let obs = self.env.observe(i);
                let out = params.forward(&obs)?;
                let action = policy::sample_action(&out, &mut self.rng);
                let (log_prob, _) = log_prob_and_entropy(&out, action);
                actions[i] = clamp_action(action);
                pending.push(Transition {
                    agent_id: i,
                    observation: obs,
                    action,
                    log_prob,
                    reward: 0.0,
                    value: out.value,
                    done: false,
                });
            }
            let step = self.env.step(&actions)?;
            for mut t in pending {
                let i = t.agent_id;
                t.reward = step.rewards[i].total;
                t.done = step.newly_reached[i];
                self.open[i].push(t);
                if step.newly_reached[i] {
                    self.close(i, world, 0.0, &mut segments);
                }
            }
            if step.terminal {
                for i in 0..self.env.n_agents() {
                    if !self.open[i].is_empty() {
                        let v = self.bootstrap(params, i)?;
                        self.close(i, world, v, &mut segments);
                    }
                }
                episodes.push(self.env.metrics());
                let seed = self.rng.next_u64();
                self.env.reset(seed)?;
                self.open = vec![Vec::new(); self.env.n_agents()];
            }
        }
        for i in 0..self.env.n_agents() {
            if !self.open[i].is_empty() {
                let v = self.bootstrap(params, i)?;
                self.close(i, world, v, &mut segments);
            }
        }
        Ok((segments, episodes))
    }
}

/// Steps every world `steps` times with shared read-only `params`. Worlds
/// may run concurrently; results are concatenated in world order.
pub fn collect_rollouts(worlds: &mut [WorldRunner], params: &PolicyParams, steps: usize, exec: Exec) -> Result<Rollout> {
    type Output = Option<Result<(Vec<Segment>, Vec<Metrics>)>>;
    let mut jobs: Vec<(&mut WorldRunner, Output)> = worlds.iter_mut().map(|w| (w, None)).collect();
    exec.for_each_mut(&mut jobs, |i, (w, out)| *out = Some(w.run(params, steps, i)));
    let mut rollout = Rollout::default();
    for (_, out) in jobs {
        let (segments, episodes) = out.expect("every world ran")?;
        rollout.segments.extend(segments);
        rollout.episodes.extend(episodes);
    }
    Ok(rollout)
}

/// Plays one full episode without learning.
pub fn run_episode(params: &PolicyParams, cfg: &EnvConfig, seed: u64, mode: ActionMode) -> Result<CrowdEnv> {
    let mut env = CrowdEnv::new(cfg.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    while !env.is_done() {
        let mut actions = vec![Vec2::ZERO; env.n_agents()];
        for i in env.travelling() {
            let out = params.forward(&env.observe(i))?;
            actions[i] = policy::select_action(&out, mode, &mut rng);
        }
        env.step(&actions)?;
    }
    Ok(env)
}

/// Metrics of `n_episodes` episodes with scenario seeds `seed, seed + 1, …`.
pub fn evaluate(
    params: &PolicyParams,
    cfg: &EnvConfig,
    n_episodes: usize,
    mode: ActionMode,
    seed: u64,
    exec: Exec,
) -> Result<Vec<Metrics>> {
    exec.map(n_episodes, |e| run_episode(params, cfg, seed.wrapping_add(e as u64), mode).map(|env| env.metrics()))
        .into_iter()
        .collect()
}
