//! A multi-agent episode: world, observations, rewards and the running log.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::Vec2;
use crate::perception::{self, Observation, PerceptionConfig, RayTargets};
use crate::reward::{self, AgentStepRecord, EnergyModel, EpisodeLog, Metrics, RewardConfig, StepRewardBreakdown};
use crate::sim::{self, build_scenario, DynamicsConfig, ScenarioConfig, WorldState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub scenario: ScenarioConfig,
    pub perception: PerceptionConfig,
    pub dynamics: DynamicsConfig,
    #[serde(default)]
    pub reward: RewardConfig,
    #[serde(default)]
    pub energy: EnergyModel,
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.perception.validate()?;
        self.dynamics.validate()?;
        self.reward.validate()
    }
}

/// Result of one decision step.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvStep {
    pub rewards: Vec<StepRewardBreakdown>,
    pub newly_reached: Vec<bool>,
    /// Time limit hit or every agent arrived.
    pub terminal: bool,
}

#[derive(Clone, Debug)]
pub struct CrowdEnv {
    cfg: EnvConfig,
    world: WorldState,
    /// Ray frame of the previous decision step, per agent, for frame stacking.
    previous_rays: Vec<Option<Vec<f64>>>,
    log: EpisodeLog,
}

impl CrowdEnv {
    /// Builds the first episode with scenario seed `seed`.
    pub fn new(cfg: EnvConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let world = build_scenario(&cfg.scenario.clone().with_seed(seed))?;
        let n = world.agents.len();
        let log = EpisodeLog::new(n, cfg.dynamics.decision_dt);
        Ok(Self { cfg, world, previous_rays: vec![None; n], log })
    }

    /// Starts a fresh episode from scenario seed `seed`.
    pub fn reset(&mut self, seed: u64) -> Result<()> {
        self.world = build_scenario(&self.cfg.scenario.clone().with_seed(seed))?;
        let n = self.world.agents.len();
        self.previous_rays = vec![None; n];
        self.log = EpisodeLog::new(n, self.cfg.dynamics.decision_dt);
        Ok(())
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn log(&self) -> &EpisodeLog {
        &self.log
    }

    pub fn n_agents(&self) -> usize {
        self.world.agents.len()
    }

    pub fn is_done(&self) -> bool {
        self.world.is_terminal()
    }

    pub fn observe(&self, agent: usize) -> Observation {
        perception::assemble(&self.world, agent, &self.cfg.perception, self.previous_rays[agent].as_deref())
    }

    pub fn observe_all(&self) -> Vec<Observation> {
        (0..self.n_agents()).map(|i| self.observe(i)).collect()
    }

    /// Agents that still act: not yet at their goal.
    pub fn travelling(&self) -> Vec<usize> {
        self.world.agents.iter().enumerate().filter(|(_, a)| !a.reached_goal).map(|(i, _)| i).collect()
    }

    /// Advances one decision step. `actions` holds one command per agent
    /// slot; entries for arrived agents are ignored.
    pub fn step(&mut self, actions: &[Vec2]) -> Result<EnvStep> {
        let p = &self.cfg.perception;
        if p.frame_stack > 1 && p.mode.uses_rays() {
            let targets = if p.mode.uses_neighbors() { RayTargets::WallsOnly } else { RayTargets::All };
            for i in 0..self.n_agents() {
                self.previous_rays[i] = Some(perception::raycast(&self.world, i, p, targets));
            }
        }

        let before = self.world.agents.clone();
        let events = sim::step(&mut self.world, actions, &self.cfg.dynamics)?;
        let mut rewards = Vec::with_capacity(before.len());
        let mut records = Vec::with_capacity(before.len());
        for (i, (prev, cur)) in before.iter().zip(&self.world.agents).enumerate() {
            let r = reward::step_reward(prev, cur, events.collisions[i], events.newly_reached[i], &self.cfg.reward);
            rewards.push(r);
            records.push(AgentStepRecord {
                action: if prev.reached_goal { Vec2::ZERO } else { actions[i] },
                reward: r,
                speed: cur.speed(),
                collisions: events.collisions[i],
                reached: cur.reached_goal,
            });
        }
        self.log.push(records, events.events.len());
        Ok(EnvStep { rewards, newly_reached: events.newly_reached, terminal: events.terminal })
    }

    /// Metrics of the episode so far.
    pub fn metrics(&self) -> Metrics {
        reward::episode_metrics(&self.log, &self.cfg.energy)
    }
}
