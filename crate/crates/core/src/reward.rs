//! Per-step reward components, the metabolic energy model and episode metrics.

use serde::{Deserialize, Serialize};

use crate::sim::AgentState;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConfig {
    /// One-off reward for arriving.
    #[serde(default = "defaults::c_g")]
    pub c_g: f64,
    /// Progress (distance closed) coefficient.
    #[serde(default = "defaults::c_p")]
    pub c_p: f64,
    /// Speed-comfort coefficient.
    #[serde(default = "defaults::c_v")]
    pub c_v: f64,
    /// Exponent on the speed deviation `| |v| - v_0 |`.
    #[serde(default = "defaults::c_e")]
    pub c_e: f64,
    /// Penalty per collision event.
    #[serde(default = "defaults::c_c")]
    pub c_c: f64,
    /// Per-step urgency penalty.
    #[serde(default = "defaults::c_t")]
    pub c_t: f64,
    /// Preferred speed, m/s.
    #[serde(default = "defaults::v_0")]
    pub v_0: f64,
    #[serde(default = "defaults::gamma")]
    pub gamma: f64,
    /// Stop paying any reward component once the agent has arrived.
    #[serde(default = "defaults::zero_after_goal")]
    pub zero_after_goal: bool,
}

mod defaults {
    pub fn c_g() -> f64 {
        10.0
    }
    pub fn c_p() -> f64 {
        1.0
    }
    pub fn c_v() -> f64 {
        0.75
    }
    pub fn c_e() -> f64 {
        1.0
    }
    pub fn c_c() -> f64 {
        0.05
    }
    pub fn c_t() -> f64 {
        0.005
    }
    pub fn v_0() -> f64 {
        1.33
    }
    pub fn gamma() -> f64 {
        0.99
    }
    pub fn zero_after_goal() -> bool {
        true
    }
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            c_g: defaults::c_g(),
            c_p: defaults::c_p(),
            c_v: defaults::c_v(),
            c_e: defaults::c_e(),
            c_c: defaults::c_c(),
            c_t: defaults::c_t(),
            v_0: defaults::v_0(),
            gamma: defaults::gamma(),
            zero_after_goal: defaults::zero_after_goal(),
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.c_e <= 0.0 || self.v_0 <= 0.0 || !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(crate::Error::InvalidConfig(format!(
                "reward needs c_e > 0, v_0 > 0 and gamma in (0, 1], got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Metabolic cost per kilogram: `e_s + e_w v²` J/(kg·s).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyModel {
    pub e_s: f64,
    pub e_w: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self { e_s: 2.23, e_w: 1.26 }
    }
}

impl EnergyModel {
    /// Power draw at `speed`, J/(kg·s).
    pub fn power(&self, speed: f64) -> f64 {
        self.e_s + self.e_w * speed * speed
    }

    /// Speed minimising energy per distance travelled.
    pub fn optimal_speed(&self) -> f64 {
        (self.e_s / self.e_w).sqrt()
    }

    /// Energy to cover `distance` at constant `speed` with no time limit.
    pub fn trip_energy(&self, speed: f64, distance: f64) -> f64 {
        distance / speed * self.power(speed)
    }
}

/// Energy spent over `dt` seconds at `speed`.
pub fn energy_step(speed: f64, dt: f64, model: &EnergyModel) -> f64 {
    model.power(speed) * dt
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepRewardBreakdown {
    pub goal: f64,
    pub progress: f64,
    pub speed: f64,
    pub collision: f64,
    pub urgency: f64,
    pub total: f64,
}

impl StepRewardBreakdown {
    pub fn new(goal: f64, progress: f64, speed: f64, collision: f64, urgency: f64) -> Self {
        Self { goal, progress, speed, collision, urgency, total: goal + progress + speed + collision + urgency }
    }

    pub fn components(&self) -> [f64; 5] {
        [self.goal, self.progress, self.speed, self.collision, self.urgency]
    }
}

impl std::ops::AddAssign for StepRewardBreakdown {
    fn add_assign(&mut self, rhs: Self) {
        self.goal += rhs.goal;
        self.progress += rhs.progress;
        self.speed += rhs.speed;
        self.collision += rhs.collision;
        self.urgency += rhs.urgency;
        self.total += rhs.total;
    }
}

/// Reward for one agent over one decision step.
///
/// `prev` and `cur` are the agent before and after the step; `collisions` is
/// the number of distinct collision events it took part in; `newly_reached`
/// is set on the step in which it arrived. Progress is positive when the
/// agent gets closer to its goal.
pub fn step_reward(
    prev: &AgentState,
    cur: &AgentState,
    collisions: usize,
    newly_reached: bool,
    cfg: &RewardConfig,
) -> StepRewardBreakdown {
    if cfg.zero_after_goal && prev.reached_goal {
        return StepRewardBreakdown::default();
    }
    let goal = if newly_reached { cfg.c_g } else { 0.0 };
    let progress = cfg.c_p * (prev.distance_to_goal() - cur.distance_to_goal());
    let speed = -cfg.c_v * (cur.speed() - cfg.v_0).abs().powf(cfg.c_e);
    let collision = -cfg.c_c * collisions as f64;
    StepRewardBreakdown::new(goal, progress, speed, collision, -cfg.c_t)
}

/// Per-agent, per-step record of one episode.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub n_agents: usize,
    pub dt: f64,
    /// `steps[t][i]` is agent `i` at decision step `t`.
    pub steps: Vec<Vec<AgentStepRecord>>,
    /// Distinct collision events per step (pairs counted once).
    pub collision_events: Vec<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentStepRecord {
    pub action: crate::geometry::Vec2,
    pub reward: StepRewardBreakdown,
    /// Speed at the end of the step.
    pub speed: f64,
    pub collisions: usize,
    /// Whether the agent had arrived by the end of the step.
    pub reached: bool,
}

impl EpisodeLog {
    pub fn new(n_agents: usize, dt: f64) -> Self {
        Self { n_agents, dt, steps: Vec::new(), collision_events: Vec::new() }
    }

    pub fn push(&mut self, records: Vec<AgentStepRecord>, collision_events: usize) {
        debug_assert_eq!(records.len(), self.n_agents);
        self.steps.push(records);
        self.collision_events.push(collision_events);
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Speeds below this (m/s) do not count as moving.
pub const MOVING_SPEED_THRESHOLD: f64 = 0.1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean over agents of the total J/kg spent during the episode.
    pub energy: f64,
    pub success_rate: f64,
    /// Distinct collision events over the episode.
    pub collisions: f64,
    /// Mean speed over steps where an agent was still travelling and moving.
    pub mean_speed: f64,
    /// Mean over agents of undiscounted per-component reward sums.
    pub reward: StepRewardBreakdown,
    pub steps: usize,
}

/// Aggregates an episode log. Energy accrues on every step until the
/// episode ends, including while an arrived agent stands still.
pub fn episode_metrics(log: &EpisodeLog, model: &EnergyModel) -> Metrics {
    let n = log.n_agents.max(1) as f64;
    let mut energy = 0.0;
    let mut reward = StepRewardBreakdown::default();
    let mut moving_speed = 0.0;
    let mut moving_steps = 0usize;
    let mut prev_reached = vec![false; log.n_agents];

    for records in &log.steps {
        for (rec, was_reached) in records.iter().zip(prev_reached.iter_mut()) {
            energy += energy_step(rec.speed, log.dt, model);
            reward += rec.reward;
            if !*was_reached && rec.speed > MOVING_SPEED_THRESHOLD {
                moving_speed += rec.speed;
                moving_steps += 1;
            }
            *was_reached = rec.reached;
        }
    }
    let reached = prev_reached.iter().filter(|&&r| r).count() as f64;
    let scale = 1.0 / n;
    Metrics {
        energy: energy * scale,
        success_rate: reached * scale,
        collisions: log.collision_events.iter().sum::<usize>() as f64,
        mean_speed: if moving_steps > 0 { moving_speed / moving_steps as f64 } else { 0.0 },
        reward: StepRewardBreakdown {
            goal: reward.goal * scale,
            progress: reward.progress * scale,
            speed: reward.speed * scale,
            collision: reward.collision * scale,
            urgency: reward.urgency * scale,
            total: reward.total * scale,
        },
        steps: log.len(),
    }
}
