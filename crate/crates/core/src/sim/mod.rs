//! World state, dynamics and the decision-step transition.

mod collision;
mod dynamics;
mod scenario;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{closest_point_on_segment, Rect, Vec2};

pub use collision::{resolve_collisions, CollisionEvent, Partner, CONTACT_TOLERANCE};
pub use dynamics::integrate_dynamics;
pub use scenario::{build_scenario, ScenarioConfig, ScenarioKind, SpawnMode};

/// Radius of every standard agent, in meters.
pub const AGENT_RADIUS: f64 = 0.2;

/// Side length of the square arena used by all built-in scenarios.
pub const ARENA_SIZE: f64 = 20.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Vec2,
    pub velocity: Vec2,
    /// Heading in `(-π, π]`.
    pub orientation: f64,
    pub goal: Vec2,
    pub radius: f64,
    pub reached_goal: bool,
    /// Inactive agents are ignored by every system.
    pub active: bool,
}

impl AgentState {
    pub fn new(position: Vec2, goal: Vec2, orientation: f64) -> Self {
        Self {
            position,
            velocity: Vec2::ZERO,
            orientation,
            goal,
            radius: AGENT_RADIUS,
            reached_goal: false,
            active: true,
        }
    }

    pub fn distance_to_goal(&self) -> f64 {
        self.position.distance(self.goal)
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }

    pub fn heading(&self) -> Vec2 {
        Vec2::from_angle(self.orientation)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Obstacle {
    /// Immovable disc.
    Circle { center: Vec2, radius: f64 },
    /// Segment with a thickness; a point collides when it comes within
    /// `thickness / 2` of the segment.
    Wall { start: Vec2, end: Vec2, thickness: f64 },
}

impl Obstacle {
    pub fn wall(start: Vec2, end: Vec2) -> Self {
        Obstacle::Wall { start, end, thickness: 0.0 }
    }

    pub fn is_wall(&self) -> bool {
        matches!(self, Obstacle::Wall { .. })
    }

    /// Signed distance from `p` to the obstacle surface (negative inside).
    pub fn signed_distance(&self, p: Vec2) -> f64 {
        match *self {
            Obstacle::Circle { center, radius } => p.distance(center) - radius,
            Obstacle::Wall { start, end, thickness } => {
                p.distance(closest_point_on_segment(p, start, end)) - 0.5 * thickness
            }
        }
    }

    /// Outward contact normal and penetration depth for a disc at `p` with
    /// radius `r`, if they overlap.
    pub fn contact(&self, p: Vec2, r: f64) -> Option<(Vec2, f64)> {
        let (anchor, reach) = match *self {
            Obstacle::Circle { center, radius } => (center, radius),
            Obstacle::Wall { start, end, thickness } => {
                (closest_point_on_segment(p, start, end), 0.5 * thickness)
            }
        };
        let offset = p - anchor;
        let dist = offset.norm();
        let depth = r + reach - dist;
        if depth <= 0.0 {
            return None;
        }
        let normal = offset.normalized().unwrap_or(Vec2::new(1.0, 0.0));
        Some((normal, depth))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub agents: Vec<AgentState>,
    pub obstacles: Vec<Obstacle>,
    pub step_index: usize,
    pub t_max: usize,
    pub bounds: Rect,
}

impl WorldState {
    pub fn is_terminal(&self) -> bool {
        self.step_index >= self.t_max || self.all_reached()
    }

    pub fn all_reached(&self) -> bool {
        self.agents.iter().filter(|a| a.active).all(|a| a.reached_goal)
    }

    /// Largest agent-agent penetration depth in the world.
    pub fn max_agent_overlap(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, a) in self.agents.iter().enumerate().filter(|(_, a)| a.active) {
            for b in self.agents[i + 1..].iter().filter(|b| b.active) {
                worst = worst.max(a.radius + b.radius - a.position.distance(b.position));
            }
        }
        worst
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsModel {
    CartesianVelocity,
    CartesianAcceleration,
    PolarVelocity,
    PolarAcceleration,
}

impl DynamicsModel {
    pub const ALL: [DynamicsModel; 4] = [
        DynamicsModel::CartesianVelocity,
        DynamicsModel::CartesianAcceleration,
        DynamicsModel::PolarVelocity,
        DynamicsModel::PolarAcceleration,
    ];

    pub fn is_polar(self) -> bool {
        matches!(self, DynamicsModel::PolarVelocity | DynamicsModel::PolarAcceleration)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    pub model: DynamicsModel,
    #[serde(default = "defaults::v_max")]
    pub v_max: f64,
    #[serde(default = "defaults::a_max")]
    pub a_max: f64,
    #[serde(default = "defaults::omega_max")]
    pub omega_max: f64,
    #[serde(default = "defaults::decision_dt")]
    pub decision_dt: f64,
    #[serde(default = "defaults::physics_substeps")]
    pub physics_substeps: usize,
    /// Distance to goal below which an agent counts as arrived.
    #[serde(default = "defaults::goal_radius")]
    pub goal_radius: f64,
}

mod defaults {
    pub fn v_max() -> f64 {
        2.0
    }
    pub fn a_max() -> f64 {
        2.0
    }
    pub fn omega_max() -> f64 {
        3.0
    }
    pub fn decision_dt() -> f64 {
        1.0 / 12.0
    }
    pub fn physics_substeps() -> usize {
        10
    }
    pub fn goal_radius() -> f64 {
        0.5
    }
}

impl DynamicsConfig {
    pub fn new(model: DynamicsModel) -> Self {
        Self {
            model,
            v_max: defaults::v_max(),
            a_max: defaults::a_max(),
            omega_max: defaults::omega_max(),
            decision_dt: defaults::decision_dt(),
            physics_substeps: defaults::physics_substeps(),
            goal_radius: defaults::goal_radius(),
        }
    }

    /// Linear damping coefficient λ. Tied to `a_max / v_max` so the
    /// steady-state speed under full acceleration is exactly `v_max`.
    pub fn damping(&self) -> f64 {
        self.a_max / self.v_max
    }

    pub fn substep_dt(&self) -> f64 {
        self.decision_dt / self.physics_substeps as f64
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.v_max > 0.0
            && self.a_max > 0.0
            && self.omega_max >= 0.0
            && self.decision_dt > 0.0
            && self.physics_substeps >= 1
            && self.goal_radius > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("dynamics parameters out of range: {self:?}")))
        }
    }
}

/// What happened during one decision step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepEvents {
    /// Number of distinct collision events each agent took part in.
    pub collisions: Vec<usize>,
    pub newly_reached: Vec<bool>,
    /// Distinct colliding pairs, deduplicated across physics substeps.
    pub events: Vec<CollisionEvent>,
    pub terminal: bool,
}

/// Advances the world by one decision step.
///
/// `joint_action` holds one action per agent slot (including inactive and
/// already-arrived agents, whose actions are ignored). The action is held
/// for all physics substeps.
pub fn step(world: &mut WorldState, joint_action: &[Vec2], cfg: &DynamicsConfig) -> Result<StepEvents> {
    let n = world.agents.len();
    if joint_action.len() != n {
        return Err(Error::ActionCount { expected: n, got: joint_action.len() });
    }
    let dt = cfg.substep_dt();
    let polar = cfg.model.is_polar();
    let mut pairs: BTreeSet<CollisionEvent> = BTreeSet::new();

    for _ in 0..cfg.physics_substeps {
        for (agent, &action) in world.agents.iter_mut().zip(joint_action) {
            if !agent.active {
                continue;
            }
            let command = if agent.reached_goal { Vec2::ZERO } else { action };
            *agent = integrate_dynamics(agent, command, cfg, dt);
        }
        pairs.extend(resolve_collisions(world));
        for agent in world.agents.iter_mut().filter(|a| a.active) {
            constrain_after_contact(agent, polar, cfg.v_max);
        }
    }

    world.step_index += 1;

    let mut newly_reached = vec![false; n];
    for (agent, flag) in world.agents.iter_mut().zip(newly_reached.iter_mut()) {
        if agent.active && !agent.reached_goal && agent.distance_to_goal() < cfg.goal_radius {
            agent.reached_goal = true;
            *flag = true;
        }
    }

    let mut collisions = vec![0usize; n];
    for ev in &pairs {
        collisions[ev.agent] += 1;
        if let Partner::Agent(j) = ev.partner {
            collisions[j] += 1;
        }
    }

    Ok(StepEvents {
        collisions,
        newly_reached,
        events: pairs.into_iter().collect(),
        terminal: world.is_terminal(),
    })
}

/// Restores the heading/velocity coupling after the contact response. The
/// response can transfer momentum between bodies, so the speed cap is
/// re-applied as well.
fn constrain_after_contact(agent: &mut AgentState, polar: bool, v_max: f64) {
    agent.velocity = agent.velocity.clamp_norm(v_max);
    if polar {
        // Nonholonomic bodies can only move along their heading.
        let heading = agent.heading();
        agent.velocity = heading * agent.velocity.dot(heading).max(0.0);
    } else if agent.velocity.norm() > 1e-9 {
        agent.orientation = agent.velocity.angle();
    }
}
