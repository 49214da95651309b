//! Built-in scenario generators: Circle, Corridor, Crossing and Random.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AgentState, Obstacle, WorldState, AGENT_RADIUS, ARENA_SIZE};
use crate::error::{Error, Result};
use crate::geometry::{Rect, Vec2};

/// Rejection-sampling budget per agent.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

const GRID_SPACING: f64 = 0.8;
const WALL_MARGIN: f64 = 0.4;
const END_MARGIN: f64 = 0.5;
const MIN_GOAL_DISTANCE: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Circle,
    Corridor,
    Crossing,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpawnMode {
    Grid,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub n_agents: usize,
    #[serde(default = "defaults::circle_radius")]
    pub circle_radius: f64,
    #[serde(default = "defaults::corridor_width")]
    pub corridor_width: f64,
    #[serde(default = "defaults::corridor_length")]
    pub corridor_length: f64,
    #[serde(default = "defaults::spawn_mode")]
    pub spawn_mode: SpawnMode,
    /// Uniform per-axis noise amplitude for Circle spawns and goals.
    #[serde(default = "defaults::position_noise")]
    pub position_noise: f64,
    #[serde(default)]
    pub n_obstacles: usize,
    /// Half-size of the square in which Random starts and goals are drawn.
    #[serde(default = "defaults::random_extent")]
    pub random_extent: f64,
    /// Episode time limit in decision steps.
    #[serde(default = "defaults::t_max")]
    pub t_max: usize,
    #[serde(default)]
    pub seed: u64,
}

mod defaults {
    use super::SpawnMode;
    pub fn circle_radius() -> f64 {
        4.0
    }
    pub fn corridor_width() -> f64 {
        4.0
    }
    pub fn corridor_length() -> f64 {
        20.0
    }
    pub fn spawn_mode() -> SpawnMode {
        SpawnMode::Grid
    }
    pub fn position_noise() -> f64 {
        0.5
    }
    pub fn random_extent() -> f64 {
        9.0
    }
    pub fn t_max() -> usize {
        200
    }
}

impl ScenarioConfig {
    pub fn new(kind: ScenarioKind, n_agents: usize) -> Self {
        Self {
            kind,
            n_agents,
            circle_radius: defaults::circle_radius(),
            corridor_width: defaults::corridor_width(),
            corridor_length: defaults::corridor_length(),
            spawn_mode: defaults::spawn_mode(),
            position_noise: defaults::position_noise(),
            n_obstacles: 0,
            random_extent: defaults::random_extent(),
            t_max: defaults::t_max(),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let half = 0.5 * ARENA_SIZE;
        let problem = if self.n_agents == 0 {
            Some("n_agents must be at least 1")
        } else if self.t_max == 0 {
            Some("t_max must be positive")
        } else if self.circle_radius <= 0.0 || self.circle_radius > half {
            Some("circle_radius must lie in (0, 10]")
        } else if self.corridor_width <= 2.0 * WALL_MARGIN || self.corridor_width > ARENA_SIZE {
            Some("corridor_width out of range")
        } else if self.corridor_length <= 0.0 || self.corridor_length > ARENA_SIZE {
            Some("corridor_length must lie in (0, 20]")
        } else if self.position_noise < 0.0 {
            Some("position_noise must be non-negative")
        } else if self.random_extent <= 0.0 || self.random_extent > half - AGENT_RADIUS {
            Some("random_extent must lie in (0, 9.8]")
        } else {
            None
        };
        match problem {
            Some(msg) => Err(Error::InvalidConfig(msg.to_string())),
            None => Ok(()),
        }
    }
}

/// Builds the initial world for a scenario. Deterministic in `config.seed`.
pub fn build_scenario(config: &ScenarioConfig) -> Result<WorldState> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let bounds = Rect::centered_square(0.5 * ARENA_SIZE);
    let mut obstacles: Vec<Obstacle> = bounds
        .corners()
        .iter()
        .zip(bounds.corners().iter().cycle().skip(1))
        .map(|(&a, &b)| Obstacle::wall(a, b))
        .collect();

    let agents = match config.kind {
        ScenarioKind::Circle => {
            place_circle_obstacles(config, &mut rng, &mut obstacles, config.circle_radius - 1.0)?;
            circle_agents(config, &mut rng, &obstacles)?
        }
        ScenarioKind::Corridor => {
            obstacles.extend(corridor_walls(config, false));
            corridor_agents(config, &mut rng, &obstacles, false)?
        }
        ScenarioKind::Crossing => {
            obstacles.extend(corridor_walls(config, true));
            corridor_agents(config, &mut rng, &obstacles, true)?
        }
        ScenarioKind::Random => {
            place_circle_obstacles(config, &mut rng, &mut obstacles, config.random_extent)?;
            random_agents(config, &mut rng, &obstacles)?
        }
    };

    Ok(WorldState { agents, obstacles, step_index: 0, t_max: config.t_max, bounds })
}

fn is_clear(p: Vec2, agents: &[AgentState], obstacles: &[Obstacle]) -> bool {
    agents.iter().all(|a| a.position.distance(p) >= a.radius + AGENT_RADIUS + 1e-3)
        && obstacles.iter().all(|o| o.signed_distance(p) >= AGENT_RADIUS + 1e-3)
}

fn uniform(rng: &mut ChaCha8Rng, half: f64) -> f64 {
    if half > 0.0 {
        rng.random_range(-half..=half)
    } else {
        0.0
    }
}

fn place_circle_obstacles(
    config: &ScenarioConfig,
    rng: &mut ChaCha8Rng,
    obstacles: &mut Vec<Obstacle>,
    extent: f64,
) -> Result<()> {
    let extent = extent.max(0.0);
    for k in 0..config.n_obstacles {
        let mut placed = false;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let c = Vec2::new(uniform(rng, extent), uniform(rng, extent));
            if obstacles.iter().all(|o| o.signed_distance(c) >= 2.0 * AGENT_RADIUS + 1e-3) {
                obstacles.push(Obstacle::Circle { center: c, radius: AGENT_RADIUS });
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Placement { agent: k, attempts: MAX_PLACEMENT_ATTEMPTS });
        }
    }
    Ok(())
}

fn circle_agents(config: &ScenarioConfig, rng: &mut ChaCha8Rng, obstacles: &[Obstacle]) -> Result<Vec<AgentState>> {
    let n = config.n_agents;
    let noise = config.position_noise;
    let mut agents: Vec<AgentState> = Vec::with_capacity(n);
    for i in 0..n {
        let nominal = Vec2::from_angle(2.0 * PI * i as f64 / n as f64) * config.circle_radius;
        let mut spawned = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let start = nominal + Vec2::new(uniform(rng, noise), uniform(rng, noise));
            if is_clear(start, &agents, obstacles) {
                spawned = Some(start);
                break;
            }
        }
        let start = spawned.ok_or(Error::Placement { agent: i, attempts: MAX_PLACEMENT_ATTEMPTS })?;
        let goal = -nominal + Vec2::new(uniform(rng, noise), uniform(rng, noise));
        agents.push(AgentState::new(start, goal, (goal - start).angle()));
    }
    Ok(agents)
}

fn corridor_walls(config: &ScenarioConfig, crossing: bool) -> Vec<Obstacle> {
    let w = 0.5 * config.corridor_width;
    let l = 0.5 * config.corridor_length;
    if !crossing {
        return vec![
            Obstacle::wall(Vec2::new(-l, w), Vec2::new(l, w)),
            Obstacle::wall(Vec2::new(-l, -w), Vec2::new(l, -w)),
        ];
    }
    // Plus-shaped junction of two corridors.
    let mut walls = Vec::with_capacity(8);
    for sx in [-1.0, 1.0] {
        for sy in [-1.0, 1.0] {
            walls.push(Obstacle::wall(Vec2::new(sx * w, sy * w), Vec2::new(sx * l, sy * w)));
            walls.push(Obstacle::wall(Vec2::new(sx * w, sy * w), Vec2::new(sx * w, sy * l)));
        }
    }
    walls
}

/// Spawn positions for one group, starting at the `-x` end of a corridor
/// lying along the x axis.
fn corridor_group(
    config: &ScenarioConfig,
    rng: &mut ChaCha8Rng,
    count: usize,
    rotate: f64,
    placed: &[AgentState],
    obstacles: &[Obstacle],
    first_index: usize,
) -> Result<Vec<AgentState>> {
    let half_w = 0.5 * config.corridor_width - WALL_MARGIN;
    let x0 = -0.5 * config.corridor_length + END_MARGIN;
    let mut group: Vec<AgentState> = Vec::with_capacity(count);

    match config.spawn_mode {
        SpawnMode::Grid => {
            let rows = ((2.0 * half_w / GRID_SPACING).floor() as usize + 1).max(1);
            for k in 0..count {
                let (col, row) = (k / rows, k % rows);
                let local = Vec2::new(x0 + col as f64 * GRID_SPACING, -half_w + row as f64 * GRID_SPACING);
                if local.x > -WALL_MARGIN {
                    return Err(Error::Placement { agent: first_index + k, attempts: 1 });
                }
                let start = local.rotated(rotate);
                let goal = Vec2::new(-local.x, local.y).rotated(rotate);
                group.push(AgentState::new(start, goal, rotate));
            }
        }
        SpawnMode::Random => {
            let depth = (0.5 * config.corridor_length - END_MARGIN - 2.0).max(1.0);
            for k in 0..count {
                let mut spawned = None;
                for _ in 0..MAX_PLACEMENT_ATTEMPTS {
                    let local = Vec2::new(x0 + rng.random_range(0.0..=depth), uniform(rng, half_w));
                    let start = local.rotated(rotate);
                    let taken: Vec<AgentState> = placed.iter().chain(group.iter()).cloned().collect();
                    if is_clear(start, &taken, obstacles) {
                        spawned = Some(local);
                        break;
                    }
                }
                let local = spawned.ok_or(Error::Placement { agent: first_index + k, attempts: MAX_PLACEMENT_ATTEMPTS })?;
                let goal = Vec2::new(-local.x, local.y).rotated(rotate);
                group.push(AgentState::new(local.rotated(rotate), goal, rotate));
            }
        }
    }
    Ok(group)
}

fn corridor_agents(
    config: &ScenarioConfig,
    rng: &mut ChaCha8Rng,
    obstacles: &[Obstacle],
    crossing: bool,
) -> Result<Vec<AgentState>> {
    let first = config.n_agents.div_ceil(2);
    let second = config.n_agents - first;
    // Corridor: the second group walks the same corridor in the opposite
    // direction. Crossing: it walks the perpendicular corridor.
    let second_rotation = if crossing { PI / 2.0 } else { PI };
    let mut agents = corridor_group(config, rng, first, 0.0, &[], obstacles, 0)?;
    let other = corridor_group(config, rng, second, second_rotation, &agents, obstacles, first)?;
    agents.extend(other);
    Ok(agents)
}

fn random_agents(config: &ScenarioConfig, rng: &mut ChaCha8Rng, obstacles: &[Obstacle]) -> Result<Vec<AgentState>> {
    let e = config.random_extent;
    let mut agents: Vec<AgentState> = Vec::with_capacity(config.n_agents);
    for i in 0..config.n_agents {
        let mut chosen = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let start = Vec2::new(uniform(rng, e), uniform(rng, e));
            let goal = Vec2::new(uniform(rng, e), uniform(rng, e));
            let goal_free = obstacles
                .iter()
                .filter(|o| !o.is_wall())
                .all(|o| o.signed_distance(goal) >= AGENT_RADIUS);
            if is_clear(start, &agents, obstacles) && goal_free && start.distance(goal) >= MIN_GOAL_DISTANCE {
                chosen = Some((start, goal));
                break;
            }
        }
        let (start, goal) = chosen.ok_or(Error::Placement { agent: i, attempts: MAX_PLACEMENT_ATTEMPTS })?;
        let orientation = PI - rng.random_range(0.0..2.0 * PI);
        agents.push(AgentState::new(start, goal, orientation));
    }
    Ok(agents)
}
