//! Per-agent observations: proprioception, raycasts and direct neighbor
//! perception, expressed in the Absolute, Relative or Egocentric frame.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::sim::{AgentState, Obstacle, WorldState};

/// Width of one neighbor feature: position (2), velocity (2), distance.
pub const NEIGHBOR_FEATURES: usize = 5;

/// Proprioception layout: `[p.x, p.y, goal.x, goal.y, cos φ, sin φ, v.x, v.y]`.
pub const PROPRIO_LEN: usize = 8;

pub type NeighborFeature = [f64; NEIGHBOR_FEATURES];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerceptionMode {
    Raycast,
    AgentPerception,
    Hybrid,
}

impl PerceptionMode {
    pub fn uses_rays(self) -> bool {
        matches!(self, PerceptionMode::Raycast | PerceptionMode::Hybrid)
    }

    pub fn uses_neighbors(self) -> bool {
        matches!(self, PerceptionMode::AgentPerception | PerceptionMode::Hybrid)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Absolute,
    Relative,
    Egocentric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerceptionConfig {
    pub mode: PerceptionMode,
    pub frame: Frame,
    #[serde(default = "defaults::n_rays")]
    pub n_rays: usize,
    #[serde(default = "defaults::ray_range")]
    pub ray_range: f64,
    #[serde(default = "defaults::k_neighbors")]
    pub k_neighbors: usize,
    #[serde(default = "defaults::frame_stack")]
    pub frame_stack: usize,
}

mod defaults {
    pub fn n_rays() -> usize {
        20
    }
    pub fn ray_range() -> f64 {
        10.0
    }
    pub fn k_neighbors() -> usize {
        10
    }
    pub fn frame_stack() -> usize {
        1
    }
}

impl PerceptionConfig {
    pub fn new(mode: PerceptionMode, frame: Frame) -> Self {
        Self {
            mode,
            frame,
            n_rays: defaults::n_rays(),
            ray_range: defaults::ray_range(),
            k_neighbors: defaults::k_neighbors(),
            frame_stack: defaults::frame_stack(),
        }
    }

    /// Length of the ray block of an observation (0 if rays are unused).
    pub fn ray_block_len(&self) -> usize {
        if self.mode.uses_rays() {
            self.n_rays * self.frame_stack
        } else {
            0
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.n_rays < 3 || self.ray_range <= 0.0 || !(1..=2).contains(&self.frame_stack) {
            return Err(crate::Error::InvalidConfig(format!(
                "perception needs n_rays >= 3, ray_range > 0 and frame_stack in 1..=2, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub proprio: Vec<f64>,
    /// `n_rays * frame_stack` normalised distances, oldest frame first.
    pub rays: Option<Vec<f64>>,
    /// At most `k_neighbors` entries, nearest first.
    pub neighbors: Option<Vec<NeighborFeature>>,
}

/// Which bodies a ray can hit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RayTargets {
    All,
    WallsOnly,
}

/// Rotation that maps the agent's heading onto +x.
fn to_heading_frame(v: Vec2, orientation: f64) -> Vec2 {
    v.rotated(-orientation)
}

/// Expresses a world point (or velocity, with `is_velocity`) in `frame`
/// relative to `agent`.
pub fn frame_transform(frame: Frame, agent: &AgentState, point: Vec2, is_velocity: bool) -> Vec2 {
    match (frame, is_velocity) {
        (Frame::Absolute, _) | (Frame::Relative, true) => point,
        (Frame::Relative, false) => point - agent.position,
        (Frame::Egocentric, true) => to_heading_frame(point, agent.orientation),
        (Frame::Egocentric, false) => to_heading_frame(point - agent.position, agent.orientation),
    }
}

pub fn proprioception(agent: &AgentState, frame: Frame) -> Vec<f64> {
    let goal = frame_transform(frame, agent, agent.goal, false);
    let vel = frame_transform(frame, agent, agent.velocity, true);
    let (s, c) = agent.orientation.sin_cos();
    vec![agent.position.x, agent.position.y, goal.x, goal.y, c, s, vel.x, vel.y]
}

/// Distance along the unit direction `dir` from `origin` to the circle, if hit.
fn ray_circle(origin: Vec2, dir: Vec2, center: Vec2, radius: f64) -> Option<f64> {
    let oc = origin - center;
    let c = oc.norm_sq() - radius * radius;
    if c <= 0.0 {
        return Some(0.0);
    }
    let b = oc.dot(dir);
    if b >= 0.0 {
        return None;
    }
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    Some(-b - disc.sqrt())
}

/// Distance from `origin` along `dir` to segment `a`-`b`, if hit.
fn ray_segment(origin: Vec2, dir: Vec2, a: Vec2, b: Vec2) -> Option<f64> {
    let e = b - a;
    let denom = dir.cross(e);
    if denom.abs() < 1e-15 {
        return None;
    }
    let ao = a - origin;
    let t = ao.cross(e) / denom;
    let u = ao.cross(dir) / denom;
    (t >= 0.0 && (0.0..=1.0).contains(&u)).then_some(t)
}

/// Ray against a capsule (segment swept by a disc of `thickness / 2`).
fn ray_wall(origin: Vec2, dir: Vec2, start: Vec2, end: Vec2, thickness: f64) -> Option<f64> {
    let r = 0.5 * thickness;
    if r <= 0.0 {
        return ray_segment(origin, dir, start, end);
    }
    let inside = Obstacle::Wall { start, end, thickness }.signed_distance(origin) <= 0.0;
    if inside {
        return Some(0.0);
    }
    let normal = match (end - start).normalized() {
        Some(axis) => Vec2::new(-axis.y, axis.x) * r,
        None => return ray_circle(origin, dir, start, r),
    };
    [
        ray_segment(origin, dir, start + normal, end + normal),
        ray_segment(origin, dir, start - normal, end - normal),
        ray_circle(origin, dir, start, r),
        ray_circle(origin, dir, end, r),
    ]
    .into_iter()
    .flatten()
    .reduce(f64::min)
}

/// Distance to the first body hit by a ray from `origin` along unit `dir`,
/// or `None` if nothing is hit at any range.
pub fn cast_ray(
    world: &WorldState,
    skip_agent: Option<usize>,
    origin: Vec2,
    dir: Vec2,
    targets: RayTargets,
) -> Option<f64> {
    let mut best: Option<f64> = None;
    let mut consider = |d: Option<f64>| {
        if let Some(d) = d {
            best = Some(best.map_or(d, |b| b.min(d)));
        }
    };
    for obstacle in &world.obstacles {
        match *obstacle {
            Obstacle::Wall { start, end, thickness } => consider(ray_wall(origin, dir, start, end, thickness)),
            Obstacle::Circle { center, radius } if targets == RayTargets::All => {
                consider(ray_circle(origin, dir, center, radius))
            }
            Obstacle::Circle { .. } => {}
        }
    }
    if targets == RayTargets::All {
        for (j, other) in world.agents.iter().enumerate() {
            if Some(j) == skip_agent || !other.active {
                continue;
            }
            consider(ray_circle(origin, dir, other.position, other.radius));
        }
    }
    best
}

/// Unit directions of the rays for `agent`. Absolute-frame rays use fixed
/// world angles; Relative and Egocentric rays rotate with the heading.
pub fn ray_directions(agent: &AgentState, cfg: &PerceptionConfig) -> Vec<Vec2> {
    let base = match cfg.frame {
        Frame::Absolute => 0.0,
        Frame::Relative | Frame::Egocentric => agent.orientation,
    };
    (0..cfg.n_rays)
        .map(|k| Vec2::from_angle(base + 2.0 * PI * k as f64 / cfg.n_rays as f64))
        .collect()
}

/// Normalised ray distances in `[0, 1]`; `1.0` means nothing within range.
pub fn raycast(world: &WorldState, agent_id: usize, cfg: &PerceptionConfig, targets: RayTargets) -> Vec<f64> {
    let agent = &world.agents[agent_id];
    ray_directions(agent, cfg)
        .into_iter()
        .map(|dir| {
            cast_ray(world, Some(agent_id), agent.position, dir, targets)
                .map_or(1.0, |d| d.min(cfg.ray_range) / cfg.ray_range)
        })
        .collect()
}

/// The `k_neighbors` nearest bodies (other agents, arrived agents and circle
/// obstacles as stationary entries), nearest first.
pub fn agent_perception(world: &WorldState, agent_id: usize, cfg: &PerceptionConfig) -> Vec<NeighborFeature> {
    let me = &world.agents[agent_id];
    let agents = world
        .agents
        .iter()
        .enumerate()
        .filter(|&(j, a)| j != agent_id && a.active)
        .map(|(_, a)| (a.position, a.velocity));
    let obstacles = world.obstacles.iter().filter_map(|o| match *o {
        Obstacle::Circle { center, .. } => Some((center, Vec2::ZERO)),
        Obstacle::Wall { .. } => None,
    });

    let mut candidates: Vec<(f64, Vec2, Vec2)> = agents
        .chain(obstacles)
        .map(|(p, v)| (p.distance(me.position), p, v))
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    candidates.truncate(cfg.k_neighbors);

    candidates
        .into_iter()
        .map(|(dist, p, v)| {
            let p = frame_transform(cfg.frame, me, p, false);
            let v = frame_transform(cfg.frame, me, v, true);
            [p.x, p.y, v.x, v.y, dist]
        })
        .collect()
}

/// Builds the full observation. `previous_rays` is last decision step's ray
/// block for frame stacking; `None` at the start of an episode.
pub fn assemble(
    world: &WorldState,
    agent_id: usize,
    cfg: &PerceptionConfig,
    previous_rays: Option<&[f64]>,
) -> Observation {
    let proprio = proprioception(&world.agents[agent_id], cfg.frame);
    let rays = match cfg.mode {
        PerceptionMode::Raycast => Some(raycast(world, agent_id, cfg, RayTargets::All)),
        PerceptionMode::Hybrid => Some(raycast(world, agent_id, cfg, RayTargets::WallsOnly)),
        PerceptionMode::AgentPerception => None,
    };
    let rays = rays.map(|current| {
        if cfg.frame_stack < 2 {
            return current;
        }
        let mut stacked = Vec::with_capacity(current.len() * cfg.frame_stack);
        match previous_rays {
            Some(prev) => stacked.extend_from_slice(prev),
            None => stacked.resize(current.len() * (cfg.frame_stack - 1), 0.0),
        }
        stacked.extend_from_slice(&current);
        stacked
    });
    let neighbors = cfg.mode.uses_neighbors().then(|| agent_perception(world, agent_id, cfg));
    Observation { proprio, rays, neighbors }
}

/// The most recent ray frame of an observation, for stacking into the next one.
pub fn latest_ray_frame<'a>(obs: &'a Observation, cfg: &PerceptionConfig) -> Option<&'a [f64]> {
    obs.rays.as_deref().map(|r| &r[r.len() - cfg.n_rays..])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rect;

    fn agent_at(p: Vec2, orientation: f64) -> AgentState {
        AgentState::new(p, Vec2::ZERO, orientation)
    }

    fn world(agents: Vec<AgentState>, obstacles: Vec<Obstacle>) -> WorldState {
        WorldState { agents, obstacles, step_index: 0, t_max: 100, bounds: Rect::centered_square(10.0) }
    }

    fn close(a: Vec2, b: Vec2) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn frame_examples() {
        let me = agent_at(Vec2::ZERO, 0.0);
        assert!(close(frame_transform(Frame::Egocentric, &me, Vec2::new(1.0, 0.0), false), Vec2::new(1.0, 0.0)));

        let me = agent_at(Vec2::new(1.0, 1.0), PI / 2.0);
        assert!(close(frame_transform(Frame::Egocentric, &me, Vec2::new(1.0, 2.0), false), Vec2::new(1.0, 0.0)));

        let me = agent_at(Vec2::new(3.0, 4.0), 0.3);
        assert!(close(frame_transform(Frame::Relative, &me, Vec2::new(5.0, 4.0), false), Vec2::new(2.0, 0.0)));
        assert!(close(frame_transform(Frame::Relative, &me, Vec2::new(0.0, 1.0), true), Vec2::new(0.0, 1.0)));
        assert!(close(frame_transform(Frame::Absolute, &me, Vec2::new(5.0, 4.0), false), Vec2::new(5.0, 4.0)));
    }

    #[test]
    fn proprio_examples() {
        let mut me = AgentState::new(Vec2::ZERO, Vec2::new(8.0, 0.0), 0.0);
        assert_eq!(proprioception(&me, Frame::Absolute), vec![0.0, 0.0, 8.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        me.orientation = PI;
        let ego = proprioception(&me, Frame::Egocentric);
        assert!((ego[2] + 8.0).abs() < 1e-12 && ego[3].abs() < 1e-12);

        let me = AgentState::new(Vec2::new(2.0, 3.0), Vec2::new(5.0, 7.0), 0.0);
        let rel = proprioception(&me, Frame::Relative);
        assert_eq!(&rel[2..4], &[3.0, 4.0]);
    }

    #[test]
    fn empty_world_rays_all_clear() {
        let w = world(vec![agent_at(Vec2::ZERO, 0.0)], vec![]);
        let cfg = PerceptionConfig::new(PerceptionMode::Raycast, Frame::Egocentric);
        assert!(raycast(&w, 0, &cfg, RayTargets::All).iter().all(|&r| r == 1.0));
    }

    #[test]
    fn neighbor_dead_ahead() {
        let w = world(vec![agent_at(Vec2::ZERO, 0.0), agent_at(Vec2::new(2.2, 0.0), 0.0)], vec![]);
        let cfg = PerceptionConfig::new(PerceptionMode::Raycast, Frame::Egocentric);
        let rays = raycast(&w, 0, &cfg, RayTargets::All);
        assert!((rays[0] - 0.2).abs() < 1e-12);
        assert_eq!(rays[cfg.n_rays / 2], 1.0);
    }

    #[test]
    fn walls_only_ignores_agents() {
        let wall = Obstacle::wall(Vec2::new(-1.0, -5.0), Vec2::new(-1.0, 5.0));
        let w = world(vec![agent_at(Vec2::ZERO, 0.0), agent_at(Vec2::new(-0.5, 0.0), 0.0)], vec![wall]);
        let cfg = PerceptionConfig::new(PerceptionMode::Hybrid, Frame::Egocentric);
        let back = cfg.n_rays / 2;
        let walls = raycast(&w, 0, &cfg, RayTargets::WallsOnly);
        assert!((walls[back] - 0.1).abs() < 1e-12);
        let all = raycast(&w, 0, &cfg, RayTargets::All);
        assert!((all[back] - 0.03).abs() < 1e-12);
    }

    #[test]
    fn thick_wall_hit_at_surface() {
        let wall = Obstacle::Wall { start: Vec2::new(3.0, -5.0), end: Vec2::new(3.0, 5.0), thickness: 0.4 };
        let w = world(vec![agent_at(Vec2::ZERO, 0.0)], vec![wall]);
        let d = cast_ray(&w, Some(0), Vec2::ZERO, Vec2::new(1.0, 0.0), RayTargets::WallsOnly).unwrap();
        assert!((d - 2.8).abs() < 1e-12);
    }

    #[test]
    fn lone_agent_has_no_neighbors() {
        let w = world(vec![agent_at(Vec2::ZERO, 0.0)], vec![]);
        let cfg = PerceptionConfig::new(PerceptionMode::AgentPerception, Frame::Absolute);
        assert!(agent_perception(&w, 0, &cfg).is_empty());
    }

    #[test]
    fn keeps_the_ten_nearest() {
        let mut agents = vec![agent_at(Vec2::ZERO, 0.0)];
        for k in 0..12 {
            agents.push(agent_at(Vec2::from_angle(k as f64) * (1.0 + k as f64 * 0.5), 0.0));
        }
        let w = world(agents, vec![]);
        let cfg = PerceptionConfig::new(PerceptionMode::AgentPerception, Frame::Relative);
        let n = agent_perception(&w, 0, &cfg);
        assert_eq!(n.len(), 10);
        assert!(n.windows(2).all(|p| p[0][4] <= p[1][4]));
        assert!((n[9][4] - 5.5).abs() < 1e-12);
    }

    #[test]
    fn head_on_neighbor_feature() {
        let mut other = agent_at(Vec2::new(1.0, 0.0), PI);
        other.velocity = Vec2::new(-1.0, 0.0);
        let w = world(vec![agent_at(Vec2::ZERO, 0.0), other], vec![]);
        let cfg = PerceptionConfig::new(PerceptionMode::AgentPerception, Frame::Egocentric);
        assert_eq!(agent_perception(&w, 0, &cfg), vec![[1.0, 0.0, -1.0, 0.0, 1.0]]);
    }

    #[test]
    fn obstacles_enter_as_stationary_neighbors() {
        let w = world(
            vec![agent_at(Vec2::ZERO, 0.0)],
            vec![
                Obstacle::Circle { center: Vec2::new(0.0, 2.0), radius: 0.2 },
                Obstacle::wall(Vec2::new(1.0, -1.0), Vec2::new(1.0, 1.0)),
            ],
        );
        let cfg = PerceptionConfig::new(PerceptionMode::AgentPerception, Frame::Absolute);
        assert_eq!(agent_perception(&w, 0, &cfg), vec![[0.0, 2.0, 0.0, 0.0, 2.0]]);
    }

    #[test]
    fn mode_contracts() {
        let w = world(vec![agent_at(Vec2::ZERO, 0.0), agent_at(Vec2::new(1.0, 1.0), 0.0)], vec![]);
        let ap = assemble(&w, 0, &PerceptionConfig::new(PerceptionMode::AgentPerception, Frame::Egocentric), None);
        assert!(ap.rays.is_none());
        assert_eq!(ap.neighbors.as_ref().map(Vec::len), Some(1));

        let rc = assemble(&w, 0, &PerceptionConfig::new(PerceptionMode::Raycast, Frame::Egocentric), None);
        assert!(rc.neighbors.is_none());
        assert_eq!(rc.rays.as_ref().map(Vec::len), Some(20));
    }

    #[test]
    fn frame_stack_starts_with_zeros() {
        let w = world(vec![agent_at(Vec2::ZERO, 0.0), agent_at(Vec2::new(1.0, 0.0), 0.0)], vec![]);
        let mut cfg = PerceptionConfig::new(PerceptionMode::Raycast, Frame::Egocentric);
        cfg.frame_stack = 2;
        let first = assemble(&w, 0, &cfg, None);
        let rays = first.rays.as_ref().unwrap();
        assert_eq!(rays.len(), 40);
        assert!(rays[..20].iter().all(|&r| r == 0.0));
        assert_eq!(&rays[20..], raycast(&w, 0, &cfg, RayTargets::All).as_slice());

        let prev = latest_ray_frame(&first, &cfg).unwrap().to_vec();
        let second = assemble(&w, 0, &cfg, Some(&prev));
        assert_eq!(&second.rays.unwrap()[..20], prev.as_slice());
    }
}
