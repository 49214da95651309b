use serde::{Deserialize, Serialize};

use super::WorldState;

/// Penetration below this depth is treated as resting contact, not a collision.
pub const CONTACT_TOLERANCE: f64 = 1e-6;

const MAX_PASSES: usize = 64;
const SETTLED_OVERLAP: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Partner {
    Agent(usize),
    Obstacle(usize),
}

/// One overlapping pair. For agent pairs `agent < other`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub agent: usize,
    pub partner: Partner,
}

/// Separates every overlapping body and removes approaching normal velocity.
///
/// Mobile agents share the penetration equally; obstacles never move. The
/// projection is repeated (Gauss-Seidel style) until nothing overlaps, since
/// pushing one pair apart can create a new overlap in a dense group. Returns
/// the pairs that were overlapping when the call started.
pub fn resolve_collisions(world: &mut WorldState) -> Vec<CollisionEvent> {
    let mut events = Vec::new();
    for pass in 0..MAX_PASSES {
        let mut worst = 0.0f64;
        let n = world.agents.len();

        for i in 0..n {
            if !world.agents[i].active {
                continue;
            }
            for j in (i + 1)..n {
                if !world.agents[j].active {
                    continue;
                }
                let (left, right) = world.agents.split_at_mut(j);
                let a = &mut left[i];
                let b = &mut right[0];
                let offset = b.position - a.position;
                let dist = offset.norm();
                let depth = a.radius + b.radius - dist;
                if depth <= SETTLED_OVERLAP {
                    continue;
                }
                if pass == 0 && depth > CONTACT_TOLERANCE {
                    events.push(CollisionEvent { agent: i, partner: Partner::Agent(j) });
                }
                worst = worst.max(depth);
                let normal = offset.normalized().unwrap_or(crate::geometry::Vec2::new(1.0, 0.0));
                a.position -= normal * (0.5 * depth);
                b.position += normal * (0.5 * depth);
                let approach = (b.velocity - a.velocity).dot(normal);
                if approach < 0.0 {
                    a.velocity += normal * (0.5 * approach);
                    b.velocity -= normal * (0.5 * approach);
                }
            }
        }

        for (i, agent) in world.agents.iter_mut().enumerate() {
            if !agent.active {
                continue;
            }
            for (k, obstacle) in world.obstacles.iter().enumerate() {
                let Some((normal, depth)) = obstacle.contact(agent.position, agent.radius) else {
                    continue;
                };
                if depth <= SETTLED_OVERLAP {
                    continue;
                }
                if pass == 0 && depth > CONTACT_TOLERANCE {
                    events.push(CollisionEvent { agent: i, partner: Partner::Obstacle(k) });
                }
                worst = worst.max(depth);
                agent.position += normal * depth;
                let vn = agent.velocity.dot(normal);
                if vn < 0.0 {
                    agent.velocity -= normal * vn;
                }
            }
        }

        if worst <= SETTLED_OVERLAP {
            break;
        }
    }
    events
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Rect, Vec2};
    use crate::sim::{AgentState, Obstacle};

    fn world(agents: Vec<AgentState>, obstacles: Vec<Obstacle>) -> WorldState {
        WorldState { agents, obstacles, step_index: 0, t_max: 10, bounds: Rect::centered_square(10.0) }
    }

    #[test]
    fn separated_agents_untouched() {
        let mut w = world(
            vec![
                AgentState::new(Vec2::new(0.0, 0.0), Vec2::ZERO, 0.0),
                AgentState::new(Vec2::new(0.5, 0.0), Vec2::ZERO, 0.0),
            ],
            vec![],
        );
        let before = w.clone();
        assert!(resolve_collisions(&mut w).is_empty());
        assert_eq!(w, before);
    }

    #[test]
    fn head_on_pair_split_symmetrically() {
        let mut a = AgentState::new(Vec2::new(0.0, 0.0), Vec2::ZERO, 0.0);
        let mut b = AgentState::new(Vec2::new(0.3, 0.0), Vec2::ZERO, 0.0);
        a.velocity = Vec2::new(1.0, 0.0);
        b.velocity = Vec2::new(-1.0, 0.0);
        let mut w = world(vec![a, b], vec![]);
        let events = resolve_collisions(&mut w);
        assert_eq!(events, vec![CollisionEvent { agent: 0, partner: Partner::Agent(1) }]);
        assert!((w.agents[0].position.x + 0.05).abs() < 1e-12);
        assert!((w.agents[1].position.x - 0.35).abs() < 1e-12);
        assert!(w.agents[0].velocity.norm() < 1e-12);
        assert!(w.agents[1].velocity.norm() < 1e-12);
    }

    #[test]
    fn tangential_velocity_preserved() {
        let mut a = AgentState::new(Vec2::new(0.0, 0.0), Vec2::ZERO, 0.0);
        let b = AgentState::new(Vec2::new(0.3, 0.0), Vec2::ZERO, 0.0);
        a.velocity = Vec2::new(1.0, 0.7);
        let mut w = world(vec![a, b], vec![]);
        resolve_collisions(&mut w);
        assert!((w.agents[0].velocity.y - 0.7).abs() < 1e-12);
        assert!((w.agents[0].velocity.x - 0.5).abs() < 1e-12);
        assert!((w.agents[1].velocity.x - 0.5).abs() < 1e-12);
    }

    #[test]
    fn wall_pushes_full_depth() {
        let wall = Obstacle::wall(Vec2::new(-5.0, 1.0), Vec2::new(5.0, 1.0));
        let mut a = AgentState::new(Vec2::new(0.0, 0.85), Vec2::ZERO, 0.0);
        a.velocity = Vec2::new(0.3, 1.0);
        let mut w = world(vec![a], vec![wall]);
        let events = resolve_collisions(&mut w);
        assert_eq!(events, vec![CollisionEvent { agent: 0, partner: Partner::Obstacle(0) }]);
        assert!((w.agents[0].position.y - 0.8).abs() < 1e-12);
        assert_eq!(w.agents[0].position.x, 0.0);
        assert!(w.agents[0].velocity.y.abs() < 1e-12);
        assert!((w.agents[0].velocity.x - 0.3).abs() < 1e-12);
    }

    #[test]
    fn dense_cluster_fully_separated() {
        let agents = (0..12)
            .map(|k| {
                let angle = k as f64 * 0.52;
                AgentState::new(Vec2::from_angle(angle) * (0.05 * k as f64), Vec2::ZERO, 0.0)
            })
            .collect();
        let mut w = world(agents, vec![]);
        resolve_collisions(&mut w);
        assert!(w.max_agent_overlap() <= 1e-6, "overlap {}", w.max_agent_overlap());
    }
}
