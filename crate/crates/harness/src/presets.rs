//! Named experiment configurations.
//!
//! Desk-scale presets train in minutes on a laptop core. The large ones match
//! the full crowd sizes and are meant for long runs on bigger machines.

use crowd_core::perception::{Frame, PerceptionConfig, PerceptionMode};
use crowd_core::policy::NetConfig;
use crowd_core::ppo::PpoConfig;
use crowd_core::reward::{EnergyModel, RewardConfig};
use crowd_core::sim::{DynamicsConfig, DynamicsModel, ScenarioConfig, ScenarioKind};

use crate::config::{EvalConfig, ExperimentConfig};

/// `(name, description)` of every preset.
pub const PRESETS: &[(&str, &str)] = &[
    ("single", "one agent, random start and goal"),
    ("circle6", "6 agents swapping places across a 2.5 m circle"),
    ("circle12", "12 agents swapping places across a circle"),
    ("corridor10", "10 agents, two groups passing in a corridor"),
    ("crossing10", "10 agents, two perpendicular streams"),
    ("random8", "8 agents with random starts and goals"),
    ("circle30", "full-size circle, 30 agents"),
    ("corridor50", "full-size corridor, 50 agents"),
    ("crossing50", "full-size crossing, 50 agents"),
    ("random20", "full-size random, 20 agents"),
];

fn base(kind: ScenarioKind, n_agents: usize) -> ExperimentConfig {
    ExperimentConfig {
        n_iterations: 200,
        n_seeds: 1,
        output_dir: None,
        checkpoint_every: 0,
        scenario: ScenarioConfig::new(kind, n_agents),
        perception: PerceptionConfig::new(PerceptionMode::AgentPerception, Frame::Egocentric),
        dynamics: DynamicsConfig::new(DynamicsModel::PolarVelocity),
        reward: RewardConfig::default(),
        energy: EnergyModel::default(),
        ppo: PpoConfig::default(),
        policy: NetConfig::default(),
        eval: EvalConfig::default(),
    }
}

fn desk(kind: ScenarioKind, n_agents: usize) -> ExperimentConfig {
    let mut cfg = base(kind, n_agents);
    cfg.ppo.learning_rate = 1e-3;
    cfg.ppo.n_parallel_worlds = 2;
    cfg
}

fn full(kind: ScenarioKind, n_agents: usize) -> ExperimentConfig {
    let mut cfg = base(kind, n_agents);
    cfg.n_iterations = 1000;
    cfg.n_seeds = 8;
    cfg.ppo.steps_per_iteration = 512;
    cfg.ppo.minibatch_size = 1024;
    cfg.ppo.n_parallel_worlds = 8;
    cfg
}

pub fn preset(name: &str) -> Option<ExperimentConfig> {
    use ScenarioKind::*;
    let cfg = match name {
        "single" => {
            let mut cfg = base(Random, 1);
            cfg.ppo.learning_rate = 3e-3;
            cfg
        }
        "circle6" => {
            // Keeps the spacing along the circle close to that of 12 agents
            // on a 4 m circle.
            let mut cfg = desk(Circle, 6);
            cfg.scenario.circle_radius = 2.5;
            cfg
        }
        "circle12" => desk(Circle, 12),
        "corridor10" => desk(Corridor, 10),
        "crossing10" => desk(Crossing, 10),
        "random8" => desk(Random, 8),
        "circle30" => {
            let mut cfg = full(Circle, 30);
            cfg.scenario.circle_radius = 8.0;
            cfg
        }
        "corridor50" => full(Corridor, 50),
        "crossing50" => full(Crossing, 50),
        "random20" => full(Random, 20),
        _ => return None,
    };
    Some(cfg)
}
