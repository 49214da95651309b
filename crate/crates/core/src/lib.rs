//! Multi-agent crowd simulation with reinforcement-learning tooling.
//!
//! The crate covers the full loop: scenario generation and a 2D kinematic
//! simulator ([`sim`]), per-agent observations ([`perception`]), the
//! component reward and energy metrics ([`reward`]), a numerical model of
//! how reward coefficients shape the preferred speed ([`analysis`]), a
//! permutation-invariant policy/value network with exact gradients
//! ([`policy`]) and shared-parameter PPO training ([`ppo`]).

pub mod analysis;
pub mod env;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod perception;
pub mod policy;
pub mod ppo;
pub mod reward;
pub mod sim;

pub use error::{Error, Result};
pub use exec::Exec;
pub use geometry::Vec2;
