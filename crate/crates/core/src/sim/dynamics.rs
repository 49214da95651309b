use super::{AgentState, DynamicsConfig, DynamicsModel};
use crate::geometry::{wrap_angle, Vec2};

/// Integrates one agent over `dt` seconds under the configured action space.
///
/// Actions live in `[-1, 1]²`. Cartesian actions are additionally limited to
/// the unit disc so a diagonal command cannot exceed the speed cap. For Polar
/// models `action.x` is the linear command (negative values mean "stop" for
/// velocity control, "brake" for acceleration control) and `action.y` the
/// turn rate as a fraction of `omega_max`.
pub fn integrate_dynamics(agent: &AgentState, action: Vec2, cfg: &DynamicsConfig, dt: f64) -> AgentState {
    let action = Vec2::new(action.x.clamp(-1.0, 1.0), action.y.clamp(-1.0, 1.0));
    let mut next = agent.clone();
    let lambda = cfg.damping();

    match cfg.model {
        DynamicsModel::CartesianVelocity => {
            next.velocity = (action.clamp_norm(1.0) * cfg.v_max).clamp_norm(cfg.v_max);
        }
        DynamicsModel::CartesianAcceleration => {
            let accel = action.clamp_norm(1.0) * cfg.a_max;
            let v = agent.velocity;
            next.velocity = (v + (accel - v * lambda) * dt).clamp_norm(cfg.v_max);
        }
        DynamicsModel::PolarVelocity => {
            next.orientation = wrap_angle(agent.orientation + action.y * cfg.omega_max * dt);
            let speed = action.x.max(0.0) * cfg.v_max;
            next.velocity = Vec2::from_angle(next.orientation) * speed;
        }
        DynamicsModel::PolarAcceleration => {
            next.orientation = wrap_angle(agent.orientation + action.y * cfg.omega_max * dt);
            let speed = agent.velocity.dot(agent.heading()).max(0.0);
            let speed = (speed + (action.x * cfg.a_max - lambda * speed) * dt).clamp(0.0, cfg.v_max);
            next.velocity = Vec2::from_angle(next.orientation) * speed;
        }
    }

    if !cfg.model.is_polar() && next.velocity.norm() > 1e-9 {
        next.orientation = next.velocity.angle();
    }
    next.position = agent.position + next.velocity * dt;
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn agent() -> AgentState {
        AgentState::new(Vec2::ZERO, Vec2::new(10.0, 0.0), 0.0)
    }

    #[test]
    fn cartesian_velocity_full_action() {
        let cfg = DynamicsConfig::new(DynamicsModel::CartesianVelocity);
        let next = integrate_dynamics(&agent(), Vec2::new(1.0, 0.0), &cfg, cfg.decision_dt);
        assert_eq!(next.velocity, Vec2::new(2.0, 0.0));
        assert_eq!(next.orientation, 0.0);
    }

    #[test]
    fn diagonal_velocity_is_capped() {
        let cfg = DynamicsConfig::new(DynamicsModel::CartesianVelocity);
        let next = integrate_dynamics(&agent(), Vec2::new(1.0, 1.0), &cfg, cfg.decision_dt);
        assert!((next.velocity.norm() - 2.0).abs() < 1e-12);
        assert!((next.orientation - PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn linear_damping_matches_closed_form() {
        // v(t) = (a_max/λ)(1 - e^{-λt}) for the ODE dv/dt = a_max - λv.
        let cfg = DynamicsConfig::new(DynamicsModel::CartesianAcceleration);
        let lambda = cfg.damping();
        assert_eq!(lambda, 1.0);
        let mut a = agent();
        let dt = cfg.substep_dt();
        let mut prev_speed = 0.0;
        for _ in 0..60 * cfg.physics_substeps {
            a = integrate_dynamics(&a, Vec2::new(1.0, 0.0), &cfg, dt);
            assert!(a.speed() >= prev_speed, "speed must rise monotonically");
            prev_speed = a.speed();
        }
        let closed = 2.0 * (1.0 - (-5.0f64).exp());
        assert!((a.speed() - closed).abs() / closed < 1e-2);
        assert!((a.speed() - 2.0).abs() / 2.0 < 1e-2);
    }

    #[test]
    fn polar_velocity_pure_turn() {
        let cfg = DynamicsConfig::new(DynamicsModel::PolarVelocity);
        let start = agent();
        let next = integrate_dynamics(&start, Vec2::new(0.0, 0.5), &cfg, cfg.decision_dt);
        assert_eq!(next.position, start.position);
        assert!((next.orientation - 0.5 * cfg.omega_max * cfg.decision_dt).abs() < 1e-12);
    }

    #[test]
    fn polar_velocity_negative_linear_command_stops() {
        let cfg = DynamicsConfig::new(DynamicsModel::PolarVelocity);
        let next = integrate_dynamics(&agent(), Vec2::new(-1.0, 0.0), &cfg, cfg.decision_dt);
        assert_eq!(next.velocity, Vec2::ZERO);
    }

    #[test]
    fn polar_acceleration_never_reverses() {
        let cfg = DynamicsConfig::new(DynamicsModel::PolarAcceleration);
        let mut a = agent();
        a.velocity = Vec2::new(0.05, 0.0);
        let next = integrate_dynamics(&a, Vec2::new(-1.0, 0.0), &cfg, cfg.decision_dt);
        assert_eq!(next.speed(), 0.0);
    }

    fn arb_model() -> impl Strategy<Value = DynamicsModel> {
        prop::sample::select(DynamicsModel::ALL.to_vec())
    }

    proptest! {
        #[test]
        fn speed_cap_and_heading_coupling(
            model in arb_model(),
            actions in prop::collection::vec((-1.0f64..=1.0, -1.0f64..=1.0), 1..40),
        ) {
            let cfg = DynamicsConfig::new(model);
            let mut a = agent();
            for (x, y) in actions {
                a = integrate_dynamics(&a, Vec2::new(x, y), &cfg, cfg.substep_dt());
                prop_assert!(a.speed() <= cfg.v_max + 1e-9);
                prop_assert!(a.orientation > -PI && a.orientation <= PI);
                if a.speed() > 1e-9 {
                    let dir = a.velocity.angle();
                    prop_assert!(crate::geometry::wrap_angle(dir - a.orientation).abs() < 1e-9);
                }
            }
        }
    }
}
