use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::exec::Exec;
use crate::geometry::Rect;
use crate::perception::{self, Frame};
use crate::sim::{AgentState, DynamicsModel, WorldState};

fn spec(mode: PerceptionMode) -> InputSpec {
    let p = PerceptionConfig::new(mode, Frame::Egocentric);
    InputSpec::new(&p, &DynamicsConfig::new(DynamicsModel::PolarVelocity))
}

fn params(mode: PerceptionMode, seed: u64) -> PolicyParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PolicyParams::init(&NetConfig::default(), spec(mode), &mut rng).unwrap()
}

fn random_neighbor(rng: &mut ChaCha8Rng) -> NeighborFeature {
    let p = Vec2::new(rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0));
    [p.x, p.y, rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), p.norm()]
}

fn random_obs(mode: PerceptionMode, n_neighbors: usize, rng: &mut ChaCha8Rng) -> Observation {
    let s = spec(mode);
    let phi: f64 = rng.random_range(-3.0..3.0);
    let proprio = vec![
        rng.random_range(-9.0..9.0),
        rng.random_range(-9.0..9.0),
        rng.random_range(-15.0..15.0),
        rng.random_range(-15.0..15.0),
        phi.cos(),
        phi.sin(),
        rng.random_range(-2.0..2.0),
        rng.random_range(-2.0..2.0),
    ];
    let rays = mode.uses_rays().then(|| (0..s.ray_len).map(|_| rng.random_range(0.0..1.0)).collect());
    let neighbors = mode.uses_neighbors().then(|| (0..n_neighbors).map(|_| random_neighbor(rng)).collect());
    Observation { proprio, rays, neighbors }
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let den: f64 = a.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1e-12);
    num / den
}

const MODES: [PerceptionMode; 3] = [PerceptionMode::Raycast, PerceptionMode::AgentPerception, PerceptionMode::Hybrid];

#[test]
fn embedding_is_permutation_invariant() {
    let p = params(PerceptionMode::AgentPerception, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let neighbors: Vec<Vec<f64>> =
        (0..10).map(|_| p.arch.input.normalize_neighbor(&random_neighbor(&mut rng))).collect();
    let reference = p.embed_neighbors(&neighbors).unwrap();
    for _ in 0..100 {
        let mut shuffled = neighbors.clone();
        shuffled.shuffle(&mut rng);
        let e = p.embed_neighbors(&shuffled).unwrap();
        assert!(rel_diff(&reference, &e) <= 1e-6);
    }
}

#[test]
fn empty_set_embeds_as_phi_of_zero() {
    let p = params(PerceptionMode::AgentPerception, 0);
    let (_, phi) = p.arch.policy.set.as_ref().unwrap();
    let width = phi.layers[0].n_in;
    let expected = phi.forward(&p.theta, vec![0.0; width]).pop().unwrap();
    assert_eq!(p.embed_neighbors(&[]).unwrap(), expected);
}

#[test]
fn duplicated_neighbor_counts_twice() {
    let p = params(PerceptionMode::AgentPerception, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = p.arch.input.normalize_neighbor(&random_neighbor(&mut rng));
    assert_ne!(p.embed_neighbors(&[x.clone()]).unwrap(), p.embed_neighbors(&[x.clone(), x.clone()]).unwrap());

    // Gradient of a linear read-out of Σψ with respect to ψ's weights.
    let (psi, _) = p.arch.policy.set.as_ref().unwrap();
    let (single_acts, single_sum) = Tower::neighbor_sum(psi, &p.theta, &[x.clone()]);
    let (double_acts, double_sum) = Tower::neighbor_sum(psi, &p.theta, &[x.clone(), x.clone()]);
    for (a, b) in single_sum.iter().zip(&double_sum) {
        assert!((2.0 * a - b).abs() < 1e-12);
    }
    let upstream: Vec<f64> = (0..single_sum.len()).map(|i| (i as f64 * 0.37).sin()).collect();
    let mut g1 = vec![0.0; p.n_params()];
    let mut g2 = vec![0.0; p.n_params()];
    for acts in &single_acts {
        psi.backward(&p.theta, acts, &upstream, &mut g1, false);
    }
    for acts in &double_acts {
        psi.backward(&p.theta, acts, &upstream, &mut g2, false);
    }
    assert!(g1.iter().any(|&g| g != 0.0));
    for (a, b) in g1.iter().zip(&g2) {
        assert!((2.0 * a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }
}

#[test]
fn layout_mismatch_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let raycast = params(PerceptionMode::Raycast, 0);
    let with_neighbors = random_obs(PerceptionMode::Hybrid, 3, &mut rng);
    assert!(matches!(raycast.forward(&with_neighbors), Err(Error::LayoutMismatch(_))));
    let ap = params(PerceptionMode::AgentPerception, 0);
    assert!(matches!(ap.forward(&with_neighbors), Err(Error::LayoutMismatch(_))));
    let mut short = random_obs(PerceptionMode::Raycast, 0, &mut rng);
    short.rays.as_mut().unwrap().pop();
    assert!(matches!(raycast.forward(&short), Err(Error::LayoutMismatch(_))));
    assert!(ap.embed_neighbors(&[vec![0.0; 3]]).is_err());
    assert!(raycast.embed_neighbors(&[]).is_err());
}

#[test]
fn forward_is_deterministic_and_small_at_init() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for mode in MODES {
        let p = params(mode, 2);
        for k in 0..=10 {
            let obs = random_obs(mode, k, &mut rng);
            let a = p.forward(&obs).unwrap();
            let b = p.forward(&obs).unwrap();
            assert_eq!(a, b);
            assert!(a.action_mean.x.abs() < 1.0 && a.action_mean.y.abs() < 1.0, "{a:?}");
            assert_eq!(a.action_std, Vec2::new(1.0, 1.0));
        }
    }
}

#[test]
fn gaussian_log_density_and_entropy() {
    let out = PolicyOutput { action_mean: Vec2::new(0.3, -0.2), action_std: Vec2::new(1.0, 1.0), value: 0.0 };
    let (lp, h) = log_prob_and_entropy(&out, out.action_mean);
    assert!((lp + 2.0 * (2.0 * std::f64::consts::PI).sqrt().ln()).abs() < 1e-12);
    assert!((h - (2.0 * std::f64::consts::PI * std::f64::consts::E).ln()).abs() < 1e-12);
    assert!((h - 2.8379).abs() < 1e-4);

    let narrow = PolicyOutput { action_std: Vec2::new(0.5, 2.0), ..out };
    let (lp, _) = log_prob_and_entropy(&narrow, narrow.action_mean);
    assert!((lp + (0.5 * (2.0 * std::f64::consts::PI).sqrt()).ln() + (2.0 * (2.0 * std::f64::consts::PI).sqrt()).ln()).abs() < 1e-12);

    let mut last = f64::INFINITY;
    for k in 0..20 {
        let a = out.action_mean + Vec2::new(0.1 * k as f64, 0.0);
        let (lp, _) = log_prob_and_entropy(&out, a);
        assert!(lp < last);
        last = lp;
    }
}

/// Central-difference check of `loss_and_grad` on random coordinates.
fn finite_difference_check(mode: PerceptionMode, spec: LossSpec, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = params(mode, seed);
    // Move log_std off zero so its gradient path is exercised generally.
    let i = p.arch.log_std;
    p.theta[i] = -0.3;
    p.theta[i + 1] = 0.2;
    // Give the policy head some scale so trunk gradients are not tiny.
    for seg in p.arch.layout.segments.clone() {
        if seg.name == "policy.head.weight" {
            for v in &mut p.theta[seg.range()] {
                *v *= 50.0;
            }
        }
    }

    let inputs: Vec<NetInput> = (0..12)
        .map(|k| p.arch.input.normalize(&random_obs(mode, k % 11, &mut rng)).unwrap())
        .collect();
    let samples: Vec<Sample> = inputs
        .iter()
        .map(|x| {
            let out = p.forward_normalized(x);
            let action = sample_action(&out, &mut rng);
            let (lp, _) = log_prob_and_entropy(&out, action);
            Sample {
                input: x,
                action,
                old_log_prob: lp + rng.random_range(-0.05..0.05),
                advantage: rng.random_range(-2.0..2.0),
                ret: out.value + rng.random_range(-1.0..1.0),
            }
        })
        .collect();

    let (_, grad) = p.loss_and_grad(&samples, &spec, Exec::Sequential).unwrap();
    let eps = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..64 {
        let k = rng.random_range(0..p.n_params());
        let mut plus = p.clone();
        plus.theta[k] += eps;
        let mut minus = p.clone();
        minus.theta[k] -= eps;
        let lp = plus.loss_and_grad(&samples, &spec, Exec::Sequential).unwrap().0.loss;
        let lm = minus.loss_and_grad(&samples, &spec, Exec::Sequential).unwrap().0.loss;
        let numeric = (lp - lm) / (2.0 * eps);
        let denom = grad[k].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((grad[k] - numeric).abs() / denom);
    }
    worst
}

#[test]
fn gradients_match_finite_differences() {
    let ppo = LossSpec::Ppo { clip_eps: 0.2, vf_coef: 0.5, ent_coef: 0.01 };
    for (n, mode) in MODES.into_iter().enumerate() {
        let err = finite_difference_check(mode, ppo, 10 + n as u64);
        assert!(err < 1e-4, "{mode:?}: {err}");
        let err = finite_difference_check(mode, LossSpec::ValueMse, 20 + n as u64);
        assert!(err < 1e-4, "{mode:?} value: {err}");
    }
}

#[test]
fn zero_value_head_with_matching_targets_has_zero_value_gradient() {
    let mut p = params(PerceptionMode::Hybrid, 5);
    for seg in p.arch.layout.segments.clone() {
        if seg.name.starts_with("value.head") {
            p.theta[seg.range()].fill(0.0);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let inputs: Vec<NetInput> =
        (0..5).map(|k| p.arch.input.normalize(&random_obs(PerceptionMode::Hybrid, k, &mut rng)).unwrap()).collect();
    let samples: Vec<Sample> = inputs
        .iter()
        .map(|x| Sample { input: x, action: Vec2::ZERO, old_log_prob: 0.0, advantage: 0.0, ret: 0.0 })
        .collect();
    let (stats, grad) = p.loss_and_grad(&samples, &LossSpec::ValueMse, Exec::Sequential).unwrap();
    assert_eq!(stats.loss, 0.0);
    assert!(grad.iter().all(|&g| g == 0.0));
}

#[test]
fn chunked_gradient_is_thread_count_independent() {
    let p = params(PerceptionMode::Hybrid, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let inputs: Vec<NetInput> = (0..300)
        .map(|k| p.arch.input.normalize(&random_obs(PerceptionMode::Hybrid, k % 11, &mut rng)).unwrap())
        .collect();
    let samples: Vec<Sample> = inputs
        .iter()
        .map(|x| Sample {
            input: x,
            action: Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            old_log_prob: -2.0,
            advantage: rng.random_range(-1.0..1.0),
            ret: rng.random_range(-1.0..1.0),
        })
        .collect();
    let spec = LossSpec::Ppo { clip_eps: 0.2, vf_coef: 0.5, ent_coef: 0.0 };
    let a = p.loss_and_grad(&samples, &spec, Exec::Sequential).unwrap();
    let b = p.loss_and_grad(&samples, &spec, Exec::Parallel).unwrap();
    assert_eq!(a, b);
}

#[test]
fn clipped_samples_carry_no_policy_gradient() {
    let p = params(PerceptionMode::Raycast, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = p.arch.input.normalize(&random_obs(PerceptionMode::Raycast, 0, &mut rng)).unwrap();
    let out = p.forward_normalized(&x);
    let action = Vec2::new(0.4, -0.1);
    let (lp, _) = log_prob_and_entropy(&out, action);
    // ρ = e^{0.5} > 1 + ε with positive advantage: clipped.
    let s = Sample { input: &x, action, old_log_prob: lp - 0.5, advantage: 1.0, ret: out.value };
    let (stats, grad) =
        p.loss_and_grad(&[s], &LossSpec::Ppo { clip_eps: 0.2, vf_coef: 1.0, ent_coef: 0.0 }, Exec::Sequential).unwrap();
    assert_eq!(stats.clip_fraction, 1.0);
    assert!(grad.iter().all(|&g| g == 0.0));
}

#[test]
fn zero_advantage_leaves_only_entropy_gradient() {
    let p = params(PerceptionMode::AgentPerception, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = p.arch.input.normalize(&random_obs(PerceptionMode::AgentPerception, 4, &mut rng)).unwrap();
    let out = p.forward_normalized(&x);
    let s = Sample { input: &x, action: Vec2::new(0.2, 0.2), old_log_prob: -1.0, advantage: 0.0, ret: out.value };
    let (_, grad) =
        p.loss_and_grad(&[s], &LossSpec::Ppo { clip_eps: 0.2, vf_coef: 1.0, ent_coef: 0.1 }, Exec::Sequential).unwrap();
    let log_std = p.arch.log_std;
    for (k, g) in grad.iter().enumerate() {
        if k == log_std || k == log_std + 1 {
            assert!((g + 0.1).abs() < 1e-15);
        } else {
            assert_eq!(*g, 0.0);
        }
    }
}

#[test]
fn checkpoint_round_trip() {
    let p = params(PerceptionMode::Hybrid, 12);
    let json = serde_json::to_string(&p.to_checkpoint()).unwrap();
    let back = PolicyParams::from_checkpoint(&serde_json::from_str(&json).unwrap()).unwrap();
    assert_eq!(back, p);

    let mut wrong = p.to_checkpoint();
    wrong.tensors[0].shape = vec![1, 1];
    assert!(matches!(PolicyParams::from_checkpoint(&wrong), Err(Error::Checkpoint(_))));
    let other = params(PerceptionMode::Raycast, 12).to_checkpoint();
    let mut mixed = p.to_checkpoint();
    mixed.tensors = other.tensors;
    assert!(PolicyParams::from_checkpoint(&mixed).is_err());
}

#[test]
fn network_sizes_are_validated() {
    let mut net = NetConfig::default();
    assert!(net.validate().is_ok());
    net.trunk = vec![64];
    assert!(net.validate().is_err());
    net.trunk = vec![64, 16];
    assert!(net.validate().is_err());
    net.trunk = vec![128; 6];
    assert!(net.validate().is_ok());
    net.trunk = vec![128; 7];
    assert!(net.validate().is_err());
}

#[test]
fn rotating_the_world_about_an_agent_keeps_egocentric_features() {
    let agents = |angle: f64| -> WorldState {
        let centre = Vec2::new(1.0, -2.0);
        let place = |offset: Vec2, velocity: Vec2, heading: f64| {
            let mut a = AgentState::new(centre + offset.rotated(angle), centre + Vec2::new(6.0, 3.0).rotated(angle), heading + angle);
            a.velocity = velocity.rotated(angle);
            a
        };
        WorldState {
            agents: vec![
                place(Vec2::ZERO, Vec2::new(0.7, 0.1), 0.4),
                place(Vec2::new(1.5, 0.5), Vec2::new(-0.3, 0.2), 2.0),
                place(Vec2::new(-2.0, 1.0), Vec2::new(0.0, -1.0), -1.0),
                place(Vec2::new(0.3, -3.0), Vec2::new(0.5, 0.5), 0.0),
            ],
            obstacles: Vec::new(),
            step_index: 0,
            t_max: 100,
            bounds: Rect::centered_square(50.0),
        }
    };
    let cfg = PerceptionConfig::new(PerceptionMode::AgentPerception, Frame::Egocentric);
    let p = params(PerceptionMode::AgentPerception, 7);
    let base = perception::assemble(&agents(0.0), 0, &cfg, None);
    let base_in = p.arch.input.normalize(&base).unwrap();
    let base_embed = p.embed_neighbors(base_in.neighbors.as_ref().unwrap()).unwrap();
    for angle in [0.3, 1.7, -2.9] {
        let obs = perception::assemble(&agents(angle), 0, &cfg, None);
        for k in [2, 3, 6, 7] {
            assert!((obs.proprio[k] - base.proprio[k]).abs() < 1e-12);
        }
        let x = p.arch.input.normalize(&obs).unwrap();
        let e = p.embed_neighbors(x.neighbors.as_ref().unwrap()).unwrap();
        assert!(rel_diff(&base_embed, &e) < 1e-12);
    }
}
