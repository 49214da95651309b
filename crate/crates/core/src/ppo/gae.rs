//! Generalized advantage estimation.

/// Advantages and value targets for one contiguous trajectory.
///
/// `δ_t = r_t + γ v_{t+1} (1 − done_t) − v_t` and
/// `A_t = δ_t + γ λ (1 − done_t) A_{t+1}`, where `v_{T}` past the last step
/// is `bootstrap`. Returns `(advantages, returns = A + v)`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert_eq!(values.len(), n);
    assert_eq!(dones.len(), n);
    let mut adv = vec![0.0; n];
    let mut next_value = bootstrap;
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// `A_t = Σ_{k≥t} (γλ)^{k−t} δ_k`, truncated after the first done.
    fn brute_force(r: &[f64], v: &[f64], d: &[bool], bootstrap: f64, gamma: f64, lambda: f64) -> Vec<f64> {
        let n = r.len();
        let next = |k: usize| if k + 1 < n { v[k + 1] } else { bootstrap };
        (0..n)
            .map(|t| {
                let mut total = 0.0;
                for k in t..n {
                    let live = if d[k] { 0.0 } else { 1.0 };
                    let delta = r[k] + gamma * next(k) * live - v[k];
                    total += (gamma * lambda).powi((k - t) as i32) * delta;
                    if d[k] {
                        break;
                    }
                }
                total
            })
            .collect()
    }

    #[test]
    fn one_step_td_when_lambda_is_zero() {
        let r = [1.0, -0.5, 2.0];
        let v = [0.3, 0.1, -0.2];
        let (a, ret) = compute_gae(&r, &v, &[false, false, false], 0.7, 0.9, 0.0);
        assert!((a[0] - (1.0 + 0.9 * 0.1 - 0.3)).abs() < 1e-15);
        assert!((a[1] - (-0.5 + 0.9 * -0.2 - 0.1)).abs() < 1e-15);
        assert!((a[2] - (2.0 + 0.9 * 0.7 + 0.2)).abs() < 1e-15);
        assert!((ret[1] - (a[1] + 0.1)).abs() < 1e-15);
    }

    #[test]
    fn monte_carlo_when_lambda_is_one() {
        let r = [1.0, 2.0, 3.0];
        let (a, _) = compute_gae(&r, &[0.0; 3], &[false, false, true], 0.0, 0.5, 1.0);
        assert_eq!(a, vec![1.0 + 0.5 * 2.0 + 0.25 * 3.0, 2.0 + 0.5 * 3.0, 3.0]);
    }

    #[test]
    fn matches_brute_force_on_random_episodes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let r: Vec<f64> = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
            let v: Vec<f64> = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
            let d: Vec<bool> = (0..10).map(|_| rng.random_bool(0.2)).collect();
            let bootstrap = rng.random_range(-2.0..2.0);
            let gamma = rng.random_range(0.8..1.0);
            let lambda = rng.random_range(0.0..1.0);
            let (a, ret) = compute_gae(&r, &v, &d, bootstrap, gamma, lambda);
            let b = brute_force(&r, &v, &d, bootstrap, gamma, lambda);
            for t in 0..10 {
                assert!((a[t] - b[t]).abs() < 1e-10);
                assert!((ret[t] - (b[t] + v[t])).abs() < 1e-10);
            }
        }
    }
}
