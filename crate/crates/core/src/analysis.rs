//! Single-agent constant-speed model of the episodic return.
//!
//! An agent travels `d` meters in a straight line at constant speed `v`.
//! It needs `T = ⌈d / (v·Δt)⌉` decision steps, capped at `t_max`; if the cap
//! binds it never arrives and earns no goal reward. The discounted return is
//!
//! ```text
//! R(v) = γ^T c_g·[arrived] + Σ_{i=0}^{T} γ^i (c_p v Δt − c_v |v − v_0|^{c_e} − c_t)
//! ```
//!
//! Everything here is a pure function of the parameters, evaluated on
//! explicit velocity grids because `T` makes the curves discontinuous.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::reward::{EnergyModel, RewardConfig};

/// Slack used when rounding `d / (vΔt)` up, so exact multiples are not
/// pushed to the next step by floating-point error.
const CEIL_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimpleModelParams {
    #[serde(default)]
    pub reward: RewardConfig,
    /// Travel distance, meters.
    #[serde(default = "defaults::distance")]
    pub d: f64,
    #[serde(default = "defaults::t_max")]
    pub t_max: usize,
    #[serde(default = "defaults::dt")]
    pub dt: f64,
}

mod defaults {
    pub fn distance() -> f64 {
        8.0
    }
    pub fn t_max() -> usize {
        200
    }
    pub fn dt() -> f64 {
        1.0 / 12.0
    }
}

impl Default for SimpleModelParams {
    fn default() -> Self {
        Self { reward: RewardConfig::default(), d: defaults::distance(), t_max: defaults::t_max(), dt: defaults::dt() }
    }
}

impl SimpleModelParams {
    pub fn with_exponent(&self, c_e: f64) -> Self {
        let mut p = self.clone();
        p.reward.c_e = c_e;
        p
    }

    pub fn with_axis(&self, axis: SweepAxis, value: f64) -> Self {
        let mut p = self.clone();
        match axis {
            SweepAxis::CV => p.reward.c_v = value,
            SweepAxis::CE => p.reward.c_e = value,
            SweepAxis::Gamma => p.reward.gamma = value,
        }
        p
    }

    /// Lowest speed that still arrives within the time limit.
    pub fn min_arriving_speed(&self) -> f64 {
        self.d / (self.t_max as f64 * self.dt)
    }
}

/// Uniform grid `lo, lo + step, ..., hi` (inclusive).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, step: f64) -> Self {
        Self { lo, hi, step }
    }

    /// Speeds from 0 to 2 m/s at 1 mm/s resolution.
    pub fn velocities() -> Self {
        Self::new(0.0, 2.0, 1e-3)
    }

    pub fn len(&self) -> usize {
        ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        self.hi < self.lo
    }

    pub fn value(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.step
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.value(i)).collect()
    }
}

/// Number of steps `T` and whether the agent arrives.
pub fn horizon(v: f64, p: &SimpleModelParams) -> (usize, bool) {
    if v <= 0.0 {
        return (p.t_max, false);
    }
    let needed = (p.d / (v * p.dt) - CEIL_SLACK).ceil();
    if needed > p.t_max as f64 {
        (p.t_max, false)
    } else {
        (needed as usize, true)
    }
}

/// `Σ_{i=0}^{n-1} γ^i`.
fn discount_sum(gamma: f64, n: usize) -> f64 {
    if gamma == 1.0 {
        n as f64
    } else {
        (1.0 - gamma.powf(n as f64)) / (1.0 - gamma)
    }
}

pub fn simplified_return(v: f64, p: &SimpleModelParams) -> f64 {
    let r = &p.reward;
    let (t, arrived) = horizon(v, p);
    let per_step = r.c_p * v * p.dt - r.c_v * (v - r.v_0).abs().powf(r.c_e) - r.c_t;
    let goal = if arrived { r.gamma.powf(t as f64) * r.c_g } else { 0.0 };
    goal + discount_sum(r.gamma, t + 1) * per_step
}

/// Negative energy spent under the same horizon rule, discounted with
/// `p.reward.gamma`. An agent that never arrives burns energy until `t_max`.
pub fn discounted_energy_return(v: f64, p: &SimpleModelParams, model: &EnergyModel) -> f64 {
    let (t, _) = horizon(v, p);
    -discount_sum(p.reward.gamma, t + 1) * model.power(v) * p.dt
}

/// Undiscounted negative energy of the trip under the horizon rule.
pub fn trip_energy_return(v: f64, p: &SimpleModelParams, model: &EnergyModel) -> f64 {
    let (t, _) = horizon(v, p);
    -((t + 1) as f64) * model.power(v) * p.dt
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Evaluates `f` on every grid point.
pub fn curve<F>(grid: Grid, exec: Exec, f: F) -> Vec<(f64, f64)>
where
    F: Fn(f64) -> f64 + Sync + Send,
{
    exec.map(grid.len(), |i| {
        let v = grid.value(i);
        (v, f(v))
    })
}

fn grid_argmax<F>(grid: Grid, exec: Exec, f: F) -> f64
where
    F: Fn(f64) -> f64 + Sync + Send,
{
    let values = exec.map(grid.len(), |i| f(grid.value(i)));
    grid.value(argmax(&values).unwrap_or(0))
}

/// Speed maximising [`simplified_return`] over `grid`.
pub fn optimal_velocity(p: &SimpleModelParams, grid: Grid, exec: Exec) -> f64 {
    grid_argmax(grid, exec, |v| simplified_return(v, p))
}

/// Speed maximising [`discounted_energy_return`] over `grid`.
pub fn energy_optimal_velocity(p: &SimpleModelParams, model: &EnergyModel, grid: Grid, exec: Exec) -> f64 {
    grid_argmax(grid, exec, |v| discounted_energy_return(v, p, model))
}

/// Speed minimising the time-unconstrained trip energy over `grid`.
pub fn trip_energy_optimal_velocity(model: &EnergyModel, distance: f64, grid: Grid, exec: Exec) -> f64 {
    grid_argmax(grid, exec, |v| if v > 0.0 { -model.trip_energy(v, distance) } else { f64::NEG_INFINITY })
}

fn min_max_normalize(values: &[f64]) -> Result<Vec<f64>> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 1e-12) {
        return Err(Error::DegenerateNormalization);
    }
    Ok(values.iter().map(|v| (v - lo) / span).collect())
}

/// Mean squared error between the min-max normalised return curve (with
/// exponent `c_e`) and the normalised negative trip energy, both taken over
/// the speeds in `v_range` at resolution `step`.
pub fn normalized_mse(
    p: &SimpleModelParams,
    c_e: f64,
    v_range: (f64, f64),
    step: f64,
    model: &EnergyModel,
) -> Result<f64> {
    let grid = Grid::new(v_range.0, v_range.1, step);
    let p = p.with_exponent(c_e);
    let speeds = grid.values();
    let reward: Vec<f64> = speeds.iter().map(|&v| simplified_return(v, &p)).collect();
    let energy: Vec<f64> = speeds.iter().map(|&v| trip_energy_return(v, &p, model)).collect();
    let reward = min_max_normalize(&reward)?;
    let energy = min_max_normalize(&energy)?;
    let sse: f64 = reward.iter().zip(&energy).map(|(r, e)| (r - e) * (r - e)).sum();
    Ok(sse / speeds.len() as f64)
}

/// `(c_e, mse)` over an exponent grid.
pub fn exponent_mse_curve(
    p: &SimpleModelParams,
    exponents: Grid,
    v_range: (f64, f64),
    model: &EnergyModel,
    exec: Exec,
) -> Result<Vec<(f64, f64)>> {
    exec.map(exponents.len(), |i| {
        let c_e = exponents.value(i);
        normalized_mse(p, c_e, v_range, 1e-3, model).map(|m| (c_e, m))
    })
    .into_iter()
    .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    CV,
    CE,
    Gamma,
}

/// Optimal speed for each value along `axis`.
pub fn coefficient_sweep(
    p: &SimpleModelParams,
    axis: SweepAxis,
    values: &[f64],
    v_grid: Grid,
    exec: Exec,
) -> Vec<(f64, f64)> {
    // Parallelise over sweep values; each inner grid runs sequentially.
    exec.map_slice(values, |&x| (x, optimal_velocity(&p.with_axis(axis, x), v_grid, Exec::Sequential)))
}

/// First value in an increasing `c_v` sweep whose optimal speed falls below
/// the midpoint between `v_0` and the top of the speed grid.
pub fn velocity_threshold(sweep: &[(f64, f64)], v_0: f64, v_max: f64) -> Option<f64> {
    let midpoint = 0.5 * (v_0 + v_max);
    sweep.iter().find(|&&(_, v)| v < midpoint).map(|&(c, _)| c)
}

/// Number of sweep points whose optimum lies strictly between `v_0` and
/// `v_max` (beyond `margin`), a measure of how gradual the transition is.
pub fn intermediate_count(sweep: &[(f64, f64)], v_0: f64, v_max: f64, margin: f64) -> usize {
    sweep.iter().filter(|&&(_, v)| v > v_0 + margin && v < v_max - margin).count()
}

/// The headline numbers of the analysis for a parameter set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    /// Optimal speed for the given parameters.
    pub v_star: f64,
    /// Optimal speed with the exponent forced to 2.
    pub v_star_exponent_2: f64,
    /// Exponent minimising the reward/energy mismatch on 1 < v < 2.
    pub c_e_star: f64,
    /// `c_v` below which the optimal speed jumps to the maximum (c_e = 1).
    pub c_v_threshold: Option<f64>,
    /// Maximiser of the discounted energy return at the given γ.
    pub energy_argmax: f64,
    /// Minimiser of unconstrained trip energy.
    pub trip_energy_argmin: f64,
}

pub const MSE_RANGE: (f64, f64) = (1.0, 2.0);

pub fn report(p: &SimpleModelParams, model: &EnergyModel, exec: Exec) -> Result<AnalysisReport> {
    let v_grid = Grid::velocities();
    let mse = exponent_mse_curve(p, Grid::new(1.0, 3.0, 0.01), MSE_RANGE, model, exec)?;
    let c_e_star = mse
        .iter()
        .copied()
        .reduce(|best, cur| if cur.1 < best.1 { cur } else { best })
        .map(|(c, _)| c)
        .unwrap_or(f64::NAN);
    let cv_values = Grid::new(0.0, 0.3, 1e-3).values();
    let sweep = coefficient_sweep(&p.with_exponent(1.0), SweepAxis::CV, &cv_values, v_grid, exec);
    Ok(AnalysisReport {
        v_star: optimal_velocity(p, v_grid, exec),
        v_star_exponent_2: optimal_velocity(&p.with_exponent(2.0), v_grid, exec),
        c_e_star,
        c_v_threshold: velocity_threshold(&sweep, p.reward.v_0, v_grid.hi),
        energy_argmax: energy_optimal_velocity(p, model, v_grid, exec),
        trip_energy_argmin: trip_energy_optimal_velocity(model, p.d, v_grid, exec),
    })
}
