//! Training runs, evaluation, sweeps and random search.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use crowd_core::policy::{ActionMode, InputSpec, PolicyParams};
use crowd_core::ppo::{self, IterationLog, TrainingLog};
use crowd_core::reward::Metrics;
use crowd_core::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SweepSpec};
use crate::output::{header_of, write_json, CsvTable};
use crate::stats::MeanSem;

/// Training iterations averaged for "final" metrics and for ranking.
pub const FINAL_WINDOW: usize = 10;

/// Offset between training seeds and evaluation scenario seeds.
const EVAL_SEED_OFFSET: u64 = 1_000_000;

/// Outcome of one training seed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    /// Mean episodic reward over the final training iterations.
    pub final_reward: f64,
    pub final_success: f64,
    pub final_energy: f64,
    pub final_collisions: f64,
    pub final_mean_speed: f64,
    /// Metrics of the post-training evaluation episodes.
    pub eval_reward: f64,
    pub eval_success: f64,
    pub eval_energy: f64,
    pub eval_collisions: f64,
    pub eval_mean_speed: f64,
}

impl SeedResult {
    fn new(seed: u64, log: &TrainingLog, eval: &[Metrics]) -> Self {
        let tail = |f: fn(&IterationLog) -> f64| log.tail_mean(FINAL_WINDOW, f);
        let agg = aggregate(eval);
        let get = |k: &str| agg.get(k).map_or(f64::NAN, |m| m.mean);
        Self {
            seed,
            final_reward: tail(|r| r.reward_total),
            final_success: tail(|r| r.success_rate),
            final_energy: tail(|r| r.energy),
            final_collisions: tail(|r| r.collisions),
            final_mean_speed: tail(|r| r.mean_speed),
            eval_reward: get("reward_total"),
            eval_success: get("success_rate"),
            eval_energy: get("energy"),
            eval_collisions: get("collisions"),
            eval_mean_speed: get("mean_speed"),
        }
    }

    fn fields(&self) -> [(&'static str, f64); 10] {
        [
            ("final_reward", self.final_reward),
            ("final_success", self.final_success),
            ("final_energy", self.final_energy),
            ("final_collisions", self.final_collisions),
            ("final_mean_speed", self.final_mean_speed),
            ("eval_reward", self.eval_reward),
            ("eval_success", self.eval_success),
            ("eval_energy", self.eval_energy),
            ("eval_collisions", self.eval_collisions),
            ("eval_mean_speed", self.eval_mean_speed),
        ]
    }
}

/// Mean ± sem of every field across seeds.
pub fn summarize(results: &[SeedResult]) -> BTreeMap<String, MeanSem> {
    let mut out = BTreeMap::new();
    if let Some(first) = results.first() {
        for (k, (name, _)) in first.fields().iter().enumerate() {
            let values: Vec<f64> = results.iter().map(|r| r.fields()[k].1).collect();
            out.insert(name.to_string(), MeanSem::of(&values));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub n_seeds: usize,
    pub metrics: BTreeMap<String, MeanSem>,
    pub seeds: Vec<SeedResult>,
}

pub fn log_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("log_seed_{seed}.csv"))
}

pub fn checkpoint_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("checkpoint_seed_{seed}.json"))
}

/// Trains run `index` of `cfg`. With `out`, streams the training log and
/// writes checkpoints there.
pub fn train_seed(
    cfg: &ExperimentConfig,
    index: usize,
    out: Option<&Path>,
    exec: Exec,
) -> Result<(SeedResult, PolicyParams, TrainingLog)> {
    let seed = cfg.seed(index);
    let mut ppo_cfg = cfg.ppo.clone();
    ppo_cfg.seed = seed;
    let env = cfg.env();
    let hash = cfg.hash();

    let mut table = match out {
        Some(dir) => Some(CsvTable::create(
            &log_path(dir, seed),
            &hash,
            &seed.to_string(),
            &[],
            header_of(&IterationLog::default()),
        )?),
        None => None,
    };
    let (params, log) = ppo::train(&env, &ppo_cfg, &cfg.policy, cfg.n_iterations, exec, |row, params| {
        if let Some(t) = table.as_mut() {
            t.row(row).map_err(|e| std::io::Error::other(e.to_string()))?;
        }
        if let (Some(dir), k) = (out, cfg.checkpoint_every) {
            if k > 0 && (row.iteration + 1) % k == 0 {
                params.save(&dir.join(format!("checkpoint_seed_{seed}_iter_{}.json", row.iteration + 1)))?;
            }
        }
        Ok(())
    })?;
    if let Some(t) = table {
        t.finish()?;
    }
    if let Some(dir) = out {
        params.save(&checkpoint_path(dir, seed))?;
    }
    let eval = ppo::evaluate(
        &params,
        &env,
        cfg.eval.n_episodes,
        cfg.eval.action_mode,
        EVAL_SEED_OFFSET + seed,
        exec,
    )?;
    Ok((SeedResult::new(seed, &log, &eval), params, log))
}

/// Trains every seed, writing per-seed logs and checkpoints, the resolved
/// config and `summary.json` into `out`.
pub fn run(cfg: &ExperimentConfig, out: &Path, exec: Exec) -> Result<RunSummary> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.toml"), cfg.to_toml())?;
    let mut seeds = Vec::with_capacity(cfg.n_seeds);
    for i in 0..cfg.n_seeds {
        let (result, _, _) = train_seed(cfg, i, Some(out), exec)?;
        seeds.push(result);
    }
    let summary = RunSummary { config_hash: cfg.hash(), n_seeds: cfg.n_seeds, metrics: summarize(&seeds), seeds };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

/// One evaluation episode, flattened for CSV.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub episode: usize,
    pub seed: u64,
    pub energy: f64,
    pub success_rate: f64,
    pub collisions: f64,
    pub mean_speed: f64,
    pub reward_total: f64,
    pub reward_goal: f64,
    pub reward_progress: f64,
    pub reward_speed: f64,
    pub reward_collision: f64,
    pub reward_urgency: f64,
    pub steps: usize,
}

impl EpisodeRow {
    fn new(episode: usize, seed: u64, m: &Metrics) -> Self {
        Self {
            episode,
            seed,
            energy: m.energy,
            success_rate: m.success_rate,
            collisions: m.collisions,
            mean_speed: m.mean_speed,
            reward_total: m.reward.total,
            reward_goal: m.reward.goal,
            reward_progress: m.reward.progress,
            reward_speed: m.reward.speed,
            reward_collision: m.reward.collision,
            reward_urgency: m.reward.urgency,
            steps: m.steps,
        }
    }
}

/// Mean ± sem of each metric over episodes.
pub fn aggregate(episodes: &[Metrics]) -> BTreeMap<String, MeanSem> {
    let rows: Vec<EpisodeRow> = episodes.iter().enumerate().map(|(i, m)| EpisodeRow::new(i, 0, m)).collect();
    let columns: [(&str, fn(&EpisodeRow) -> f64); 10] = [
        ("energy", |r| r.energy),
        ("success_rate", |r| r.success_rate),
        ("collisions", |r| r.collisions),
        ("mean_speed", |r| r.mean_speed),
        ("reward_total", |r| r.reward_total),
        ("reward_goal", |r| r.reward_goal),
        ("reward_progress", |r| r.reward_progress),
        ("reward_speed", |r| r.reward_speed),
        ("reward_collision", |r| r.reward_collision),
        ("reward_urgency", |r| r.reward_urgency),
    ];
    columns
        .iter()
        .map(|(name, f)| (name.to_string(), MeanSem::of(&rows.iter().map(f).collect::<Vec<_>>())))
        .collect()
}

/// Runs `n_episodes` without learning and writes `evaluation.csv` (one row
/// per episode) and `evaluation_summary.csv` (mean ± sem per metric).
pub fn evaluate(
    cfg: &ExperimentConfig,
    params: &PolicyParams,
    n_episodes: usize,
    mode: ActionMode,
    seed: u64,
    out: &Path,
    exec: Exec,
) -> Result<BTreeMap<String, MeanSem>> {
    let expected = InputSpec::new(&cfg.perception, &cfg.dynamics);
    if params.arch.input != expected {
        bail!("checkpoint expects {:?}, config provides {:?}", params.arch.input, expected);
    }
    let episodes = ppo::evaluate(params, &cfg.env(), n_episodes, mode, seed, exec)?;
    let hash = cfg.hash();
    let mut table = CsvTable::create(
        &out.join("evaluation.csv"),
        &hash,
        &seed.to_string(),
        &[],
        header_of(&EpisodeRow::default()),
    )?;
    for (i, m) in episodes.iter().enumerate() {
        table.row(&EpisodeRow::new(i, seed + i as u64, m))?;
    }
    table.finish()?;

    let agg = aggregate(&episodes);
    let mut table =
        CsvTable::create(&out.join("evaluation_summary.csv"), &hash, &seed.to_string(), &[], ["metric", "mean", "sem", "n"])?;
    for (name, m) in &agg {
        table.record([name.clone(), m.mean.to_string(), m.sem.to_string(), m.n.to_string()])?;
    }
    table.finish()?;
    Ok(agg)
}

/// One row of a sweep table.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub n_seeds: usize,
    pub final_reward_mean: f64,
    pub final_reward_sem: f64,
    pub success_mean: f64,
    pub success_sem: f64,
    pub energy_mean: f64,
    pub energy_sem: f64,
    pub collisions_mean: f64,
    pub collisions_sem: f64,
    pub mean_speed_mean: f64,
    pub mean_speed_sem: f64,
}

impl SweepRow {
    fn new(value: f64, results: &[SeedResult]) -> Self {
        let s = summarize(results);
        let g = |k: &str| s.get(k).copied().unwrap_or_default();
        Self {
            value,
            n_seeds: results.len(),
            final_reward_mean: g("final_reward").mean,
            final_reward_sem: g("final_reward").sem,
            success_mean: g("eval_success").mean,
            success_sem: g("eval_success").sem,
            energy_mean: g("eval_energy").mean,
            energy_sem: g("eval_energy").sem,
            collisions_mean: g("eval_collisions").mean,
            collisions_sem: g("eval_collisions").sem,
            mean_speed_mean: g("eval_mean_speed").mean,
            mean_speed_sem: g("eval_mean_speed").sem,
        }
    }
}

fn axis_slug(axis: &str) -> String {
    axis.replace('.', "_")
}

/// Trains `spec.seeds_per_value` seeds per value and writes
/// `sweep_<axis>.csv`. Success, energy, collisions and speed come from the
/// post-training evaluation; reward is the final-window training mean.
pub fn sweep(base: &ExperimentConfig, spec: &SweepSpec, out: &Path, exec: Exec) -> Result<Vec<SweepRow>> {
    spec.validate(base)?;
    let slug = axis_slug(&spec.axis);
    let mut rows = Vec::with_capacity(spec.values.len());
    for &value in &spec.values {
        let mut cfg = base.with_numeric(&spec.axis, value)?;
        cfg.n_seeds = spec.seeds_per_value;
        let dir = out.join(format!("{slug}={value}"));
        let summary = run(&cfg, &dir, exec).with_context(|| format!("{} = {value}", spec.axis))?;
        rows.push(SweepRow::new(value, &summary.seeds));
    }
    let comment = format!("axis={} seeds_per_value={}", spec.axis, spec.seeds_per_value);
    let mut table = CsvTable::create(
        &out.join(format!("sweep_{slug}.csv")),
        &base.hash(),
        &base.ppo.seed.to_string(),
        &[&comment],
        header_of(&SweepRow::default()),
    )?;
    for row in &rows {
        table.row(row)?;
    }
    table.finish()?;
    Ok(rows)
}

/// Ranges sampled by [`search`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    /// Log-uniform.
    pub learning_rate: (f64, f64),
    /// Uniform choice; applied to every hidden layer.
    pub widths: Vec<usize>,
    pub clip_eps: (f64, f64),
    /// Log-uniform.
    pub ent_coef: (f64, f64),
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self { learning_rate: (1e-4, 1e-2), widths: vec![32, 64, 128], clip_eps: (0.1, 0.3), ent_coef: (1e-4, 1e-2) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchRow {
    pub rank: usize,
    pub sample: usize,
    pub score: f64,
    pub learning_rate: f64,
    pub width: usize,
    pub clip_eps: f64,
    pub ent_coef: f64,
    pub config_hash: String,
}

fn log_uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    (rng.random_range(lo.ln()..=hi.ln())).exp()
}

/// Draws `n` configurations from `space` around `base`.
pub fn sample_configs(base: &ExperimentConfig, space: &SearchSpace, n: usize, seed: u64) -> Vec<ExperimentConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut cfg = base.clone();
            cfg.ppo.learning_rate = log_uniform(&mut rng, space.learning_rate);
            let width = space.widths[rng.random_range(0..space.widths.len())];
            cfg.policy.trunk = vec![width; cfg.policy.trunk.len()];
            cfg.policy.psi = vec![width; cfg.policy.psi.len()];
            cfg.policy.phi = vec![width; cfg.policy.phi.len()];
            cfg.ppo.clip_eps = rng.random_range(space.clip_eps.0..=space.clip_eps.1);
            cfg.ppo.ent_coef = log_uniform(&mut rng, space.ent_coef);
            cfg
        })
        .collect()
}

pub const SEARCH_RANKING_NOTE: &str = "ranking: mean episodic reward over the final 10 training iterations (higher is better)";

/// Random search: trains each sampled config for `iterations` (one seed),
/// ranks by final-window mean reward and writes `search.csv` plus the top
/// `top_k` configs as TOML.
pub fn search(
    base: &ExperimentConfig,
    space: &SearchSpace,
    n_samples: usize,
    iterations: usize,
    top_k: usize,
    seed: u64,
    out: &Path,
    exec: Exec,
) -> Result<Vec<SearchRow>> {
    if n_samples == 0 {
        bail!("search needs at least one sample");
    }
    let configs = sample_configs(base, space, n_samples, seed);
    let mut rows = Vec::with_capacity(n_samples);
    for (i, cfg) in configs.iter().enumerate() {
        let mut cfg = cfg.clone();
        cfg.n_iterations = iterations;
        cfg.eval.n_episodes = 0;
        cfg.validate()?;
        let (_, _, log) = train_seed(&cfg, 0, None, exec)?;
        rows.push(SearchRow {
            rank: 0,
            sample: i,
            score: log.tail_mean(FINAL_WINDOW, |r| r.reward_total),
            learning_rate: cfg.ppo.learning_rate,
            width: cfg.policy.trunk[0],
            clip_eps: cfg.ppo.clip_eps,
            ent_coef: cfg.ppo.ent_coef,
            config_hash: cfg.hash(),
        });
    }
    // NaN scores (no finished episode) rank last; ties keep sample order.
    rows.sort_by(|a, b| {
        let key = |s: f64| if s.is_nan() { f64::NEG_INFINITY } else { s };
        key(b.score).total_cmp(&key(a.score))
    });
    for (r, row) in rows.iter_mut().enumerate() {
        row.rank = r + 1;
    }
    std::fs::create_dir_all(out)?;
    let mut table = CsvTable::create(
        &out.join("search.csv"),
        &base.hash(),
        &seed.to_string(),
        &[SEARCH_RANKING_NOTE],
        header_of(&rows[0]),
    )?;
    for row in &rows {
        table.row(row)?;
    }
    table.finish()?;
    for row in rows.iter().take(top_k) {
        let mut cfg = configs[row.sample].clone();
        cfg.n_iterations = base.n_iterations;
        std::fs::write(out.join(format!("top_{}.toml", row.rank)), cfg.to_toml())?;
    }
    Ok(rows)
}
