//! Experiment configuration files (TOML) with dotted command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use crowd_core::env::EnvConfig;
use crowd_core::perception::PerceptionConfig;
use crowd_core::policy::{ActionMode, NetConfig};
use crowd_core::ppo::PpoConfig;
use crowd_core::reward::{EnergyModel, RewardConfig};
use crowd_core::sim::{DynamicsConfig, ScenarioConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "CROWD_OUTPUT_DIR";
const FALLBACK_OUTPUT_DIR: &str = "runs";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Episodes evaluated after each training run.
    #[serde(default = "defaults::eval_episodes")]
    pub n_episodes: usize,
    #[serde(default)]
    pub action_mode: ActionMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { n_episodes: defaults::eval_episodes(), action_mode: ActionMode::Mean }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "defaults::n_iterations")]
    pub n_iterations: usize,
    #[serde(default = "defaults::n_seeds")]
    pub n_seeds: usize,
    /// Where results go; falls back to `$CROWD_OUTPUT_DIR`, then `runs`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Save a checkpoint every this many iterations; 0 saves only the final one.
    #[serde(default)]
    pub checkpoint_every: usize,
    pub scenario: ScenarioConfig,
    pub perception: PerceptionConfig,
    pub dynamics: DynamicsConfig,
    #[serde(default)]
    pub reward: RewardConfig,
    #[serde(default)]
    pub energy: EnergyModel,
    #[serde(default)]
    pub ppo: PpoConfig,
    #[serde(default)]
    pub policy: NetConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

mod defaults {
    pub fn n_iterations() -> usize {
        200
    }
    pub fn n_seeds() -> usize {
        1
    }
    pub fn eval_episodes() -> usize {
        20
    }
}

impl ExperimentConfig {
    pub fn env(&self) -> EnvConfig {
        EnvConfig {
            scenario: self.scenario.clone(),
            perception: self.perception.clone(),
            dynamics: self.dynamics.clone(),
            reward: self.reward.clone(),
            energy: self.energy.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_seeds == 0 {
            bail!("n_seeds must be at least 1");
        }
        self.env().validate()?;
        self.ppo.validate()?;
        self.policy.validate()?;
        Ok(())
    }

    /// Seed of run `index`: the PPO base seed plus the index.
    pub fn seed(&self, index: usize) -> u64 {
        self.ppo.seed.wrapping_add(index as u64)
    }

    pub fn output_dir(&self) -> PathBuf {
        if let Some(dir) = &self.output_dir {
            return dir.clone();
        }
        std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(FALLBACK_OUTPUT_DIR))
    }

    /// Hex SHA-256 of the fully materialised configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Parses a config, applies `key=value` overrides and validates it.
    /// Without overrides, parse errors carry the line of the original file.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let cfg: Self = if overrides.is_empty() {
            toml::from_str(text).map_err(|e| anyhow!("invalid config: {e}"))?
        } else {
            let mut table: Table = toml::from_str(text).map_err(|e| anyhow!("invalid config: {e}"))?;
            for o in overrides {
                let (key, value) = o.split_once('=').ok_or_else(|| anyhow!("override {o:?} is not key=value"))?;
                set_path(&mut table, key.trim(), parse_value(value.trim()))?;
            }
            let merged = toml::to_string(&table)?;
            toml::from_str(&merged).map_err(|e| anyhow!("invalid config after overrides: {e}"))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text, overrides).with_context(|| format!("in {}", path.display()))
    }

    /// Returns a copy with the numeric leaf at `path` set to `value`.
    pub fn with_numeric(&self, path: &str, value: f64) -> Result<Self> {
        let mut table = Table::try_from(self)?;
        let current = get_path(&table, path).ok_or_else(|| anyhow!("{path} does not exist in the config"))?;
        let new = match current {
            Value::Float(_) => Value::Float(value),
            Value::Integer(_) if value.fract() == 0.0 => Value::Integer(value as i64),
            Value::Integer(_) => bail!("{path} is an integer, got {value}"),
            _ => bail!("{path} is not a numeric setting"),
        };
        set_path(&mut table, path, new)?;
        let cfg: Self = table.try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Interprets an override value as TOML, falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn get_path<'a>(table: &'a Table, path: &str) -> Option<&'a Value> {
    let mut parts = path.split('.');
    let mut current = table.get(parts.next()?)?;
    for part in parts {
        current = current.as_table()?.get(part)?;
    }
    Some(current)
}

fn set_path(table: &mut Table, path: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = path.split('.').collect();
    let (last, parents) = parts.split_last().ok_or_else(|| anyhow!("empty key"))?;
    let mut current = table;
    for part in parents {
        current = current
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()))
            .as_table_mut()
            .ok_or_else(|| anyhow!("{path}: {part} is not a section"))?;
    }
    current.insert(last.to_string(), value);
    Ok(())
}

/// A sweep over one numeric config entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Dotted config path, e.g. `reward.c_c`.
    pub axis: String,
    pub values: Vec<f64>,
    #[serde(default = "defaults::n_seeds")]
    pub seeds_per_value: usize,
}

impl SweepSpec {
    pub fn validate(&self, base: &ExperimentConfig) -> Result<()> {
        if self.values.is_empty() {
            bail!("sweep has no values");
        }
        if self.seeds_per_value == 0 {
            bail!("seeds_per_value must be at least 1");
        }
        for &v in &self.values {
            base.with_numeric(&self.axis, v)?;
        }
        Ok(())
    }

    /// Collision-penalty sweep: c_c ∈ {0, 0.01, 0.05, 0.1, 1, 20}.
    pub fn collision_preset(seeds: usize) -> Self {
        Self { axis: "reward.c_c".into(), values: vec![0.0, 0.01, 0.05, 0.1, 1.0, 20.0], seeds_per_value: seeds }
    }

    /// Speed-exponent sweep: c_e ∈ {1, 1.5, 2, 2.5, 3}.
    pub fn exponent_preset(seeds: usize) -> Self {
        Self { axis: "reward.c_e".into(), values: vec![1.0, 1.5, 2.0, 2.5, 3.0], seeds_per_value: seeds }
    }
}
