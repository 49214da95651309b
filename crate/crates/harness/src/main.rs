use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use crowd_core::policy::{ActionMode, PolicyParams};
use crowd_core::Exec;
use crowd_harness::analyze::{analyze, AnalyzeParams};
use crowd_harness::experiment::{self, SearchSpace};
use crowd_harness::presets::{preset, PRESETS};
use crowd_harness::{ExperimentConfig, SweepSpec};

#[derive(Parser)]
#[command(name = "crowd", version, about = "Train and evaluate crowd-navigation policies")]
struct Cli {
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (TOML).
    config: Option<PathBuf>,
    /// Start from a named preset instead of a file.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Override a config entry, e.g. `--set reward.c_c=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; defaults to the config's, then $CROWD_OUTPUT_DIR, then `runs`.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<(ExperimentConfig, PathBuf)> {
        let cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::load(path, &self.overrides)?,
            (None, Some(name)) => {
                let base = preset(name).ok_or_else(|| anyhow!("unknown preset {name:?}; see `crowd preset`"))?;
                ExperimentConfig::parse(&base.to_toml(), &self.overrides)?
            }
            (None, None) => bail!("give a config file or --preset"),
        };
        let out = self.output.clone().unwrap_or_else(|| cfg.output_dir());
        Ok((cfg, out))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Mean,
    Sample,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepPreset {
    /// reward.c_c over {0, 0.01, 0.05, 0.1, 1, 20}
    Collision,
    /// reward.c_e over {1, 1.5, 2, 2.5, 3}
    Exponent,
}

#[derive(Subcommand)]
enum Command {
    /// Train `n_seeds` runs and write logs, checkpoints and a summary.
    Run(ConfigArgs),
    /// Run a checkpoint without learning.
    Evaluate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long, value_enum, default_value = "mean")]
        mode: Mode,
        /// Scenario seed of the first episode.
        #[arg(long, default_value_t = 1_000_000)]
        seed: u64,
    },
    /// Train over several values of one numeric config entry.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Dotted config path to vary.
        #[arg(long, required_unless_present = "sweep_preset")]
        axis: Option<String>,
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[arg(long = "sweep", value_enum, conflicts_with_all = ["axis", "values"])]
        sweep_preset: Option<SweepPreset>,
        #[arg(long, default_value_t = 3)]
        seeds: usize,
    },
    /// Write the reward-model curves and print the located optima.
    Analyze {
        /// TOML file with reward coefficients, d, t_max, dt and energy constants.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        c_e: Option<f64>,
        #[arg(long)]
        c_v: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        distance: Option<f64>,
        #[arg(long, short, default_value = "analysis")]
        output: PathBuf,
    },
    /// Random hyperparameter search ranked by final training reward.
    Search {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        /// Training iterations per sample.
        #[arg(long, default_value_t = 50)]
        iterations: usize,
        #[arg(long, default_value_t = 5)]
        top_k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// List presets, or print one as TOML.
    Preset { name: Option<String> },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    match cli.command {
        Command::Run(args) => {
            let (cfg, out) = args.load()?;
            let summary = experiment::run(&cfg, &out, exec)?;
            for (name, m) in &summary.metrics {
                println!("{name:>18} {:>10.4} ± {:.4}", m.mean, m.sem);
            }
            println!("results in {}", out.display());
        }
        Command::Evaluate { config, checkpoint, episodes, mode, seed } => {
            let (cfg, out) = config.load()?;
            let params = PolicyParams::load(&checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
            let mode = match mode {
                Mode::Mean => ActionMode::Mean,
                Mode::Sample => ActionMode::Sample,
            };
            let agg = experiment::evaluate(&cfg, &params, episodes, mode, seed, &out, exec)?;
            for (name, m) in &agg {
                println!("{name:>18} {:>10.4} ± {:.4}", m.mean, m.sem);
            }
        }
        Command::Sweep { config, axis, values, sweep_preset, seeds } => {
            let (cfg, out) = config.load()?;
            let spec = match (sweep_preset, axis) {
                (Some(SweepPreset::Collision), _) => SweepSpec::collision_preset(seeds),
                (Some(SweepPreset::Exponent), _) => SweepSpec::exponent_preset(seeds),
                (None, Some(axis)) => SweepSpec { axis, values, seeds_per_value: seeds },
                (None, None) => bail!("give --axis and --values, or --sweep"),
            };
            for row in experiment::sweep(&cfg, &spec, &out, exec)? {
                println!(
                    "{} = {:<8} success {:.3} ± {:.3}  energy {:.1} ± {:.1}  collisions {:.2} ± {:.2}",
                    spec.axis,
                    row.value,
                    row.success_mean,
                    row.success_sem,
                    row.energy_mean,
                    row.energy_sem,
                    row.collisions_mean,
                    row.collisions_sem
                );
            }
        }
        Command::Analyze { params, c_e, c_v, gamma, distance, output } => {
            let mut p = match params {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    toml::from_str::<AnalyzeParams>(&text).map_err(|e| anyhow!("{}: {e}", path.display()))?
                }
                None => AnalyzeParams::default(),
            };
            if let Some(x) = c_e {
                p.reward.c_e = x;
            }
            if let Some(x) = c_v {
                p.reward.c_v = x;
            }
            if let Some(x) = gamma {
                p.reward.gamma = x;
            }
            if let Some(x) = distance {
                p.d = x;
            }
            let r = analyze(&p, &output, exec)?;
            println!("v*                     {:.3}", r.v_star);
            println!("v* with c_e = 2        {:.3}", r.v_star_exponent_2);
            println!("c_e*                   {:.2}", r.c_e_star);
            match r.c_v_threshold {
                Some(t) => println!("c_v threshold (c_e=1)  {t:.3}"),
                None => println!("c_v threshold (c_e=1)  none in [0, 0.3]"),
            }
            println!("discounted energy max  {:.3}", r.energy_argmax);
            println!("trip energy min        {:.3}", r.trip_energy_argmin);
        }
        Command::Search { config, samples, iterations, top_k, seed } => {
            let (cfg, out) = config.load()?;
            let rows = experiment::search(&cfg, &SearchSpace::default(), samples, iterations, top_k, seed, &out, exec)?;
            for r in rows.iter().take(top_k) {
                println!(
                    "#{} score {:.3}  lr {:.2e} width {} clip {:.3} ent {:.2e}",
                    r.rank, r.score, r.learning_rate, r.width, r.clip_eps, r.ent_coef
                );
            }
        }
        Command::Preset { name: None } => {
            for (name, about) in PRESETS {
                println!("{name:<12} {about}");
            }
        }
        Command::Preset { name: Some(name) } => {
            let cfg = preset(&name).ok_or_else(|| anyhow!("unknown preset {name:?}"))?;
            print!("{}", cfg.to_toml());
        }
    }
    Ok(())
}
