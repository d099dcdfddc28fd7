use std::fs;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use explore_core::harness::{
    parse_seed_list, run_campaign, write_campaign, CampaignResult, ExperimentConfig, OutputOptions, TrialConfig,
};
use explore_core::sim::dataset::{export_dataset, DatasetConfig};
use explore_core::tasking::RewardKind;
use explore_core::{imageio, worldgen};

#[derive(Parser)]
#[command(name = "explore", version, about = "Multi-robot exploration with map prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Constant,
    Visible,
    Generative,
}

impl From<Policy> for RewardKind {
    fn from(p: Policy) -> Self {
        match p {
            Policy::Constant => RewardKind::Constant,
            Policy::Visible => RewardKind::VisibleEntropy,
            Policy::Generative => RewardKind::GenerativeEntropy,
        }
    }
}

#[derive(clap::Args)]
struct OutputArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; 0 uses every core. Overrides the config.
    #[arg(long)]
    threads: Option<usize>,
    /// Skip per-trial directories.
    #[arg(long)]
    no_trial_dirs: bool,
    /// Skip map renderings in trial directories.
    #[arg(long)]
    no_maps: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one policy over every seed pair in a seed list.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        policy: Policy,
        /// One `world_seed [sim_seed]` per line.
        #[arg(long)]
        seed_list: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run every configured policy over the campaign seeds.
    Campaign {
        #[arg(long)]
        config: PathBuf,
        /// Replaces the seeds in the config.
        #[arg(long)]
        seed_list: Option<PathBuf>,
        /// Replaces the policy list in the config.
        #[arg(long, value_enum, value_delimiter = ',')]
        policies: Vec<Policy>,
        /// Replaces the trial count in the config.
        #[arg(long)]
        trials: Option<usize>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Write ground-truth maps and layouts, one directory per seed.
    Worldgen {
        /// Town parameters are read from `[trial.town]`.
        #[arg(long)]
        config: Option<PathBuf>,
        /// A single seed or an inclusive range such as `0..=99` or `0-99`.
        #[arg(long, default_value = "0")]
        seeds: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export wanderer rollouts as image/mask training pairs.
    Dataset {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the default experiment config.
    DefaultConfig {
        /// Print the default dataset config instead.
        #[arg(long)]
        dataset: bool,
    },
}

fn load_experiment(path: &Path) -> Result<ExperimentConfig> {
    let config = ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    config.trial.validate().context("invalid trial config")?;
    Ok(config)
}

fn load_seeds(path: &Path) -> Result<Vec<(u64, u64)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let seeds = parse_seed_list(&text)?;
    if seeds.is_empty() {
        bail!("seed list {} is empty", path.display());
    }
    Ok(seeds)
}

fn parse_seed_range(text: &str) -> Result<RangeInclusive<u64>> {
    let text = text.trim();
    let split = ["..=", "..", "-"]
        .iter()
        .find_map(|sep| text.split_once(sep).map(|p| (p, *sep)));
    let (a, b) = match split {
        Some(((a, b), sep)) => {
            let a: u64 = a.trim().parse().with_context(|| format!("bad seed '{a}'"))?;
            let b: u64 = b.trim().parse().with_context(|| format!("bad seed '{b}'"))?;
            if sep == ".." {
                if b == a {
                    bail!("empty seed range '{text}'");
                }
                (a, b - 1)
            } else {
                (a, b)
            }
        }
        None => {
            let s: u64 = text.parse().with_context(|| format!("bad seed '{text}'"))?;
            (s, s)
        }
    };
    if a > b {
        bail!("empty seed range '{text}'");
    }
    Ok(a..=b)
}

fn campaign(configs: Vec<TrialConfig>, threads: usize, output: &OutputArgs) -> Result<()> {
    log::info!("running {} trials", configs.len());
    let result = run_campaign(&configs, threads)?;
    let options = OutputOptions {
        trial_dirs: !output.no_trial_dirs,
        maps: !output.no_maps,
    };
    write_campaign(&result, &output.out, options)
        .with_context(|| format!("writing results to {}", output.out.display()))?;
    report(&result);
    Ok(())
}

fn fmt_time(t: Option<f64>) -> String {
    t.map_or_else(|| "never".into(), |t| format!("{t:.1}s"))
}

fn report(result: &CampaignResult) {
    for s in &result.summaries {
        let crossings: Vec<String> = s
            .crossings
            .iter()
            .map(|c| {
                format!(
                    "{}: {} ({}/{})",
                    c.threshold,
                    fmt_time(c.median),
                    c.crossed,
                    c.crossed + c.censored
                )
            })
            .collect();
        println!(
            "{:<20} trials {:>3} failed {:>2}  {}",
            s.policy.to_string(),
            s.trials,
            s.failures,
            crossings.join("  ")
        );
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run {
            config,
            policy,
            seed_list,
            output,
        } => {
            let exp = load_experiment(&config)?;
            let seeds = load_seeds(&seed_list)?;
            let configs = seeds
                .iter()
                .map(|&(w, s)| exp.trial.with_trial(policy.into(), w, s))
                .collect();
            campaign(configs, output.threads.unwrap_or(exp.campaign.threads), &output)
        }
        Command::Campaign {
            config,
            seed_list,
            policies,
            trials,
            output,
        } => {
            let mut exp = load_experiment(&config)?;
            if let Some(path) = seed_list {
                exp.campaign.seeds = load_seeds(&path)?;
                exp.campaign.trials_per_policy = exp.campaign.seeds.len();
            }
            if !policies.is_empty() {
                exp.campaign.policies = policies.into_iter().map(RewardKind::from).collect();
            }
            if let Some(n) = trials {
                exp.campaign.trials_per_policy = n;
            }
            let configs = exp.campaign.expand(&exp.trial);
            campaign(configs, output.threads.unwrap_or(exp.campaign.threads), &output)
        }
        Command::Worldgen { config, seeds, out } => {
            let town = match config {
                Some(path) => load_experiment(&path)?.trial.town,
                None => Default::default(),
            };
            for seed in parse_seed_range(&seeds)? {
                let mut params = town.clone();
                params.seed = seed;
                let (layout, grid) = worldgen::generate(&params)?;
                let dir = out.join(format!("seed_{seed}"));
                fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                imageio::write_grid(&dir.join("truth.png"), &grid)?;
                let path = dir.join("layout.json");
                fs::write(&path, serde_json::to_string_pretty(&layout)?)
                    .with_context(|| format!("writing {}", path.display()))?;
                log::info!("seed {seed}: {} buildings", layout.buildings.len());
            }
            Ok(())
        }
        Command::Dataset { config, out } => {
            let config: DatasetConfig = match config {
                Some(path) => {
                    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
                }
                None => DatasetConfig::default(),
            };
            let summary = export_dataset(&config, &out)?;
            println!(
                "{} maps, {} rollouts, {} snapshots, {} truncated",
                summary.maps, summary.rollouts, summary.snapshots, summary.truncated
            );
            Ok(())
        }
        Command::DefaultConfig { dataset } => {
            let text = if dataset {
                toml::to_string_pretty(&DatasetConfig::default())?
            } else {
                ExperimentConfig::default().to_toml()?
            };
            print!("{text}");
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_ranges() {
        assert_eq!(parse_seed_range("7").unwrap(), 7..=7);
        assert_eq!(parse_seed_range("0..=4").unwrap(), 0..=4);
        assert_eq!(parse_seed_range("0..4").unwrap(), 0..=3);
        assert_eq!(parse_seed_range("2-5").unwrap(), 2..=5);
        assert!(parse_seed_range("5-2").is_err());
        assert!(parse_seed_range("3..3").is_err());
        assert!(parse_seed_range("x").is_err());
    }
}
