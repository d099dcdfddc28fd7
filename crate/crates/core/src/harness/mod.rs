//! Seeded exploration trials and campaigns over the three reward policies.
//!
//! A trial steps the simulator at `dt`. Every prediction period it requests
//! a predicted map, folds it into the belief, reprices the live tasks and
//! re-runs the auction; frontier tasks are refreshed on their own period.
//! Each prediction tick records the explored fraction and the accuracy of
//! the latest predicted map.

mod campaign;
mod output;
mod trial;

use serde::{Deserialize, Serialize};

use crate::auction::AuctionConfig;
use crate::belief::BeliefParams;
use crate::predictor::PredictorSpec;
use crate::sim::SimConfig;
use crate::tasking::{RewardKind, RewardPolicy};
use crate::worldgen::TownParams;
use crate::{Error, Result};

pub use campaign::{quantile, run_campaign, CampaignResult, CrossingStats, PolicySummary, SeriesPoint, TrialOutcome};
pub use output::{trial_dir_name, write_campaign, write_metrics, write_trial, OutputOptions};
pub use trial::{run_trial, sustained_crossing, Checkpoint, Crossing, MapFrame, TickRecord, TimedTrace, TrialRecord};

/// Task sourcing and completion parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskParams {
    /// Quasi-random tasks placed at the start of the trial.
    pub scatter_count: usize,
    /// Seconds between frontier refreshes.
    pub frontier_period: f64,
    /// Smallest frontier cluster, in cells, that becomes a task.
    pub min_cluster: usize,
    /// New frontier tasks closer than this to a live task are dropped, meters.
    pub dedup_radius: f64,
    /// A task is complete once a robot is this close, meters.
    pub completion_radius: f64,
    /// Price the first leg of each robot's path by planned distance on the
    /// observed map instead of straight-line distance.
    pub planned_first_leg: bool,
}

impl Default for TaskParams {
    fn default() -> Self {
        Self {
            scatter_count: 64,
            frontier_period: 5.0,
            min_cluster: 5,
            dedup_radius: 3.0,
            completion_radius: 2.0,
            planned_first_leg: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrialConfig {
    pub world_seed: u64,
    pub sim_seed: u64,
    /// Seconds of simulated time.
    pub duration: f64,
    /// Accuracy levels whose first sustained crossing is recorded.
    pub thresholds: Vec<f64>,
    /// Consecutive prediction ticks at or above a threshold that make a crossing.
    pub sustain_ticks: usize,
    /// Seconds between a prediction request and its use; a multiple of `dt`.
    pub prediction_latency: f64,
    /// End the trial early once no frontier cell remains.
    pub stop_when_explored: bool,
    /// Times at which map renderings and a checkpoint are captured.
    pub snapshot_times: Vec<f64>,
    pub town: TownParams,
    pub sim: SimConfig,
    pub predictor: PredictorSpec,
    pub belief: BeliefParams,
    pub reward: RewardPolicy,
    pub auction: AuctionConfig,
    pub tasks: TaskParams,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            world_seed: 0,
            sim_seed: 0,
            duration: 400.0,
            thresholds: vec![0.95, 0.99, 0.998],
            sustain_ticks: 2,
            prediction_latency: 0.0,
            stop_when_explored: true,
            snapshot_times: Vec::new(),
            town: TownParams::default(),
            sim: SimConfig::default(),
            predictor: PredictorSpec::default(),
            belief: BeliefParams::default(),
            reward: RewardPolicy::default(),
            auction: AuctionConfig::default(),
            tasks: TaskParams::default(),
        }
    }
}

impl TrialConfig {
    pub fn policy(&self) -> RewardKind {
        self.reward.kind
    }

    /// Copy with another reward policy and seed pair.
    pub fn with_trial(&self, policy: RewardKind, world_seed: u64, sim_seed: u64) -> Self {
        let mut c = self.clone();
        c.reward.kind = policy;
        c.world_seed = world_seed;
        c.sim_seed = sim_seed;
        c
    }

    /// Town parameters with the world seed filled in.
    pub fn town_params(&self) -> TownParams {
        let mut t = self.town.clone();
        t.seed = self.world_seed;
        t
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        self.sim.validate()?;
        self.town_params().validate()?;
        self.belief.validate()?;
        self.reward.validate()?;
        self.auction.validate()?;
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration {} must be positive", self.duration));
        }
        let in_range = self.thresholds.iter().all(|&t| t > 0.5 && t <= 1.0);
        let increasing = self.thresholds.windows(2).all(|w| w[0] < w[1]);
        if !in_range || !increasing {
            return bad(format!(
                "thresholds {:?} must be strictly increasing in (0.5, 1]",
                self.thresholds
            ));
        }
        if self.sustain_ticks == 0 {
            return bad("sustain_ticks must be at least 1".into());
        }
        if self.prediction_latency != 0.0 && self.sim.ticks_per(self.prediction_latency).is_none() {
            return bad("prediction_latency must be zero or a multiple of dt".into());
        }
        if self.sim.ticks_per(self.tasks.frontier_period).is_none() {
            return bad("frontier_period must be a positive multiple of dt".into());
        }
        if !(self.tasks.completion_radius >= 0.0) || !(self.tasks.dedup_radius >= 0.0) {
            return bad("task radii must be non-negative".into());
        }
        Ok(())
    }
}

/// Which policies to run and on which seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignConfig {
    pub policies: Vec<RewardKind>,
    pub trials_per_policy: usize,
    /// Explicit `(world_seed, sim_seed)` pairs; when empty, trial `i` uses `(i, i)`.
    pub seeds: Vec<(u64, u64)>,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            policies: vec![
                RewardKind::Constant,
                RewardKind::VisibleEntropy,
                RewardKind::GenerativeEntropy,
            ],
            trials_per_policy: 10,
            seeds: Vec::new(),
            threads: 0,
        }
    }
}

impl CampaignConfig {
    pub fn seed_pairs(&self) -> Vec<(u64, u64)> {
        if self.seeds.is_empty() {
            (0..self.trials_per_policy as u64).map(|i| (i, i)).collect()
        } else {
            self.seeds.iter().copied().take(self.trials_per_policy.max(1)).collect()
        }
    }

    /// One trial config per policy and seed pair, policy-major.
    pub fn expand(&self, base: &TrialConfig) -> Vec<TrialConfig> {
        let seeds = self.seed_pairs();
        self.policies
            .iter()
            .flat_map(|&p| seeds.iter().map(move |&(w, s)| base.with_trial(p, w, s)))
            .collect()
    }
}

/// Top-level config file: `[trial]` plus `[campaign]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub trial: TrialConfig,
    pub campaign: CampaignConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}

/// Parses a seed list: one trial per line, `world_seed [sim_seed]`,
/// separated by whitespace or a comma. A missing sim seed repeats the world
/// seed. Blank lines and `#` comments are ignored.
pub fn parse_seed_list(text: &str) -> Result<Vec<(u64, u64)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        let parse = |s: &str| {
            s.parse::<u64>()
                .map_err(|_| Error::Config(format!("seed list line {}: '{s}' is not a seed", n + 1)))
        };
        match fields.as_slice() {
            [w] => {
                let w = parse(w)?;
                out.push((w, w));
            }
            [w, s] => out.push((parse(w)?, parse(s)?)),
            _ => {
                return Err(Error::Config(format!(
                    "seed list line {}: expected 1 or 2 seeds",
                    n + 1
                )))
            }
        }
    }
    Ok(out)
}

/// Fraction of cells that must be uncovered for the raw observed map to
/// reach `accuracy_threshold` when unknown cells earn half credit.
pub fn equivalent_uncovered_threshold(accuracy_threshold: f64) -> f64 {
    2.0 * accuracy_threshold - 1.0
}
