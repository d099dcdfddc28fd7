use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::trial::{run_trial, Crossing, TrialRecord};
use super::TrialConfig;
use crate::tasking::RewardKind;
use crate::{Error, Result};

pub struct TrialOutcome {
    pub policy: RewardKind,
    pub world_seed: u64,
    pub sim_seed: u64,
    /// The record, or the error message of a failed trial.
    pub result: std::result::Result<TrialRecord, String>,
}

/// Linear-interpolation quantile of sorted values. Infinite values (censored
/// crossings) propagate when the quantile touches them.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if frac == 0.0 || lo + 1 >= sorted.len() {
        return Some(sorted[lo]);
    }
    let (a, b) = (sorted[lo], sorted[lo + 1]);
    Some(if b.is_infinite() { b } else { a + frac * (b - a) })
}

fn finite(v: Option<f64>) -> Option<f64> {
    v.filter(|x| x.is_finite())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingStats {
    pub threshold: f64,
    /// `None` when at least half the trials never crossed.
    pub median: Option<f64>,
    pub q1: Option<f64>,
    pub q3: Option<f64>,
    /// Mean over the trials that crossed.
    pub mean: Option<f64>,
    pub crossed: usize,
    pub censored: usize,
}

impl CrossingStats {
    fn from_times(threshold: f64, times: &[Option<f64>]) -> Self {
        let mut v: Vec<f64> = times.iter().map(|t| t.unwrap_or(f64::INFINITY)).collect();
        v.sort_by(f64::total_cmp);
        let crossed: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
        Self {
            threshold,
            median: finite(quantile(&v, 0.5)),
            q1: finite(quantile(&v, 0.25)),
            q3: finite(quantile(&v, 0.75)),
            mean: (!crossed.is_empty()).then(|| crossed.iter().sum::<f64>() / crossed.len() as f64),
            crossed: crossed.len(),
            censored: v.len() - crossed.len(),
        }
    }

    /// Median with censored trials as +infinity.
    pub fn median_or_inf(&self) -> f64 {
        self.median.unwrap_or(f64::INFINITY)
    }
}

/// `[q1, median, q3]` of one metric across trials at one time.
pub type Quartiles = [f64; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub time: f64,
    pub explored: Quartiles,
    pub accuracy: Option<Quartiles>,
}

fn quartiles(mut v: Vec<f64>) -> Option<Quartiles> {
    v.sort_by(f64::total_cmp);
    Some([quantile(&v, 0.25)?, quantile(&v, 0.5)?, quantile(&v, 0.75)?])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: RewardKind,
    pub trials: usize,
    pub failures: usize,
    pub crossings: Vec<CrossingStats>,
    pub uncovered_crossings: Vec<CrossingStats>,
    /// Medians and quartiles per prediction tick. Trials that stopped early
    /// hold their last values.
    pub series: Vec<SeriesPoint>,
}

impl PolicySummary {
    fn from_records(policy: RewardKind, records: &[&TrialRecord], failures: usize) -> Self {
        let thresholds: Vec<f64> = records
            .first()
            .map(|r| r.crossings.iter().map(|c| c.threshold).collect())
            .unwrap_or_default();
        let stats = |pick: fn(&TrialRecord) -> &[Crossing]| -> Vec<CrossingStats> {
            thresholds
                .iter()
                .enumerate()
                .map(|(k, &t)| {
                    let times: Vec<Option<f64>> = records.iter().map(|r| pick(r)[k].time).collect();
                    CrossingStats::from_times(t, &times)
                })
                .collect()
        };
        let longest = records.iter().max_by_key(|r| r.ticks.len());
        let series = longest
            .map(|l| {
                (0..l.ticks.len())
                    .map(|i| {
                        let at = |r: &TrialRecord| r.ticks[i.min(r.ticks.len() - 1)].clone();
                        let explored = quartiles(records.iter().map(|r| at(r).explored).collect()).expect("non-empty");
                        let accuracy = quartiles(records.iter().filter_map(|r| at(r).accuracy).collect());
                        SeriesPoint {
                            time: l.ticks[i].time,
                            explored,
                            accuracy,
                        }
                    })
                    .collect()
            })
            .unwrap_or_default();
        Self {
            policy,
            trials: records.len(),
            failures,
            crossings: stats(|r| &r.crossings),
            uncovered_crossings: stats(|r| &r.uncovered_crossings),
            series,
        }
    }

    pub fn crossing(&self, threshold: f64) -> Option<&CrossingStats> {
        self.crossings.iter().find(|c| (c.threshold - threshold).abs() < 1e-12)
    }
}

pub struct CampaignResult {
    pub outcomes: Vec<TrialOutcome>,
    pub summaries: Vec<PolicySummary>,
}

impl CampaignResult {
    pub fn summary(&self, policy: RewardKind) -> Option<&PolicySummary> {
        self.summaries.iter().find(|s| s.policy == policy)
    }

    /// Fraction of prediction ticks at which `policy`'s median explored
    /// fraction is at least every other policy's.
    pub fn explored_dominance(&self, policy: RewardKind) -> Option<f64> {
        let mine = self.summary(policy)?;
        let others: Vec<&PolicySummary> = self.summaries.iter().filter(|s| s.policy != policy).collect();
        let n = others
            .iter()
            .map(|o| o.series.len())
            .chain([mine.series.len()])
            .min()
            .filter(|&n| n > 0)?;
        let wins = (0..n)
            .filter(|&i| {
                others
                    .iter()
                    .all(|o| mine.series[i].explored[1] >= o.series[i].explored[1])
            })
            .count();
        Some(wins as f64 / n as f64)
    }
}

/// Runs every config on a worker pool and summarizes per policy.
///
/// Failed trials are logged and counted; the campaign carries on. Results
/// are in input order regardless of scheduling.
pub fn run_campaign(configs: &[TrialConfig], threads: usize) -> Result<CampaignResult> {
    if configs.is_empty() {
        return Err(Error::InvalidParameter("campaign has no trials".into()));
    }
    let job = |c: &TrialConfig| {
        let result = run_trial(c).map_err(|e| {
            log::error!(
                "trial {} world {} sim {} failed: {e}",
                c.policy(),
                c.world_seed,
                c.sim_seed
            );
            e.to_string()
        });
        TrialOutcome {
            policy: c.policy(),
            world_seed: c.world_seed,
            sim_seed: c.sim_seed,
            result,
        }
    };
    let outcomes: Vec<TrialOutcome> = if threads == 0 {
        configs.par_iter().map(job).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?
            .install(|| configs.par_iter().map(job).collect())
    };

    let mut policies: Vec<RewardKind> = Vec::new();
    for o in &outcomes {
        if !policies.contains(&o.policy) {
            policies.push(o.policy);
        }
    }
    let summaries = policies
        .into_iter()
        .map(|p| {
            let mine: Vec<&TrialOutcome> = outcomes.iter().filter(|o| o.policy == p).collect();
            let records: Vec<&TrialRecord> = mine.iter().filter_map(|o| o.result.as_ref().ok()).collect();
            PolicySummary::from_records(p, &records, mine.len() - records.len())
        })
        .collect();
    Ok(CampaignResult { outcomes, summaries })
}
