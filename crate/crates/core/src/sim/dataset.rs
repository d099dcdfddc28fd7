//! Export of wanderer rollouts as image/mask training pairs.
//!
//! Layout under the output directory:
//!
//! ```text
//! map_<seed>/truth.png
//! map_<seed>/layout.json
//! map_<seed>/rollout_<k>/rollout.json
//! map_<seed>/rollout_<k>/snap_<pct>.png
//! map_<seed>/rollout_<k>/snap_<pct>_mask.png
//! map_<seed>/rollout_<k>/snap_<pct>_meta.json
//! ```
//!
//! `<pct>` is the schedule threshold in whole percent, zero padded to three
//! digits.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::wander::{self, wander_rollout, WanderParams};
use super::SimConfig;
use crate::grid::encode;
use crate::worldgen::{self, TownParams};
use crate::{imageio, seed, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub seeds: Vec<u64>,
    pub rollouts_per_map: usize,
    pub schedule: Vec<f64>,
    /// World generation parameters; the seed field is replaced per map.
    pub town: TownParams,
    pub sim: SimConfig,
    pub wander: WanderParams,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0],
            rollouts_per_map: 1,
            schedule: wander::training_schedule(),
            town: TownParams::default(),
            sim: SimConfig::default(),
            wander: WanderParams::default(),
        }
    }
}

/// Per-snapshot metadata written next to each image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub seed: u64,
    pub rollout: usize,
    pub threshold: f64,
    pub coverage: f64,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutMeta {
    pub seed: u64,
    pub rollout: usize,
    pub truncated: bool,
    pub steps: u64,
    pub final_coverage: f64,
    pub snapshots: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExportSummary {
    pub maps: usize,
    pub rollouts: usize,
    pub snapshots: usize,
    pub truncated: usize,
}

pub fn snapshot_stem(threshold: f64) -> String {
    format!("snap_{:03}", (threshold * 100.0).round() as u32)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Generates every map and rollout in `config` and writes them under `out`.
pub fn export_dataset(config: &DatasetConfig, out: &Path) -> Result<ExportSummary> {
    config.sim.validate()?;
    let mut summary = ExportSummary::default();
    for &map_seed in &config.seeds {
        let mut town = config.town.clone();
        town.seed = map_seed;
        let (layout, truth) = worldgen::generate(&town)?;
        let map_dir = out.join(format!("map_{map_seed}"));
        create_dir(&map_dir)?;
        imageio::write_grid(&map_dir.join("truth.png"), &truth)?;
        write_json(&map_dir.join("layout.json"), &layout)?;
        summary.maps += 1;

        for k in 0..config.rollouts_per_map {
            let rollout_seed = seed::derive(map_seed, k as u64);
            let rollout = wander_rollout(&truth, &config.sim, &config.wander, &config.schedule, rollout_seed);
            let dir: PathBuf = map_dir.join(format!("rollout_{k}"));
            create_dir(&dir)?;
            for snap in &rollout.snapshots {
                let stem = snapshot_stem(snap.threshold);
                let image = encode(&snap.observed);
                imageio::write_image_and_mask(
                    &dir.join(format!("{stem}.png")),
                    &dir.join(format!("{stem}_mask.png")),
                    &image,
                )?;
                let meta = SnapshotMeta {
                    seed: map_seed,
                    rollout: k,
                    threshold: snap.threshold,
                    coverage: snap.coverage,
                    step: snap.step,
                };
                write_json(&dir.join(format!("{stem}_meta.json")), &meta)?;
            }
            let meta = RolloutMeta {
                seed: map_seed,
                rollout: k,
                truncated: rollout.truncated,
                steps: rollout.steps,
                final_coverage: rollout.final_coverage,
                snapshots: rollout.snapshots.len(),
            };
            write_json(&dir.join("rollout.json"), &meta)?;
            if rollout.truncated {
                log::warn!(
                    "map {map_seed} rollout {k} truncated at coverage {:.3}",
                    rollout.final_coverage
                );
                summary.truncated += 1;
            }
            summary.rollouts += 1;
            summary.snapshots += rollout.snapshots.len();
        }
    }
    Ok(summary)
}
