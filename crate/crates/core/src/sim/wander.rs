//! Potential-field wanderer used to produce observation snapshots for
//! prediction datasets.
//!
//! Each robot starts on the map edge heading roughly toward the center and
//! follows its goal direction, pushed away from observed obstacles. A local
//! minimum, a stall, a blocked step or the map edge triggers a fresh random
//! goal direction.

use std::collections::VecDeque;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{is_clear, lidar, random_edge_point, SimConfig};
use crate::geom::Point;
use crate::grid::{CellState, OccupancyGrid};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WanderParams {
    /// Obstacles farther than this exert no force, meters.
    pub influence_radius: f64,
    pub repulsive_gain: f64,
    /// Net displacement below `stall_distance` over `stall_window` seconds
    /// counts as a local minimum.
    pub stall_window: f64,
    pub stall_distance: f64,
    /// Initial headings are within this angle of the map center direction.
    pub heading_bias: f64,
    pub max_steps: u64,
}

impl Default for WanderParams {
    fn default() -> Self {
        Self {
            influence_radius: 3.0,
            repulsive_gain: 0.3,
            stall_window: 3.0,
            stall_distance: 0.5,
            heading_bias: std::f64::consts::FRAC_PI_3,
            max_steps: 30_000,
        }
    }
}

/// Training snapshot schedule: every 10% from 10% to 90%.
pub fn training_schedule() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

/// Test snapshot schedule.
pub fn test_schedule() -> Vec<f64> {
    vec![0.20, 0.35, 0.50, 0.65, 0.80]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub threshold: f64,
    pub coverage: f64,
    pub step: u64,
    pub observed: OccupancyGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub snapshots: Vec<Snapshot>,
    /// The step budget ran out before every threshold was crossed.
    pub truncated: bool,
    pub steps: u64,
    pub final_coverage: f64,
}

struct Wanderer {
    position: Point,
    goal_heading: f64,
    history: VecDeque<Point>,
}

fn repulsion(p: Point, observed: &OccupancyGrid, radius: f64, gain: f64) -> Point {
    let g = observed.geometry();
    let r = (radius / g.resolution).ceil() as i64;
    let (cx, cy) = g.cell_of_unclamped(p);
    let mut force = Point::default();
    for dy in -r..=r {
        for dx in -r..=r {
            let (x, y) = (cx + dx, cy + dy);
            if !g.contains_cell(x, y) || observed.get(x as usize, y as usize) != CellState::Occupied {
                continue;
            }
            let away = p - g.cell_center(x as usize, y as usize);
            let rho = away.norm().max(0.05);
            if rho < radius {
                let mag = gain * (1.0 / rho - 1.0 / radius) / (rho * rho);
                force = force + away * (mag / rho);
            }
        }
    }
    force
}

/// Runs one wandering rollout over `truth` and collects coverage snapshots.
///
/// `schedule` lists explored-fraction thresholds in increasing order; a
/// snapshot is taken on the first tick at or above each one.
pub fn wander_rollout(
    truth: &OccupancyGrid,
    config: &SimConfig,
    params: &WanderParams,
    schedule: &[f64],
    seed: u64,
) -> Rollout {
    let g = *truth.geometry();
    let mut rng = seed::stream(seed, 0x77_61_6E);
    let mut observed = OccupancyGrid::unknown(g);
    let mut robots: Vec<Wanderer> = (0..config.n_robots)
        .map(|_| {
            let (mut p, mut toward) = random_edge_point(&g, 1.0, &mut rng);
            for _ in 0..1000 {
                if is_clear(truth, p) {
                    break;
                }
                (p, toward) = random_edge_point(&g, 1.0, &mut rng);
            }
            let bias = params.heading_bias;
            Wanderer {
                position: p,
                goal_heading: toward + rng.random_range(-bias..=bias),
                history: VecDeque::new(),
            }
        })
        .collect();
    let window = config.ticks_per(params.stall_window).unwrap_or(30) as usize;
    let mut snapshots = Vec::new();
    let mut next = 0;
    let mut step = 0u64;

    let mut take_snapshots = |observed: &OccupancyGrid, step: u64, next: &mut usize| {
        let coverage = observed.known_fraction();
        while *next < schedule.len() && coverage >= schedule[*next] {
            snapshots.push(Snapshot {
                threshold: schedule[*next],
                coverage,
                step,
                observed: observed.clone(),
            });
            *next += 1;
        }
    };

    for r in &robots {
        lidar::sense(
            r.position,
            config.lidar_rays,
            config.sensor_radius,
            truth,
            &mut observed,
        );
    }
    take_snapshots(&observed, 0, &mut next);

    while next < schedule.len() && step < params.max_steps {
        step += 1;
        for r in &mut robots {
            let attract = Point::from_angle(r.goal_heading);
            let push = repulsion(r.position, &observed, params.influence_radius, params.repulsive_gain);
            let total = attract + push;
            let mut resample = total.norm() < 0.1;
            if !resample {
                let candidate = r.position + total.normalized() * (config.robot_speed * config.dt);
                if !g.contains_point(candidate) || !is_clear(truth, candidate) {
                    resample = true;
                } else {
                    r.position = candidate;
                }
            }
            r.history.push_back(r.position);
            if r.history.len() > window {
                r.history.pop_front();
                if r.history.front().unwrap().dist(r.position) < params.stall_distance {
                    resample = true;
                }
            }
            if resample {
                r.goal_heading = rng.random_range(0.0..std::f64::consts::TAU);
                r.history.clear();
            }
            lidar::sense(
                r.position,
                config.lidar_rays,
                config.sensor_radius,
                truth,
                &mut observed,
            );
        }
        take_snapshots(&observed, step, &mut next);
    }

    Rollout {
        truncated: next < schedule.len(),
        snapshots,
        steps: step,
        final_coverage: observed.known_fraction(),
    }
}
