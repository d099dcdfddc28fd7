//! Exploration tasks: quasirandom scatter, frontier extraction and the
//! per-task reward functions.

use std::collections::VecDeque;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::belief::EntropyField;
use crate::geom::Point;
use crate::grid::{CellState, GridGeometry, OccupancyGrid};
use crate::sim::lidar;
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskState {
    Open,
    Assigned,
    Complete,
    Abandoned,
}

impl TaskState {
    pub fn is_terminal(self) -> bool {
        matches!(self, TaskState::Complete | TaskState::Abandoned)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskSource {
    Scatter,
    Frontier,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: u32,
    pub location: Point,
    pub state: TaskState,
    pub source: TaskSource,
}

/// Van der Corput radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while index > 0 {
        r += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    r
}

/// First `count` points of the 2-D Halton sequence (bases 2 and 3, starting
/// at index 1) in the unit square, optionally shifted modulo 1.
pub fn halton_points(count: usize, rotation: Option<[f64; 2]>) -> Vec<[f64; 2]> {
    let [sx, sy] = rotation.unwrap_or([0.0, 0.0]);
    (1..=count as u64)
        .map(|i| {
            let x = (radical_inverse(i, 2) + sx).fract();
            let y = (radical_inverse(i, 3) + sy).fract();
            [x, y]
        })
        .collect()
}

/// `count` scatter tasks over the map with a seeded Cranley–Patterson shift.
/// Ids run from `first_id`.
pub fn scatter_tasks(count: usize, geometry: &GridGeometry, seed: u64, first_id: u32) -> Vec<Task> {
    let mut rng = seed::stream(seed, 0x68_61_6C);
    let shift = [rng.random::<f64>(), rng.random::<f64>()];
    let (w, h) = geometry.extent();
    halton_points(count, Some(shift))
        .into_iter()
        .enumerate()
        .map(|(k, [u, v])| Task {
            id: first_id + k as u32,
            location: geometry.origin + Point::new(u * w, v * h),
            state: TaskState::Open,
            source: TaskSource::Scatter,
        })
        .collect()
}

/// Free cells with at least one 4-neighbour Unknown.
pub fn frontier_cells(observed: &OccupancyGrid) -> Vec<bool> {
    let g = *observed.geometry();
    let mut out = vec![false; g.len()];
    for (i, &c) in observed.cells().iter().enumerate() {
        if c != CellState::Free {
            continue;
        }
        let (x, y) = g.coords(i);
        out[i] = g
            .neighbors4(x, y)
            .any(|(nx, ny)| observed.get(nx, ny) == CellState::Unknown);
    }
    out
}

/// A connected group of frontier cells and its task location.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontierCluster {
    pub cells: Vec<usize>,
    pub location: Point,
}

/// Frontier clusters (8-connected) of at least `min_cluster` cells.
///
/// Each location is the cluster centroid, moved to the nearest cluster cell
/// when the centroid cell is not itself in the cluster.
pub fn extract_frontiers(observed: &OccupancyGrid, min_cluster: usize) -> Vec<FrontierCluster> {
    let g = *observed.geometry();
    let frontier = frontier_cells(observed);
    let mut seen = vec![false; g.len()];
    let mut clusters = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..g.len() {
        if !frontier[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut cells = Vec::new();
        while let Some(i) = queue.pop_front() {
            cells.push(i);
            let (x, y) = g.coords(i);
            for (nx, ny) in g.neighbors8(x, y) {
                let j = g.index(nx, ny);
                if frontier[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        if cells.len() < min_cluster {
            continue;
        }
        cells.sort_unstable();
        let n = cells.len() as f64;
        let (sx, sy) = cells.iter().fold((0.0, 0.0), |(sx, sy), &i| {
            let (x, y) = g.coords(i);
            let c = g.cell_center(x, y);
            (sx + c.x, sy + c.y)
        });
        let centroid = Point::new(sx / n, sy / n);
        let in_cluster = g
            .cell_of(centroid)
            .map(|(x, y)| cells.binary_search(&g.index(x, y)).is_ok())
            .unwrap_or(false);
        let location = if in_cluster {
            let (x, y) = g.cell_of(centroid).unwrap();
            g.cell_center(x, y)
        } else {
            cells
                .iter()
                .map(|&i| {
                    let (x, y) = g.coords(i);
                    g.cell_center(x, y)
                })
                .min_by(|a, b| a.dist(centroid).total_cmp(&b.dist(centroid)))
                .unwrap()
        };
        clusters.push(FrontierCluster { cells, location });
    }
    clusters
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    Constant,
    VisibleEntropy,
    GenerativeEntropy,
}

impl std::str::FromStr for RewardKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(RewardKind::Constant),
            "visible" | "visible_entropy" => Ok(RewardKind::VisibleEntropy),
            "generative" | "generative_entropy" => Ok(RewardKind::GenerativeEntropy),
            other => Err(Error::InvalidParameter(format!("unknown reward policy '{other}'"))),
        }
    }
}

impl std::fmt::Display for RewardKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RewardKind::Constant => "constant",
            RewardKind::VisibleEntropy => "visible",
            RewardKind::GenerativeEntropy => "generative",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardPolicy {
    pub kind: RewardKind,
    pub constant: f64,
    /// Side of the entropy box for generative rewards, meters.
    pub box_side: f64,
    pub sensor_radius: f64,
    pub rays: usize,
    /// Multiplier applied to both entropy rewards after converting to m².
    pub scale: f64,
}

impl Default for RewardPolicy {
    fn default() -> Self {
        Self {
            kind: RewardKind::Constant,
            constant: 1.0,
            box_side: 10.0,
            sensor_radius: 10.0,
            rays: 360,
            scale: 1.0,
        }
    }
}

impl RewardPolicy {
    pub fn new(kind: RewardKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.constant.is_finite()
            && self.constant >= 0.0
            && self.box_side > 0.0
            && self.sensor_radius > 0.0
            && self.rays > 0
            && self.scale.is_finite()
            && self.scale >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("bad reward policy {self:?}")))
        }
    }
}

/// Evaluates rewards for a batch of task locations.
///
/// Generative rewards need `entropy`; without it they are zero.
pub fn rewards(
    locations: &[Point],
    policy: &RewardPolicy,
    observed: &OccupancyGrid,
    entropy: Option<&EntropyField>,
) -> Vec<f64> {
    let g = observed.geometry();
    let area = g.resolution * g.resolution;
    match policy.kind {
        RewardKind::Constant => vec![policy.constant; locations.len()],
        RewardKind::VisibleEntropy => {
            let mut scratch = Vec::new();
            locations
                .iter()
                .enumerate()
                .map(|(k, &p)| {
                    let n =
                        lidar::visible_unknown(p, policy.rays, policy.sensor_radius, observed, &mut scratch, k as u32);
                    n as f64 * area * policy.scale
                })
                .collect()
        }
        RewardKind::GenerativeEntropy => locations
            .iter()
            .map(|&p| match entropy {
                Some(e) => e.region_entropy(p, policy.box_side) * area * policy.scale,
                None => 0.0,
            })
            .collect(),
    }
}

/// Single-task convenience over [`rewards`].
pub fn reward(location: Point, policy: &RewardPolicy, observed: &OccupancyGrid, entropy: Option<&EntropyField>) -> f64 {
    rewards(&[location], policy, observed, entropy)[0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskEventKind {
    Created,
    Assigned,
    Completed,
    Abandoned,
}

/// One row of the task log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEvent {
    pub time: f64,
    pub task: u32,
    pub event: TaskEventKind,
    pub x: f64,
    pub y: f64,
    pub reward: f64,
    pub winner: Option<usize>,
}

/// All tasks of a trial plus their event history.
#[derive(Debug, Clone, Default)]
pub struct TaskRegistry {
    tasks: Vec<Task>,
    rewards: Vec<f64>,
    log: Vec<TaskEvent>,
}

impl TaskRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn get(&self, id: u32) -> Option<&Task> {
        self.tasks.get(id as usize)
    }

    pub fn log(&self) -> &[TaskEvent] {
        &self.log
    }

    pub fn reward_of(&self, id: u32) -> f64 {
        self.rewards.get(id as usize).copied().unwrap_or(0.0)
    }

    pub fn next_id(&self) -> u32 {
        self.tasks.len() as u32
    }

    fn record(&mut self, time: f64, id: u32, event: TaskEventKind, winner: Option<usize>) {
        let t = self.tasks[id as usize];
        self.log.push(TaskEvent {
            time,
            task: id,
            event,
            x: t.location.x,
            y: t.location.y,
            reward: self.reward_of(id),
            winner,
        });
    }

    /// Adds a task; ids are assigned sequentially.
    pub fn add(&mut self, time: f64, location: Point, source: TaskSource) -> u32 {
        let id = self.next_id();
        self.tasks.push(Task {
            id,
            location,
            state: TaskState::Open,
            source,
        });
        self.rewards.push(0.0);
        self.record(time, id, TaskEventKind::Created, None);
        id
    }

    /// Adds the scatter set for `seed`.
    pub fn add_scatter(&mut self, time: f64, count: usize, geometry: &GridGeometry, seed: u64) {
        for t in scatter_tasks(count, geometry, seed, self.next_id()) {
            self.add(time, t.location, TaskSource::Scatter);
        }
    }

    /// Adds frontier tasks not within `dedup` meters of a live task.
    /// Returns the number added.
    pub fn merge_frontiers(&mut self, time: f64, clusters: &[FrontierCluster], dedup: f64) -> usize {
        let mut added = 0;
        for c in clusters {
            let close = self.live().any(|t| t.location.dist(c.location) < dedup);
            if !close {
                self.add(time, c.location, TaskSource::Frontier);
                added += 1;
            }
        }
        added
    }

    /// Tasks that are neither complete nor abandoned.
    pub fn live(&self) -> impl Iterator<Item = &Task> + '_ {
        self.tasks.iter().filter(|t| !t.state.is_terminal())
    }

    pub fn set_rewards(&mut self, ids: &[u32], values: &[f64]) {
        for (&id, &v) in ids.iter().zip(values) {
            self.rewards[id as usize] = v;
        }
    }

    /// Marks a live task assigned to `winner`, logging only on change of owner.
    pub fn assign(&mut self, time: f64, id: u32, winner: usize, previous: Option<usize>) {
        let state = self.tasks[id as usize].state;
        if state.is_terminal() {
            return;
        }
        self.tasks[id as usize].state = TaskState::Assigned;
        if previous != Some(winner) {
            self.record(time, id, TaskEventKind::Assigned, Some(winner));
        }
    }

    /// Returns an assigned task to Open without logging.
    pub fn release(&mut self, id: u32) {
        if self.tasks[id as usize].state == TaskState::Assigned {
            self.tasks[id as usize].state = TaskState::Open;
        }
    }

    pub fn complete(&mut self, time: f64, id: u32, by: Option<usize>) -> bool {
        self.finish(time, id, TaskState::Complete, TaskEventKind::Completed, by)
    }

    pub fn abandon(&mut self, time: f64, id: u32) -> bool {
        self.finish(time, id, TaskState::Abandoned, TaskEventKind::Abandoned, None)
    }

    fn finish(&mut self, time: f64, id: u32, state: TaskState, event: TaskEventKind, by: Option<usize>) -> bool {
        let Some(t) = self.tasks.get_mut(id as usize) else {
            return false;
        };
        if t.state.is_terminal() {
            return false;
        }
        t.state = state;
        self.record(time, id, event, by);
        true
    }

    /// Abandons live tasks whose location has been observed Occupied.
    pub fn abandon_occupied(&mut self, time: f64, observed: &OccupancyGrid) -> Vec<u32> {
        let ids: Vec<u32> = self
            .live()
            .filter(|t| observed.at_point(t.location) == Some(CellState::Occupied))
            .map(|t| t.id)
            .collect();
        for &id in &ids {
            self.abandon(time, id);
        }
        ids
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_starts_at_half_third() {
        let p = halton_points(64, None);
        assert_eq!(p[0], [0.5, 1.0 / 3.0]);
        assert_eq!(p[1], [0.25, 2.0 / 3.0]);
        assert_eq!(p[2], [0.75, 1.0 / 9.0]);
    }

    #[test]
    fn scatter_is_deterministic_and_in_bounds() {
        let g = GridGeometry::default();
        let a = scatter_tasks(64, &g, 9, 0);
        assert_eq!(a, scatter_tasks(64, &g, 9, 0));
        assert_ne!(a, scatter_tasks(64, &g, 10, 0));
        for t in &a {
            assert!(g.contains_point(t.location));
        }
    }

    #[test]
    fn no_frontiers_on_unknown_or_fully_known_maps() {
        let g = GridGeometry::new(20, 20, 0.5);
        assert!(extract_frontiers(&OccupancyGrid::unknown(g), 1).is_empty());
        assert!(extract_frontiers(&OccupancyGrid::filled(g, CellState::Free), 1).is_empty());
    }

    #[test]
    fn free_disk_frontier_is_its_boundary() {
        let g = GridGeometry::new(40, 40, 1.0);
        let mut map = OccupancyGrid::unknown(g);
        let c = Point::new(20.0, 20.0);
        for y in 0..40 {
            for x in 0..40 {
                if g.cell_center(x, y).dist(c) < 8.0 {
                    map.set(x, y, CellState::Free);
                }
            }
        }
        let clusters = extract_frontiers(&map, 5);
        assert_eq!(clusters.len(), 1);
        let frontier = frontier_cells(&map);
        // Brute-force adjacency check over every cell.
        for i in 0..g.len() {
            let (x, y) = g.coords(i);
            let free = map.get(x, y) == CellState::Free;
            let touches = [(0i64, 1i64), (0, -1), (1, 0), (-1, 0)].iter().any(|&(dx, dy)| {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                g.contains_cell(nx, ny) && map.get(nx as usize, ny as usize) == CellState::Unknown
            });
            assert_eq!(frontier[i], free && touches);
            if frontier[i] {
                let d = g.cell_center(x, y).dist(c);
                assert!(d > 6.5 && d < 8.0, "{d}");
            }
        }
        // The ring centroid is the disk center, which is not a frontier
        // cell, so the task is snapped onto the ring.
        let loc = clusters[0].location;
        let (lx, ly) = g.cell_of(loc).unwrap();
        assert!(frontier[g.index(lx, ly)]);
    }

    #[test]
    fn small_clusters_are_dropped() {
        let g = GridGeometry::new(20, 20, 1.0);
        let mut map = OccupancyGrid::unknown(g);
        map.set(5, 5, CellState::Free);
        map.set(6, 5, CellState::Free);
        assert!(extract_frontiers(&map, 5).is_empty());
        assert_eq!(extract_frontiers(&map, 2).len(), 1);
    }

    #[test]
    fn constant_and_fully_observed_rewards() {
        let g = GridGeometry::default();
        let map = OccupancyGrid::filled(g, CellState::Free);
        let locs = [Point::new(10.0, 10.0), Point::new(50.0, 50.0)];
        assert_eq!(
            rewards(&locs, &RewardPolicy::new(RewardKind::Constant), &map, None),
            vec![1.0, 1.0]
        );
        assert_eq!(
            rewards(&locs, &RewardPolicy::new(RewardKind::VisibleEntropy), &map, None),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn registry_lifecycle() {
        let g = GridGeometry::default();
        let mut reg = TaskRegistry::new();
        reg.add_scatter(0.0, 4, &g, 1);
        assert_eq!(reg.tasks().len(), 4);
        reg.assign(1.0, 2, 0, None);
        assert_eq!(reg.get(2).unwrap().state, TaskState::Assigned);
        assert!(reg.complete(2.0, 2, Some(0)));
        assert!(!reg.abandon(3.0, 2));
        assert_eq!(reg.get(2).unwrap().state, TaskState::Complete);
        let events: Vec<_> = reg.log().iter().map(|e| e.event).collect();
        assert_eq!(events.iter().filter(|e| **e == TaskEventKind::Created).count(), 4);
        assert_eq!(events[4..], [TaskEventKind::Assigned, TaskEventKind::Completed]);
    }

    #[test]
    fn frontier_merge_dedups_against_live_tasks() {
        let mut reg = TaskRegistry::new();
        reg.add(0.0, Point::new(10.0, 10.0), TaskSource::Scatter);
        let near = FrontierCluster {
            cells: vec![],
            location: Point::new(11.0, 10.0),
        };
        let far = FrontierCluster {
            cells: vec![],
            location: Point::new(20.0, 10.0),
        };
        assert_eq!(reg.merge_frontiers(1.0, &[near.clone(), far], 3.0), 1);
        reg.abandon(2.0, 0);
        assert_eq!(reg.merge_frontiers(3.0, &[near], 3.0), 1);
    }
}
