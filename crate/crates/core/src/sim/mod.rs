//! Stepped multi-robot simulator with perfect lidar and centralized fusion.

pub mod dataset;
pub mod lidar;
pub mod planner;
pub mod wander;

use std::collections::VecDeque;
use std::hash::{Hash, Hasher};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::geom::Point;
use crate::grid::{CellState, GridGeometry, OccupancyGrid};
use crate::seed::Rng;
use crate::{Error, Result};

pub use lidar::sense;
pub use planner::plan_path;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_robots: usize,
    /// Lidar range in meters.
    pub sensor_radius: f64,
    pub dt: f64,
    /// Meters per second.
    pub robot_speed: f64,
    pub lidar_rays: usize,
    /// Seconds between map predictions.
    pub prediction_period: f64,
    /// Obstacle inflation for path planning, in cells.
    pub inflation_cells: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_robots: 3,
            sensor_radius: 10.0,
            dt: 0.1,
            robot_speed: 2.0,
            lidar_rays: 360,
            prediction_period: 2.5,
            inflation_cells: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if !(self.sensor_radius > 0.0) {
            return bad("sensor_radius must be positive");
        }
        if !(self.robot_speed >= 0.0) || self.lidar_rays == 0 || self.n_robots == 0 {
            return bad("robot_speed, lidar_rays and n_robots must be positive");
        }
        if self.ticks_per(self.prediction_period).is_none() {
            return bad("prediction_period must be a positive multiple of dt");
        }
        Ok(())
    }

    /// Whole number of ticks in `period`, if `period` is a positive multiple of dt.
    pub fn ticks_per(&self, period: f64) -> Option<u64> {
        let n = (period / self.dt).round();
        (n >= 1.0 && (n * self.dt - period).abs() < 1e-9).then_some(n as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Goal {
    Task(u32),
    Waypoint(Point),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub id: usize,
    pub position: Point,
    pub heading: f64,
    pub speed: f64,
    pub goal: Option<Goal>,
    pub waypoints: VecDeque<Point>,
    /// Set when the robot stopped short because its path became blocked.
    pub needs_replan: bool,
}

impl RobotState {
    pub fn new(id: usize, position: Point, heading: f64, speed: f64) -> Self {
        Self {
            id,
            position,
            heading,
            speed,
            goal: None,
            waypoints: VecDeque::new(),
            needs_replan: false,
        }
    }

    pub fn set_path(&mut self, goal: Goal, waypoints: Vec<Point>) {
        self.goal = Some(goal);
        self.waypoints = waypoints.into();
        self.needs_replan = false;
    }

    pub fn clear_goal(&mut self) {
        self.goal = None;
        self.waypoints.clear();
        self.needs_replan = false;
    }

    /// Moves up to `speed * dt` along the waypoints, popping reached ones.
    ///
    /// Refuses to enter a cell that is Occupied in `truth` or `observed`;
    /// in that case the robot stops and flags a replan.
    pub fn advance(&mut self, dt: f64, truth: &OccupancyGrid, observed: &OccupancyGrid) -> f64 {
        let mut remaining = self.speed * dt;
        let mut moved = 0.0;
        let blocked = |p: Point| {
            matches!(truth.at_point(p), Some(CellState::Occupied) | None)
                || observed.at_point(p) == Some(CellState::Occupied)
        };
        while remaining > 0.0 {
            let Some(&target) = self.waypoints.front() else {
                break;
            };
            if blocked(target) {
                self.needs_replan = true;
                break;
            }
            let d = self.position.dist(target);
            if d <= remaining {
                if d > 0.0 {
                    self.heading = (target.y - self.position.y).atan2(target.x - self.position.x);
                }
                self.position = target;
                remaining -= d;
                moved += d;
                self.waypoints.pop_front();
            } else {
                let dir = (target - self.position) * (1.0 / d);
                self.heading = dir.y.atan2(dir.x);
                self.position = self.position + dir * remaining;
                moved += remaining;
                remaining = 0.0;
            }
        }
        moved
    }
}

/// Ground truth, fused observation and robots of one trial.
#[derive(Debug, Clone)]
pub struct World {
    pub truth: OccupancyGrid,
    pub observed: OccupancyGrid,
    pub robots: Vec<RobotState>,
    pub time: f64,
    pub tick: u64,
    pub config: SimConfig,
}

impl World {
    /// Builds a world and takes the initial scan from every robot.
    pub fn new(truth: OccupancyGrid, config: SimConfig, starts: &[Point]) -> Result<Self> {
        config.validate()?;
        if truth.cells().contains(&CellState::Unknown) {
            return Err(Error::TruthHasUnknown);
        }
        let robots = starts
            .iter()
            .enumerate()
            .map(|(i, &p)| RobotState::new(i, p, 0.0, config.robot_speed))
            .collect();
        let mut world = Self {
            observed: OccupancyGrid::unknown(*truth.geometry()),
            truth,
            robots,
            time: 0.0,
            tick: 0,
            config,
        };
        world.sense_all();
        Ok(world)
    }

    pub fn geometry(&self) -> &GridGeometry {
        self.truth.geometry()
    }

    pub fn sense_all(&mut self) -> usize {
        let mut newly = 0;
        for r in &self.robots {
            newly += lidar::sense(
                r.position,
                self.config.lidar_rays,
                self.config.sensor_radius,
                &self.truth,
                &mut self.observed,
            );
        }
        newly
    }

    /// Advances every robot by one tick, rescans, and advances the clock.
    pub fn step(&mut self) -> usize {
        let dt = self.config.dt;
        for r in &mut self.robots {
            r.advance(dt, &self.truth, &self.observed);
        }
        let newly = self.sense_all();
        self.tick += 1;
        self.time = self.tick as f64 * dt;
        newly
    }

    pub fn explored_fraction(&self) -> f64 {
        self.observed.known_fraction()
    }

    /// Hash of the clock and every robot's exact position and heading.
    pub fn state_hash(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.tick.hash(&mut h);
        for r in &self.robots {
            r.position.x.to_bits().hash(&mut h);
            r.position.y.to_bits().hash(&mut h);
            r.heading.to_bits().hash(&mut h);
        }
        h.finish()
    }
}

/// Whether a point is in free space with one cell of clearance.
pub fn is_clear(truth: &OccupancyGrid, p: Point) -> bool {
    let g = truth.geometry();
    let (cx, cy) = g.cell_of_unclamped(p);
    if !g.contains_cell(cx, cy) {
        return false;
    }
    for dy in -1..=1 {
        for dx in -1..=1 {
            let (x, y) = (cx + dx, cy + dy);
            if g.contains_cell(x, y) && truth.get(x as usize, y as usize) == CellState::Occupied {
                return false;
            }
        }
    }
    true
}

/// A uniformly random point on the map boundary inset by `inset` meters,
/// and the inward heading toward the map center.
pub fn random_edge_point(geometry: &GridGeometry, inset: f64, rng: &mut Rng) -> (Point, f64) {
    let (w, h) = geometry.extent();
    let (iw, ih) = (w - 2.0 * inset, h - 2.0 * inset);
    let s = rng.random_range(0.0..2.0 * (iw + ih));
    let local = if s < iw {
        Point::new(inset + s, inset)
    } else if s < iw + ih {
        Point::new(w - inset, inset + s - iw)
    } else if s < 2.0 * iw + ih {
        Point::new(w - inset - (s - iw - ih), h - inset)
    } else {
        Point::new(inset, h - inset - (s - 2.0 * iw - ih))
    };
    let p = geometry.origin + local;
    let c = geometry.origin + Point::new(w / 2.0, h / 2.0);
    (p, (c.y - p.y).atan2(c.x - p.x))
}

/// Start positions for a team: a shared random edge location, robots spaced
/// two meters apart toward the map center.
pub fn edge_starts(truth: &OccupancyGrid, n: usize, rng: &mut Rng) -> Vec<Point> {
    let g = *truth.geometry();
    for _ in 0..1000 {
        let (p, heading) = random_edge_point(&g, 1.0, rng);
        let dir = Point::from_angle(heading);
        let starts: Vec<Point> = (0..n).map(|i| g.clamp_point(p + dir * (2.0 * i as f64))).collect();
        if starts.iter().all(|&s| is_clear(truth, s)) {
            return starts;
        }
    }
    // Fall back to any clear cells in scan order.
    (0..g.len())
        .map(|i| {
            let (x, y) = g.coords(i);
            g.cell_center(x, y)
        })
        .filter(|&p| is_clear(truth, p))
        .take(n)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open_world(starts: &[Point]) -> World {
        let truth = OccupancyGrid::filled(GridGeometry::default(), CellState::Free);
        World::new(truth, SimConfig::default(), starts).unwrap()
    }

    #[test]
    fn kinematics_displacement_per_tick() {
        let mut w = open_world(&[Point::new(10.25, 10.25)]);
        w.robots[0].set_path(Goal::Waypoint(Point::new(30.25, 10.25)), vec![Point::new(30.25, 10.25)]);
        w.step();
        assert!((w.robots[0].position.x - 10.45).abs() < 1e-12);
        assert!((w.time - 0.1).abs() < 1e-12);
    }

    #[test]
    fn pops_waypoint_and_continues_same_tick() {
        let mut w = open_world(&[Point::new(10.0, 10.0)]);
        let wps = vec![Point::new(10.1, 10.0), Point::new(10.1, 12.0)];
        w.robots[0].set_path(Goal::Waypoint(wps[1]), wps);
        w.step();
        let p = w.robots[0].position;
        assert_eq!(w.robots[0].waypoints.len(), 1);
        assert!((p.x - 10.1).abs() < 1e-12 && (p.y - 10.1).abs() < 1e-12);
        let traveled = 0.1 + (p.y - 10.0);
        assert!((traveled - 0.2).abs() < 1e-12);
    }

    #[test]
    fn idle_robot_stays_put() {
        let mut w = open_world(&[Point::new(5.0, 5.0)]);
        w.step();
        assert_eq!(w.robots[0].position, Point::new(5.0, 5.0));
    }

    #[test]
    fn refuses_to_enter_occupied_cell() {
        let mut truth = OccupancyGrid::filled(GridGeometry::default(), CellState::Free);
        truth.set(22, 20, CellState::Occupied);
        let mut w = World::new(truth, SimConfig::default(), &[Point::new(10.25, 10.25)]).unwrap();
        let target = w.geometry().cell_center(22, 20);
        w.robots[0].set_path(Goal::Waypoint(target), vec![target]);
        w.step();
        assert!(w.robots[0].needs_replan);
        assert_eq!(w.robots[0].position, Point::new(10.25, 10.25));
    }

    #[test]
    fn overlapping_scans_fuse_as_union() {
        let truth = crate::worldgen::generate(&crate::worldgen::TownParams::with_seed(4))
            .unwrap()
            .1;
        let cfg = SimConfig::default();
        let (a, b) = (Point::new(20.2, 30.3), Point::new(26.1, 31.7));
        let scan = |ps: &[Point]| {
            let mut obs = OccupancyGrid::unknown(*truth.geometry());
            for &p in ps {
                sense(p, cfg.lidar_rays, cfg.sensor_radius, &truth, &mut obs);
            }
            obs
        };
        let (oa, ob, both) = (scan(&[a]), scan(&[b]), scan(&[a, b]));
        for i in 0..both.len() {
            let expect = if oa.cells()[i].is_known() {
                oa.cells()[i]
            } else {
                ob.cells()[i]
            };
            assert_eq!(both.cells()[i], expect);
        }
        assert_eq!(scan(&[b, a]), both);
    }

    #[test]
    fn edge_starts_are_clear() {
        let (_, truth) = crate::worldgen::generate(&crate::worldgen::TownParams::with_seed(9)).unwrap();
        let mut rng = crate::seed::rng(1);
        let starts = edge_starts(&truth, 3, &mut rng);
        assert_eq!(starts.len(), 3);
        assert!(starts.iter().all(|&p| is_clear(&truth, p)));
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        let c = SimConfig {
            prediction_period: 0.25 + 0.05,
            dt: 0.2,
            ..SimConfig::default()
        };
        assert!(c.validate().is_err());
        assert_eq!(SimConfig::default().ticks_per(2.5), Some(25));
    }
}
