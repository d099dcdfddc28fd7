use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::{equivalent_uncovered_threshold, TrialConfig};
use crate::auction::{run_auction, AgentInfo, AuctionTask, Topology, TraceRecord};
use crate::belief::{BeliefField, EntropyField};
use crate::grid::{accuracy, error_map, CellState, ErrorMap, OccupancyGrid};
use crate::predictor::{fallback_grid, PredictedMap, PredictionRequest, Predictor};
use crate::sim::planner::{blocked_mask, distance_field, plan_path_with};
use crate::sim::{edge_starts, Goal, RobotState, World};
use crate::tasking::{extract_frontiers, frontier_cells, rewards, RewardKind, TaskEvent, TaskRegistry};
use crate::{seed, worldgen, Error, Result};

const START_STREAM: u64 = 0x7374_6172;
const SCATTER_STREAM: u64 = 0x7363_6174;
const PREDICT_STREAM: u64 = 0x7072_6564;

/// Metrics recorded at one prediction tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub time: f64,
    pub explored: f64,
    /// Accuracy of the latest predicted map; `None` before the first one arrives.
    pub accuracy: Option<f64>,
    /// Total generative entropy, bits.
    pub entropy_bits: f64,
    pub live_tasks: usize,
    pub assigned_tasks: usize,
    pub auction_rounds: usize,
    /// The prediction applied at this tick was a fallback.
    pub degraded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub threshold: f64,
    /// `None` when the level was never held for long enough.
    pub time: Option<f64>,
}

/// Maps and robot states captured at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct MapFrame {
    pub tick: u64,
    pub time: f64,
    pub robots: Vec<RobotState>,
    pub observed: OccupancyGrid,
    pub predicted: Option<OccupancyGrid>,
    pub entropy: EntropyField,
    pub error: Option<ErrorMap>,
}

/// Robot states at a frame, as written to checkpoint JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub tick: u64,
    pub time: f64,
    pub robots: Vec<RobotState>,
    pub explored: f64,
    pub accuracy: Option<f64>,
}

impl MapFrame {
    pub fn checkpoint(&self, truth: &OccupancyGrid) -> Checkpoint {
        Checkpoint {
            tick: self.tick,
            time: self.time,
            robots: self.robots.clone(),
            explored: self.observed.known_fraction(),
            accuracy: self.predicted.as_ref().and_then(|p| accuracy(p, truth, false).ok()),
        }
    }
}

/// Auction trace line tagged with the simulation time of the auction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedTrace {
    pub time: f64,
    #[serde(flatten)]
    pub record: TraceRecord,
}

#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub config: TrialConfig,
    pub truth: OccupancyGrid,
    pub ticks: Vec<TickRecord>,
    /// First sustained crossing of each accuracy threshold.
    pub crossings: Vec<Crossing>,
    /// First time the explored fraction reached the uncovered equivalent of
    /// each threshold.
    pub uncovered_crossings: Vec<Crossing>,
    pub end_time: f64,
    /// Stopped before the duration because no frontier was left.
    pub stopped_early: bool,
    pub frames: Vec<MapFrame>,
    pub final_frame: MapFrame,
    pub task_log: Vec<TaskEvent>,
    pub auction_trace: Vec<TimedTrace>,
    pub degraded_predictions: usize,
    pub unconverged_auctions: usize,
}

impl TrialRecord {
    pub fn policy(&self) -> RewardKind {
        self.config.policy()
    }

    /// Crossing time of `threshold`, if it is one of the configured levels.
    pub fn crossing(&self, threshold: f64) -> Option<Option<f64>> {
        self.crossings
            .iter()
            .find(|c| (c.threshold - threshold).abs() < 1e-12)
            .map(|c| c.time)
    }
}

/// Time of the first tick from which `value >= threshold` holds for
/// `sustain` consecutive ticks.
///
/// When `holds_after_end` is set the last value is taken to persist, so a
/// run that ends above the threshold still counts.
pub fn sustained_crossing(
    series: &[(f64, Option<f64>)],
    threshold: f64,
    sustain: usize,
    holds_after_end: bool,
) -> Option<f64> {
    let above = |v: &Option<f64>| v.is_some_and(|v| v >= threshold);
    let mut run = 0;
    for (i, (_, v)) in series.iter().enumerate() {
        if above(v) {
            run += 1;
            if run >= sustain {
                return Some(series[i + 1 - run].0);
            }
        } else {
            run = 0;
        }
    }
    (holds_after_end && run > 0).then(|| series[series.len() - run].0)
}

fn round_time(t: f64) -> f64 {
    (t * 1e6).round() / 1e6
}

struct Pending {
    apply_tick: u64,
    map: PredictedMap,
    observed: OccupancyGrid,
}

struct Trial<'a> {
    config: &'a TrialConfig,
    world: World,
    predictor: Box<dyn Predictor>,
    belief: BeliefField,
    entropy: EntropyField,
    tasks: TaskRegistry,
    queues: Vec<VecDeque<u32>>,
    owner: BTreeMap<u32, usize>,
    pending: VecDeque<Pending>,
    latest: Option<OccupancyGrid>,
    next_request: u32,
    degraded_predictions: usize,
    unconverged_auctions: usize,
    trace: Vec<TimedTrace>,
}

impl Trial<'_> {
    fn time(&self) -> f64 {
        round_time(self.world.time)
    }

    fn request_prediction(&mut self, latency_ticks: u64) {
        let tick = self.world.tick;
        let request = PredictionRequest::from_observed(self.next_request, self.time(), &self.world.observed);
        self.next_request = self.next_request.wrapping_add(1);
        let seed = seed::derive(seed::derive(self.config.sim_seed, PREDICT_STREAM), tick);
        let map = match self.predictor.predict(&request, seed) {
            Ok(map) => map,
            Err(e) => {
                log::warn!("prediction {} failed: {e}; using free-space fallback", request.id);
                PredictedMap {
                    id: request.id,
                    predictor: self.predictor.name().to_string(),
                    grid: fallback_grid(&request, self.world.geometry()).expect("request matches the world"),
                    degraded: true,
                }
            }
        };
        self.pending.push_back(Pending {
            apply_tick: tick + latency_ticks,
            map,
            observed: self.world.observed.clone(),
        });
    }

    /// Folds in every prediction due by now. Returns whether any was degraded.
    fn apply_predictions(&mut self) -> Result<bool> {
        let mut degraded = false;
        let mut applied = false;
        while self.pending.front().is_some_and(|p| p.apply_tick <= self.world.tick) {
            let p = self.pending.pop_front().expect("front exists");
            self.belief.update(&p.map.grid, &p.observed)?;
            if p.map.degraded {
                degraded = true;
                self.degraded_predictions += 1;
            }
            self.latest = Some(p.map.grid);
            applied = true;
        }
        if applied {
            self.entropy = self.belief.entropy();
        }
        Ok(degraded)
    }

    fn forget_task(&mut self, id: u32) {
        for q in &mut self.queues {
            q.retain(|&t| t != id);
        }
        self.owner.remove(&id);
    }

    fn abandon(&mut self, id: u32) {
        let time = self.time();
        self.tasks.abandon(time, id);
        self.forget_task(id);
    }

    fn reprice_and_auction(&mut self) -> Result<(usize, usize)> {
        let time = self.time();
        let live: Vec<(u32, crate::Point)> = self.tasks.live().map(|t| (t.id, t.location)).collect();
        let ids: Vec<u32> = live.iter().map(|t| t.0).collect();
        let locations: Vec<crate::Point> = live.iter().map(|t| t.1).collect();
        let values = rewards(
            &locations,
            &self.config.reward,
            &self.world.observed,
            Some(&self.entropy),
        );
        self.tasks.set_rewards(&ids, &values);

        let g = *self.world.geometry();
        let blocked = self
            .config
            .tasks
            .planned_first_leg
            .then(|| blocked_mask(&self.world.observed, self.config.sim.inflation_cells));
        let agents: Vec<AgentInfo> = self
            .world
            .robots
            .iter()
            .map(|r| {
                let mut a = AgentInfo::new(r.position, self.config.sim.robot_speed.max(1e-9));
                if let (Some(blocked), Some((x, y))) = (&blocked, g.cell_of(r.position)) {
                    let field = distance_field(&g, blocked, g.index(x, y));
                    a.first_leg = Some(
                        locations
                            .iter()
                            .map(|&p| {
                                g.cell_of(p)
                                    .map_or(f64::INFINITY, |(x, y)| field[g.index(x, y)] * g.resolution)
                            })
                            .collect(),
                    );
                }
                a
            })
            .collect();
        let auction_tasks: Vec<AuctionTask> = ids
            .iter()
            .zip(&locations)
            .zip(&values)
            .map(|((&id, &location), &reward)| AuctionTask { id, location, reward })
            .collect();
        let (assignment, trace) = run_auction(agents, auction_tasks, self.config.auction, Topology::Full)?;
        if !assignment.converged {
            self.unconverged_auctions += 1;
            log::debug!("auction at t={time} did not converge within the round budget");
        }
        self.trace
            .extend(trace.into_iter().map(|record| TimedTrace { time, record }));

        let mut assigned = 0;
        for &id in &ids {
            match assignment.winner_of(id) {
                Some(w) => {
                    let previous = self.owner.insert(id, w);
                    self.tasks.assign(time, id, w, previous);
                    assigned += 1;
                }
                None => {
                    self.owner.remove(&id);
                    self.tasks.release(id);
                }
            }
        }
        self.queues = assignment.paths.iter().map(|p| p.iter().copied().collect()).collect();
        Ok((assignment.rounds, assigned))
    }

    fn is_live(&self, id: u32) -> bool {
        self.tasks.get(id).is_some_and(|t| !t.state.is_terminal())
    }

    /// Points every robot at the head of its queue, planning or replanning
    /// as needed. Unreachable tasks are abandoned.
    fn steer(&mut self) {
        let mut inflated: Option<Vec<bool>> = None;
        for i in 0..self.world.robots.len() {
            let queue_head = loop {
                match self.queues[i].front().copied() {
                    Some(id) if !self.is_live(id) => {
                        self.queues[i].pop_front();
                    }
                    other => break other,
                }
            };
            let robot = &self.world.robots[i];
            let Some(target) = queue_head else {
                if robot.goal.is_some() {
                    self.world.robots[i].clear_goal();
                }
                continue;
            };
            let observed = &self.world.observed;
            let path_blocked = robot
                .waypoints
                .iter()
                .any(|&w| observed.at_point(w) == Some(CellState::Occupied));
            let on_course = robot.goal == Some(Goal::Task(target)) && !robot.needs_replan && !path_blocked;
            if on_course {
                continue;
            }
            let inflated = inflated.get_or_insert_with(|| blocked_mask(observed, self.config.sim.inflation_cells));
            let mut head = Some(target);
            while let Some(id) = head {
                let goal = self.tasks.get(id).expect("queued task exists").location;
                match plan_path_with(self.world.robots[i].position, goal, &self.world.observed, inflated) {
                    Ok(path) => {
                        self.world.robots[i].set_path(Goal::Task(id), path);
                        break;
                    }
                    Err(_) => {
                        log::debug!("robot {i}: task {id} unreachable, abandoning");
                        self.abandon(id);
                        head = self.queues[i].front().copied();
                    }
                }
            }
            if head.is_none() {
                self.world.robots[i].clear_goal();
            }
        }
    }

    /// Completes live tasks a robot has reached.
    fn complete_reached(&mut self) {
        let time = self.time();
        let radius = self.config.tasks.completion_radius;
        let mut done = Vec::new();
        for r in &self.world.robots {
            let arrived = match r.goal {
                Some(Goal::Task(id)) if r.waypoints.is_empty() => Some(id),
                _ => None,
            };
            for t in self.tasks.live() {
                if (Some(t.id) == arrived || t.location.dist(r.position) <= radius)
                    && !done.iter().any(|&(id, _)| id == t.id)
                {
                    done.push((t.id, r.id));
                }
            }
        }
        for (id, by) in done {
            self.tasks.complete(time, id, Some(by));
            self.forget_task(id);
        }
    }

    fn frame(&self) -> Result<MapFrame> {
        let error = match &self.latest {
            Some(p) => Some(error_map(p, &self.world.truth)?),
            None => None,
        };
        Ok(MapFrame {
            tick: self.world.tick,
            time: self.time(),
            robots: self.world.robots.clone(),
            observed: self.world.observed.clone(),
            predicted: self.latest.clone(),
            entropy: self.entropy.clone(),
            error,
        })
    }
}

/// Runs one seeded trial to its duration or until nothing is left to explore.
pub fn run_trial(config: &TrialConfig) -> Result<TrialRecord> {
    config.validate()?;
    let (_, truth) = worldgen::generate(&config.town_params())?;
    let g = *truth.geometry();
    let predictor = config.predictor.build(&g, &truth)?;
    let mut rng = seed::stream(config.sim_seed, START_STREAM);
    let starts = edge_starts(&truth, config.sim.n_robots, &mut rng);
    if starts.len() < config.sim.n_robots {
        return Err(Error::InvalidParameter("map has no room for the robots".into()));
    }
    let world = World::new(truth.clone(), config.sim, &starts)?;
    let belief = BeliefField::new(g, config.belief);
    let mut tasks = TaskRegistry::new();
    tasks.add_scatter(
        0.0,
        config.tasks.scatter_count,
        &g,
        seed::derive(config.sim_seed, SCATTER_STREAM),
    );

    let sim = &config.sim;
    let predict_every = sim.ticks_per(sim.prediction_period).expect("validated");
    let frontier_every = sim.ticks_per(config.tasks.frontier_period).expect("validated");
    let latency_ticks = if config.prediction_latency == 0.0 {
        0
    } else {
        sim.ticks_per(config.prediction_latency).expect("validated")
    };
    let total_ticks = (config.duration / sim.dt).round() as u64;
    let mut snapshot_times = config.snapshot_times.clone();
    snapshot_times.sort_by(f64::total_cmp);
    let mut snapshot_times: VecDeque<f64> = snapshot_times.into();

    let mut trial = Trial {
        config,
        entropy: belief.entropy(),
        belief,
        world,
        predictor,
        tasks,
        queues: vec![VecDeque::new(); sim.n_robots],
        owner: BTreeMap::new(),
        pending: VecDeque::new(),
        latest: None,
        next_request: 0,
        degraded_predictions: 0,
        unconverged_auctions: 0,
        trace: Vec::new(),
    };
    let mut ticks = Vec::new();
    let mut frames = Vec::new();
    let mut stopped_early = false;

    loop {
        let tick = trial.world.tick;
        let time = trial.time();
        if tick.is_multiple_of(frontier_every) {
            let clusters = extract_frontiers(&trial.world.observed, config.tasks.min_cluster);
            trial.tasks.merge_frontiers(time, &clusters, config.tasks.dedup_radius);
        }
        let prediction_tick = tick.is_multiple_of(predict_every);
        if prediction_tick {
            trial.request_prediction(latency_ticks);
        }
        let degraded = trial.apply_predictions()?;
        for id in trial.tasks.abandon_occupied(time, &trial.world.observed) {
            trial.forget_task(id);
        }

        if prediction_tick {
            let (rounds, assigned) = trial.reprice_and_auction()?;
            let accuracy = match &trial.latest {
                Some(p) => Some(accuracy(p, &trial.world.truth, false)?),
                None => None,
            };
            ticks.push(TickRecord {
                tick,
                time,
                explored: trial.world.explored_fraction(),
                accuracy,
                entropy_bits: trial.entropy.total(),
                live_tasks: trial.tasks.live().count(),
                assigned_tasks: assigned,
                auction_rounds: rounds,
                degraded,
            });
            while snapshot_times.front().is_some_and(|&t| t <= time + 1e-9) {
                snapshot_times.pop_front();
                frames.push(trial.frame()?);
            }
            if config.stop_when_explored && !frontier_cells(&trial.world.observed).contains(&true) {
                stopped_early = true;
                break;
            }
        }
        if tick >= total_ticks {
            break;
        }
        trial.steer();
        trial.world.step();
        trial.complete_reached();
    }

    let series: Vec<(f64, Option<f64>)> = ticks.iter().map(|t| (t.time, t.accuracy)).collect();
    let crossings = config
        .thresholds
        .iter()
        .map(|&threshold| Crossing {
            threshold,
            time: sustained_crossing(&series, threshold, config.sustain_ticks, stopped_early),
        })
        .collect();
    let explored: Vec<(f64, Option<f64>)> = ticks.iter().map(|t| (t.time, Some(t.explored))).collect();
    let uncovered_crossings = config
        .thresholds
        .iter()
        .map(|&threshold| Crossing {
            threshold,
            time: sustained_crossing(&explored, equivalent_uncovered_threshold(threshold), 1, false),
        })
        .collect();
    let final_frame = trial.frame()?;
    Ok(TrialRecord {
        config: config.clone(),
        truth,
        end_time: trial.time(),
        ticks,
        crossings,
        uncovered_crossings,
        stopped_early,
        frames,
        final_frame,
        task_log: trial.tasks.log().to_vec(),
        auction_trace: trial.trace,
        degraded_predictions: trial.degraded_predictions,
        unconverged_auctions: trial.unconverged_auctions,
    })
}
