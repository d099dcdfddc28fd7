//! Consensus-based bundle auction.
//!
//! Agents greedily grow bundles of up to `bundle_size` tasks scored by
//! time-discounted reward, then reconcile winner tables with their
//! neighbours using the CBBA update/reset/leave rules. Rounds are
//! synchronous: every agent builds, messages are exchanged, every agent
//! runs consensus.
//!
//! Tables are indexed by position in the auction's task list, not by task id.

use serde::{Deserialize, Serialize};

use crate::geom::Point;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuctionConfig {
    /// Discount per second of travel.
    pub discount: f64,
    pub bundle_size: usize,
    pub round_budget: usize,
    /// Clip each marginal score to the previous bundle addition's bid.
    pub clip_marginals: bool,
    /// Record a trace entry per agent per round.
    pub trace: bool,
}

impl Default for AuctionConfig {
    fn default() -> Self {
        Self {
            discount: 0.95,
            bundle_size: 3,
            round_budget: 50,
            clip_marginals: true,
            trace: false,
        }
    }
}

impl AuctionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.discount > 0.0 && self.discount < 1.0) || self.bundle_size == 0 || self.round_budget == 0 {
            return Err(Error::InvalidParameter(format!("bad auction config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentInfo {
    pub position: Point,
    pub speed: f64,
    /// Travel distance from the agent to each task, replacing the
    /// straight-line first leg when present.
    pub first_leg: Option<Vec<f64>>,
}

impl AgentInfo {
    pub fn new(position: Point, speed: f64) -> Self {
        Self {
            position,
            speed,
            first_leg: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuctionTask {
    pub id: u32,
    pub location: Point,
    pub reward: f64,
}

/// Discounted score of visiting `path` in order: sum of
/// `discount^tau_j * reward_j`, with `tau_j` the cumulative straight-line
/// travel time in seconds.
pub fn path_score(start: Point, speed: f64, discount: f64, path: &[(Point, f64)]) -> f64 {
    let mut pos = start;
    let mut dist = 0.0;
    let mut score = 0.0;
    for &(p, c) in path {
        dist += pos.dist(p);
        pos = p;
        score += discount.powf(dist / speed) * c;
    }
    score
}

fn score_indices(agent: &AgentInfo, tasks: &[AuctionTask], discount: f64, path: &[usize]) -> f64 {
    let mut pos = agent.position;
    let mut dist = 0.0;
    let mut score = 0.0;
    for (k, &j) in path.iter().enumerate() {
        let t = &tasks[j];
        dist += match (&agent.first_leg, k) {
            (Some(leg), 0) => leg[j],
            _ => pos.dist(t.location),
        };
        pos = t.location;
        score += discount.powf(dist / agent.speed) * t.reward;
    }
    score
}

/// Best insertion of `task` into `path`: (marginal score, position).
/// Ties go to the earliest position.
fn best_insertion(
    agent: &AgentInfo,
    tasks: &[AuctionTask],
    discount: f64,
    path: &[usize],
    base: f64,
    task: usize,
) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    let mut trial = Vec::with_capacity(path.len() + 1);
    for pos in 0..=path.len() {
        trial.clear();
        trial.extend_from_slice(&path[..pos]);
        trial.push(task);
        trial.extend_from_slice(&path[pos..]);
        let m = score_indices(agent, tasks, discount, &trial) - base;
        if m > best.0 {
            best = (m, pos);
        }
    }
    best
}

/// `a` (bid, agent) beats `b`: higher bid, or equal bid and lower agent id.
fn outbids(bid_a: f64, agent_a: usize, bid_b: f64, agent_b: Option<usize>) -> bool {
    match agent_b {
        None => bid_a > bid_b || (bid_a == bid_b && bid_a > 0.0),
        Some(b) => bid_a > bid_b || (bid_a == bid_b && agent_a < b),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionMessage {
    pub sender: usize,
    pub time: f64,
    pub winners: Vec<Option<usize>>,
    pub winning_bids: Vec<f64>,
    pub timestamps: Vec<f64>,
    pub tombstones: Vec<bool>,
}

/// One agent's view of the auction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleState {
    pub agent: usize,
    /// Task indices in the order they were added.
    pub bundle: Vec<usize>,
    /// Bid placed for each bundle entry.
    pub bundle_bids: Vec<f64>,
    /// Task indices in visit order.
    pub path: Vec<usize>,
    pub winners: Vec<Option<usize>>,
    pub winning_bids: Vec<f64>,
    /// Per agent, time of the freshest information received about it.
    pub timestamps: Vec<f64>,
    pub tombstones: Vec<bool>,
}

/// Outcome of one consensus step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConsensusResult {
    pub outgoing: Option<AuctionMessage>,
    /// Bundle tasks this agent gave up.
    pub released: Vec<usize>,
}

impl BundleState {
    pub fn new(agent: usize, n_agents: usize, n_tasks: usize) -> Self {
        Self {
            agent,
            bundle: Vec::new(),
            bundle_bids: Vec::new(),
            path: Vec::new(),
            winners: vec![None; n_tasks],
            winning_bids: vec![0.0; n_tasks],
            timestamps: vec![0.0; n_agents],
            tombstones: vec![false; n_tasks],
        }
    }

    fn tables(&self) -> (&[Option<usize>], &[f64], &[bool]) {
        (&self.winners, &self.winning_bids, &self.tombstones)
    }

    pub fn message(&self, time: f64) -> AuctionMessage {
        AuctionMessage {
            sender: self.agent,
            time,
            winners: self.winners.clone(),
            winning_bids: self.winning_bids.clone(),
            timestamps: self.timestamps.clone(),
            tombstones: self.tombstones.clone(),
        }
    }

    /// Greedily adds tasks until the bundle is full or no task can be won.
    /// Returns the tasks added.
    pub fn build_bundle(&mut self, agent: &AgentInfo, tasks: &[AuctionTask], config: &AuctionConfig) -> Vec<usize> {
        let mut added = Vec::new();
        while self.bundle.len() < config.bundle_size {
            let base = score_indices(agent, tasks, config.discount, &self.path);
            let cap = if config.clip_marginals {
                self.bundle_bids.last().copied().unwrap_or(f64::INFINITY)
            } else {
                f64::INFINITY
            };
            let mut best: Option<(f64, usize, usize)> = None;
            for j in 0..tasks.len() {
                if self.tombstones[j] || self.path.contains(&j) {
                    continue;
                }
                let (m, pos) = best_insertion(agent, tasks, config.discount, &self.path, base, j);
                let bid = m.min(cap);
                if !(bid > 0.0) || !outbids(bid, self.agent, self.winning_bids[j], self.winners[j]) {
                    continue;
                }
                if best.is_none_or(|(b, _, _)| bid > b) {
                    best = Some((bid, j, pos));
                }
            }
            let Some((bid, j, pos)) = best else {
                break;
            };
            self.bundle.push(j);
            self.bundle_bids.push(bid);
            self.path.insert(pos, j);
            self.winners[j] = Some(self.agent);
            self.winning_bids[j] = bid;
            added.push(j);
        }
        added
    }

    fn update(&mut self, j: usize, msg: &AuctionMessage) {
        self.winners[j] = msg.winners[j];
        self.winning_bids[j] = msg.winning_bids[j];
    }

    fn reset(&mut self, j: usize) {
        self.winners[j] = None;
        self.winning_bids[j] = 0.0;
    }

    /// Applies the decision table for every task of one message.
    fn merge(&mut self, msg: &AuctionMessage) {
        let i = self.agent;
        let k = msg.sender;
        let mine = self.timestamps.clone();
        let fresher = |m: usize| msg.timestamps[m] > mine[m];
        for j in 0..self.winners.len() {
            if msg.tombstones[j] {
                self.tombstones[j] = true;
            }
            let (zk, yk) = (msg.winners[j], msg.winning_bids[j]);
            let (zi, yi) = (self.winners[j], self.winning_bids[j]);
            match zk {
                Some(s) if s == k => match zi {
                    Some(r) if r == i => {
                        if outbids(yk, k, yi, zi) {
                            self.update(j, msg);
                        }
                    }
                    Some(r) if r == k => self.update(j, msg),
                    Some(m) => {
                        if fresher(m) || outbids(yk, k, yi, zi) {
                            self.update(j, msg);
                        }
                    }
                    None => self.update(j, msg),
                },
                Some(s) if s == i => match zi {
                    Some(r) if r == i => {}
                    Some(r) if r == k => self.reset(j),
                    Some(m) => {
                        if fresher(m) {
                            self.reset(j);
                        }
                    }
                    None => {}
                },
                Some(m) => match zi {
                    Some(r) if r == i => {
                        if fresher(m) && outbids(yk, m, yi, zi) {
                            self.update(j, msg);
                        }
                    }
                    Some(r) if r == k => {
                        if fresher(m) {
                            self.update(j, msg);
                        } else {
                            self.reset(j);
                        }
                    }
                    Some(r) if r == m => {
                        if fresher(m) {
                            self.update(j, msg);
                        }
                    }
                    Some(n) => {
                        let (fm, fnn) = (fresher(m), fresher(n));
                        if fm && fnn {
                            self.update(j, msg);
                        } else if fm && outbids(yk, m, yi, zi) {
                            self.update(j, msg);
                        } else if fnn && mine[m] > msg.timestamps[m] {
                            self.reset(j);
                        }
                    }
                    None => {
                        if fresher(m) {
                            self.update(j, msg);
                        }
                    }
                },
                None => match zi {
                    Some(r) if r == i => {}
                    Some(r) if r == k => self.update(j, msg),
                    Some(m) => {
                        if fresher(m) {
                            self.update(j, msg);
                        }
                    }
                    None => {}
                },
            }
        }
    }

    /// Drops the first bundle task this agent no longer wins and every task
    /// added after it.
    fn release_lost(&mut self) -> Vec<usize> {
        let lost = self
            .bundle
            .iter()
            .position(|&j| self.winners[j] != Some(self.agent) || self.tombstones[j]);
        let Some(n) = lost else {
            return Vec::new();
        };
        let released: Vec<usize> = self.bundle.drain(n..).collect();
        self.bundle_bids.truncate(n);
        for (k, &j) in released.iter().enumerate() {
            if (k > 0 || self.tombstones[j]) && self.winners[j] == Some(self.agent) {
                self.reset(j);
            }
        }
        self.path.retain(|j| !released.contains(j));
        released
    }

    /// Merges neighbour messages, releases lost bundle tasks and returns a
    /// message if the winner tables changed.
    ///
    /// `direct` lists the agents whose messages count as received now;
    /// malformed messages are dropped.
    pub fn consensus_step(&mut self, incoming: &[AuctionMessage], time: f64) -> ConsensusResult {
        let n_tasks = self.winners.len();
        let n_agents = self.timestamps.len();
        let before = (self.winners.clone(), self.winning_bids.clone(), self.tombstones.clone());
        let mut received = Vec::new();
        for msg in incoming {
            let ok = msg.sender < n_agents
                && msg.sender != self.agent
                && msg.winners.len() == n_tasks
                && msg.winning_bids.len() == n_tasks
                && msg.tombstones.len() == n_tasks
                && msg.timestamps.len() == n_agents
                && msg.winners.iter().all(|w| w.is_none_or(|a| a < n_agents))
                && msg.winning_bids.iter().all(|b| b.is_finite() && *b >= 0.0);
            if !ok {
                log::warn!("agent {} dropped malformed message from {}", self.agent, msg.sender);
                continue;
            }
            self.merge(msg);
            received.push(msg);
        }
        for msg in &received {
            let k = msg.sender;
            self.timestamps[k] = self.timestamps[k].max(msg.time);
            for m in 0..n_agents {
                if m != self.agent && m != k {
                    self.timestamps[m] = self.timestamps[m].max(msg.timestamps[m]);
                }
            }
        }
        let released = self.release_lost();
        let changed = (before.0.as_slice(), before.1.as_slice(), before.2.as_slice()) != self.tables();
        ConsensusResult {
            outgoing: changed.then(|| self.message(time)),
            released,
        }
    }

    /// Marks a task as permanently removed.
    pub fn abandon(&mut self, task: usize) {
        self.tombstones[task] = true;
        self.release_lost();
        self.reset(task);
    }

    pub fn check_invariants(&self, bundle_size: usize) -> bool {
        let mut sorted = self.path.clone();
        sorted.sort_unstable();
        sorted.dedup();
        sorted.len() == self.path.len()
            && self.bundle.len() <= bundle_size
            && self.bundle.iter().all(|j| self.path.contains(j))
            && self.path.len() == self.bundle.len()
            && self.winning_bids.iter().all(|b| *b >= 0.0)
    }
}

/// Which agents hear each other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Topology {
    Full,
    /// Symmetric adjacency matrix.
    Adjacency(Vec<Vec<bool>>),
}

impl Topology {
    pub fn neighbours(&self, agent: usize, n: usize) -> Vec<usize> {
        match self {
            Topology::Full => (0..n).filter(|&k| k != agent).collect(),
            Topology::Adjacency(adj) => (0..n).filter(|&k| k != agent && adj[agent][k]).collect(),
        }
    }

    pub fn is_connected(&self, n: usize) -> bool {
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(a) = stack.pop() {
            for b in self.neighbours(a, n) {
                if !seen[b] {
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Winner tables of one agent, as recorded in the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSnapshot {
    pub bundle: Vec<u32>,
    pub path: Vec<u32>,
    pub winners: Vec<Option<usize>>,
    pub winning_bids: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub round: usize,
    pub agent: usize,
    pub before: TableSnapshot,
    pub after: TableSnapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// Per agent, task ids in visit order.
    pub paths: Vec<Vec<u32>>,
    /// Per task (auction order), the agreed winner.
    pub winners: Vec<Option<usize>>,
    pub rounds: usize,
    pub converged: bool,
}

impl Assignment {
    /// Winner of the task with `id`, if any.
    pub fn winner_of(&self, id: u32) -> Option<usize> {
        self.paths.iter().position(|p| p.contains(&id))
    }

    /// No task appears in two paths.
    pub fn is_conflict_free(&self) -> bool {
        let mut all: Vec<u32> = self.paths.iter().flatten().copied().collect();
        let n = all.len();
        all.sort_unstable();
        all.dedup();
        all.len() == n
    }
}

/// Synchronous auction driver.
#[derive(Debug, Clone)]
pub struct Auction {
    pub config: AuctionConfig,
    pub agents: Vec<AgentInfo>,
    pub tasks: Vec<AuctionTask>,
    pub topology: Topology,
    pub states: Vec<BundleState>,
    inbox: Vec<Option<AuctionMessage>>,
    round: usize,
    trace: Vec<TraceRecord>,
}

impl Auction {
    pub fn new(
        config: AuctionConfig,
        agents: Vec<AgentInfo>,
        tasks: Vec<AuctionTask>,
        topology: Topology,
    ) -> Result<Self> {
        config.validate()?;
        let n = agents.len();
        if !topology.is_connected(n) {
            return Err(Error::InvalidParameter("auction topology is not connected".into()));
        }
        if let Topology::Adjacency(adj) = &topology {
            if adj.len() != n || adj.iter().any(|row| row.len() != n) {
                return Err(Error::InvalidParameter("adjacency size does not match agents".into()));
            }
        }
        for a in &agents {
            if !(a.speed > 0.0) || a.first_leg.as_ref().is_some_and(|l| l.len() != tasks.len()) {
                return Err(Error::InvalidParameter(format!("bad agent {a:?}")));
            }
        }
        if tasks.iter().any(|t| !(t.reward.is_finite() && t.reward >= 0.0)) {
            return Err(Error::InvalidParameter(
                "task rewards must be finite and non-negative".into(),
            ));
        }
        let states = (0..n).map(|i| BundleState::new(i, n, tasks.len())).collect();
        Ok(Self {
            config,
            agents,
            tasks,
            topology,
            states,
            inbox: vec![None; n],
            round: 0,
            trace: Vec::new(),
        })
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    fn snapshot(&self, agent: usize) -> TableSnapshot {
        let s = &self.states[agent];
        TableSnapshot {
            bundle: s.bundle.iter().map(|&j| self.tasks[j].id).collect(),
            path: s.path.iter().map(|&j| self.tasks[j].id).collect(),
            winners: s.winners.clone(),
            winning_bids: s.winning_bids.clone(),
        }
    }

    /// Removes a task (by auction index) from `agent`'s tables; the
    /// tombstone spreads with the next messages.
    pub fn abandon(&mut self, agent: usize, task: usize) {
        self.states[agent].abandon(task);
        self.inbox[agent] = Some(self.states[agent].message(self.round as f64));
    }

    /// Runs one round. Returns whether any table changed.
    pub fn step(&mut self) -> bool {
        self.round += 1;
        let n = self.agents.len();
        let time = self.round as f64;
        let before: Vec<TableSnapshot> = if self.config.trace {
            (0..n).map(|i| self.snapshot(i)).collect()
        } else {
            Vec::new()
        };
        let mut changed = false;
        for i in 0..n {
            let added = self.states[i].build_bundle(&self.agents[i], &self.tasks, &self.config);
            if !added.is_empty() {
                changed = true;
                self.inbox[i] = Some(self.states[i].message(time));
            }
        }
        // Every agent sees the latest message of each neighbour from the
        // same snapshot, so agent order within the round does not matter.
        let posted = self.inbox.clone();
        for i in 0..n {
            let incoming: Vec<AuctionMessage> = self
                .topology
                .neighbours(i, n)
                .into_iter()
                .filter_map(|k| posted[k].clone())
                .collect();
            let result = self.states[i].consensus_step(&incoming, time);
            if let Some(msg) = result.outgoing {
                changed = true;
                self.inbox[i] = Some(msg);
            }
        }
        if self.config.trace {
            for (i, b) in before.into_iter().enumerate() {
                let after = self.snapshot(i);
                self.trace.push(TraceRecord {
                    round: self.round,
                    agent: i,
                    before: b,
                    after,
                });
            }
        }
        changed
    }

    /// Runs rounds until one produces no change or the budget runs out.
    pub fn run(&mut self) -> Assignment {
        let start = self.round;
        let mut last_change = start;
        let mut converged = false;
        while self.round - start < self.config.round_budget {
            if self.step() {
                last_change = self.round;
            } else {
                converged = true;
                break;
            }
        }
        Assignment {
            paths: self
                .states
                .iter()
                .map(|s| s.path.iter().map(|&j| self.tasks[j].id).collect())
                .collect(),
            winners: self.consensus_winners(),
            rounds: last_change - start,
            converged,
        }
    }

    /// Per task, the agent every state agrees on, or `None` when they differ.
    fn consensus_winners(&self) -> Vec<Option<usize>> {
        (0..self.tasks.len())
            .map(|j| {
                let first = self.states.first().and_then(|s| s.winners[j]);
                if self.states.iter().all(|s| s.winners[j] == first) {
                    first
                } else {
                    None
                }
            })
            .collect()
    }
}

/// Builds and runs an auction to convergence.
pub fn run_auction(
    agents: Vec<AgentInfo>,
    tasks: Vec<AuctionTask>,
    config: AuctionConfig,
    topology: Topology,
) -> Result<(Assignment, Vec<TraceRecord>)> {
    let mut auction = Auction::new(config, agents, tasks, topology)?;
    let assignment = auction.run();
    Ok((assignment, auction.trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agent(x: f64, y: f64) -> AgentInfo {
        AgentInfo::new(Point::new(x, y), 1.0)
    }

    fn task(id: u32, x: f64, y: f64, reward: f64) -> AuctionTask {
        AuctionTask {
            id,
            location: Point::new(x, y),
            reward,
        }
    }

    #[test]
    fn single_task_score_is_discounted_reward() {
        let s = path_score(Point::new(0.0, 0.0), 2.0, 0.95, &[(Point::new(20.0, 0.0), 1.0)]);
        assert!((s - 0.95f64.powi(10)).abs() < 1e-12);
        assert_eq!(path_score(Point::new(0.0, 0.0), 2.0, 0.95, &[]), 0.0);
    }

    #[test]
    fn empty_task_list_leaves_state_unchanged() {
        let mut s = BundleState::new(0, 1, 0);
        let before = s.clone();
        assert!(s
            .build_bundle(&agent(0.0, 0.0), &[], &AuctionConfig::default())
            .is_empty());
        assert_eq!(s, before);
    }

    #[test]
    fn lone_task_bid_equals_its_score() {
        let tasks = [task(7, 3.0, 4.0, 2.0)];
        let mut s = BundleState::new(0, 1, 1);
        s.build_bundle(&agent(0.0, 0.0), &tasks, &AuctionConfig::default());
        assert_eq!(s.bundle, vec![0]);
        assert!((s.winning_bids[0] - 2.0 * 0.95f64.powi(5)).abs() < 1e-12);
    }

    #[test]
    fn higher_bid_wins_after_exchange() {
        let n = 2;
        let mut a = BundleState::new(0, n, 1);
        let mut b = BundleState::new(1, n, 1);
        a.bundle = vec![0];
        a.bundle_bids = vec![0.7];
        a.path = vec![0];
        a.winners[0] = Some(0);
        a.winning_bids[0] = 0.7;
        b.bundle = vec![0];
        b.bundle_bids = vec![0.9];
        b.path = vec![0];
        b.winners[0] = Some(1);
        b.winning_bids[0] = 0.9;
        let (ma, mb) = (a.message(1.0), b.message(1.0));
        let ra = a.consensus_step(&[mb], 1.0);
        let rb = b.consensus_step(&[ma], 1.0);
        assert_eq!(ra.released, vec![0]);
        assert!(ra.outgoing.is_some());
        assert!(rb.outgoing.is_none());
        assert_eq!(a.winners[0], Some(1));
        assert_eq!(b.winners[0], Some(1));
        assert!(a.bundle.is_empty());
    }

    #[test]
    fn equal_bids_go_to_lower_agent() {
        let mut a = BundleState::new(1, 3, 1);
        let mut b = BundleState::new(2, 3, 1);
        for s in [&mut a, &mut b] {
            s.bundle = vec![0];
            s.bundle_bids = vec![0.8];
            s.path = vec![0];
            s.winners[0] = Some(s.agent);
            s.winning_bids[0] = 0.8;
        }
        let (ma, mb) = (a.message(1.0), b.message(1.0));
        a.consensus_step(&[mb], 1.0);
        b.consensus_step(&[ma], 1.0);
        assert_eq!(a.winners[0], Some(1));
        assert_eq!(b.winners[0], Some(1));
    }

    #[test]
    fn identical_tables_are_quiet() {
        let tasks = [task(0, 1.0, 0.0, 1.0)];
        let mut a = BundleState::new(0, 2, 1);
        a.build_bundle(&agent(0.0, 0.0), &tasks, &AuctionConfig::default());
        let mut b = a.clone();
        b.agent = 1;
        b.bundle.clear();
        b.bundle_bids.clear();
        b.path.clear();
        let r = b.consensus_step(&[a.message(1.0)], 1.0);
        assert!(r.outgoing.is_none());
    }

    #[test]
    fn one_agent_converges_after_first_build() {
        let tasks = vec![task(0, 1.0, 0.0, 1.0), task(1, 2.0, 0.0, 1.0)];
        let (a, _) = run_auction(vec![agent(0.0, 0.0)], tasks, AuctionConfig::default(), Topology::Full).unwrap();
        assert!(a.converged);
        assert_eq!(a.rounds, 1);
        assert_eq!(a.paths, vec![vec![0, 1]]);
    }

    #[test]
    fn malformed_message_is_dropped() {
        let mut s = BundleState::new(0, 2, 2);
        let mut bad = BundleState::new(1, 2, 3).message(1.0);
        bad.winners[0] = Some(1);
        let r = s.consensus_step(&[bad], 1.0);
        assert!(r.outgoing.is_none());
        assert_eq!(s.winners, vec![None, None]);
    }

    #[test]
    fn tombstone_spreads_and_frees_agent() {
        let tasks = vec![task(0, 5.0, 0.0, 1.0), task(1, 0.0, 5.0, 1.0), task(2, -5.0, 0.0, 1.0)];
        let agents = vec![agent(4.0, 0.0), agent(0.0, 4.0)];
        let mut auction = Auction::new(AuctionConfig::default(), agents, tasks, Topology::Full).unwrap();
        let first = auction.run();
        assert!(first.converged);
        let owner = first.winner_of(0).unwrap();
        auction.abandon(owner, 0);
        let second = auction.run();
        assert!(second.converged);
        assert!(second.paths.iter().all(|p| !p.contains(&0)));
        assert!(auction.states.iter().all(|s| s.tombstones[0]));
        assert_eq!(second.paths.iter().map(|p| p.len()).sum::<usize>(), 2);
    }

    #[test]
    fn line_topology_converges() {
        let tasks: Vec<_> = (0..6).map(|k| task(k, k as f64 * 3.0, 1.0, 1.0)).collect();
        let agents = vec![agent(0.0, 0.0), agent(8.0, 0.0), agent(16.0, 0.0)];
        let adj = vec![
            vec![false, true, false],
            vec![true, false, true],
            vec![false, true, false],
        ];
        let (a, _) = run_auction(agents, tasks, AuctionConfig::default(), Topology::Adjacency(adj)).unwrap();
        assert!(a.converged);
        assert!(a.is_conflict_free());
        assert_eq!(a.paths.iter().map(|p| p.len()).sum::<usize>(), 6);
    }

    #[test]
    fn disconnected_topology_is_rejected() {
        let adj = vec![vec![false, false], vec![false, false]];
        let r = Auction::new(
            AuctionConfig::default(),
            vec![agent(0.0, 0.0), agent(1.0, 0.0)],
            vec![],
            Topology::Adjacency(adj),
        );
        assert!(r.is_err());
    }

    #[test]
    fn trace_has_one_record_per_agent_round() {
        let tasks = vec![task(0, 1.0, 0.0, 1.0), task(1, 2.0, 0.0, 1.0)];
        let config = AuctionConfig {
            trace: true,
            ..AuctionConfig::default()
        };
        let mut auction = Auction::new(config, vec![agent(0.0, 0.0), agent(3.0, 0.0)], tasks, Topology::Full).unwrap();
        auction.run();
        assert_eq!(auction.trace().len(), auction.round * 2);
    }
}
