//! 8-connected A* over the observed map.
//!
//! Unknown cells are traversable, Occupied cells are blocked and inflated
//! by a margin. The start and goal cells are exempt from inflation; if the
//! inflated map has no route the search falls back to raw occupancy.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geom::Point;
use crate::grid::{CellState, GridGeometry, OccupancyGrid};
use crate::{Error, Result};

const SQRT2: f64 = std::f64::consts::SQRT_2;

#[derive(Clone, Copy, PartialEq)]
struct Node {
    f: f64,
    index: usize,
}

impl Eq for Node {}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        other.f.total_cmp(&self.f).then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Cells within Chebyshev distance `margin` of an Occupied cell.
pub fn blocked_mask(map: &OccupancyGrid, margin: usize) -> Vec<bool> {
    let g = *map.geometry();
    let mut mask = vec![false; g.len()];
    let m = margin as i64;
    for (i, &c) in map.cells().iter().enumerate() {
        if c != CellState::Occupied {
            continue;
        }
        let (x, y) = g.coords(i);
        for dy in -m..=m {
            for dx in -m..=m {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if g.contains_cell(nx, ny) {
                    mask[g.index(nx as usize, ny as usize)] = true;
                }
            }
        }
    }
    mask
}

fn octile(g: &GridGeometry, a: usize, b: usize) -> f64 {
    let (ax, ay) = g.coords(a);
    let (bx, by) = g.coords(b);
    let dx = ax.abs_diff(bx) as f64;
    let dy = ay.abs_diff(by) as f64;
    dx.max(dy) + (SQRT2 - 1.0) * dx.min(dy)
}

fn for_each_move(g: &GridGeometry, index: usize, passable: impl Fn(usize) -> bool, mut f: impl FnMut(usize, f64)) {
    let (x, y) = g.coords(index);
    for dy in -1i64..=1 {
        for dx in -1i64..=1 {
            if dx == 0 && dy == 0 {
                continue;
            }
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if !g.contains_cell(nx, ny) {
                continue;
            }
            let next = g.index(nx as usize, ny as usize);
            if !passable(next) {
                continue;
            }
            if dx != 0 && dy != 0 {
                if !passable(g.index(nx as usize, y)) || !passable(g.index(x, ny as usize)) {
                    continue;
                }
                f(next, SQRT2);
            } else {
                f(next, 1.0);
            }
        }
    }
}

/// Shortest 8-connected cell path from `start` to `goal` avoiding `blocked`.
///
/// Diagonal moves may not cut past a blocked orthogonal neighbour. Returns
/// cell indices including both endpoints, plus the path cost in cells.
pub fn astar(g: &GridGeometry, blocked: &[bool], start: usize, goal: usize) -> Option<(Vec<usize>, f64)> {
    let n = g.len();
    let passable = |i: usize| i == start || i == goal || !blocked[i];
    let mut dist = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    dist[start] = 0.0;
    open.push(Node {
        f: octile(g, start, goal),
        index: start,
    });
    while let Some(Node { index, .. }) = open.pop() {
        if closed[index] {
            continue;
        }
        if index == goal {
            let mut path = vec![goal];
            let mut cur = goal;
            while cur != start {
                cur = parent[cur];
                path.push(cur);
            }
            path.reverse();
            return Some((path, dist[goal]));
        }
        closed[index] = true;
        for_each_move(g, index, passable, |next, step| {
            let nd = dist[index] + step;
            if !closed[next] && nd < dist[next] {
                dist[next] = nd;
                parent[next] = index;
                open.push(Node {
                    f: nd + octile(g, next, goal),
                    index: next,
                });
            }
        });
    }
    None
}

/// Single-source path costs (in cells) to every cell; unreachable cells are infinite.
pub fn distance_field(g: &GridGeometry, blocked: &[bool], source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; g.len()];
    let mut open = BinaryHeap::new();
    dist[source] = 0.0;
    open.push(Node { f: 0.0, index: source });
    let passable = |i: usize| i == source || !blocked[i];
    while let Some(Node { f, index }) = open.pop() {
        if f > dist[index] {
            continue;
        }
        for_each_move(g, index, passable, |next, step| {
            let nd = f + step;
            if nd < dist[next] {
                dist[next] = nd;
                open.push(Node { f: nd, index: next });
            }
        });
    }
    dist
}

/// Plans waypoints (cell centers, excluding the start cell) from `start` to `goal`.
pub fn plan_path(start: Point, goal: Point, observed: &OccupancyGrid, inflation: usize) -> Result<Vec<Point>> {
    let inflated = blocked_mask(observed, inflation);
    plan_path_with(start, goal, observed, &inflated)
}

/// [`plan_path`] with a precomputed inflated mask.
pub fn plan_path_with(start: Point, goal: Point, observed: &OccupancyGrid, inflated: &[bool]) -> Result<Vec<Point>> {
    let g = *observed.geometry();
    let (Some(s), Some(t)) = (g.cell_of(start), g.cell_of(goal)) else {
        return Err(Error::Unreachable);
    };
    if observed.get(t.0, t.1) == CellState::Occupied {
        return Err(Error::Unreachable);
    }
    let (si, ti) = (g.index(s.0, s.1), g.index(t.0, t.1));
    let found = astar(&g, inflated, si, ti).or_else(|| {
        let raw: Vec<bool> = observed.cells().iter().map(|&c| c == CellState::Occupied).collect();
        astar(&g, &raw, si, ti)
    });
    let (cells, _) = found.ok_or(Error::Unreachable)?;
    Ok(cells
        .into_iter()
        .skip(1)
        .map(|i| {
            let (x, y) = g.coords(i);
            g.cell_center(x, y)
        })
        .collect())
}

/// Length in meters of the path from `start` through `waypoints`.
pub fn path_length(start: Point, waypoints: &[Point]) -> f64 {
    let mut prev = start;
    let mut total = 0.0;
    for &w in waypoints {
        total += prev.dist(w);
        prev = w;
    }
    total
}
