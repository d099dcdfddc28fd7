//! Grid raycasting for the simulated lidar.

use crate::geom::Point;
use crate::grid::{CellState, GridGeometry, OccupancyGrid};

/// Rays shorter than this inside a cell do not count as entering it.
pub const EDGE_EPS: f64 = 1e-9;

/// Walks the cells pierced by the segment `origin + t*dir`, `t in [0, range)`,
/// in order of entry, calling `visit(x, y)` until it returns `false`.
///
/// Exact grid traversal: a ray passing precisely through a cell corner
/// steps diagonally and does not visit the two corner-touching cells.
pub fn traverse(
    geometry: &GridGeometry,
    origin: Point,
    angle: f64,
    range: f64,
    mut visit: impl FnMut(usize, usize) -> bool,
) {
    let (mut cx, mut cy) = geometry.cell_of_unclamped(origin);
    if !geometry.contains_cell(cx, cy) {
        return;
    }
    let res = geometry.resolution;
    let (dy, dx) = angle.sin_cos();
    let rel = origin - geometry.origin;
    let axis = |d: f64, pos: f64, cell: i64| -> (i64, f64, f64) {
        if d > 0.0 {
            (1, ((cell + 1) as f64 * res - pos) / d, res / d)
        } else if d < 0.0 {
            (-1, (cell as f64 * res - pos) / d, -res / d)
        } else {
            (0, f64::INFINITY, f64::INFINITY)
        }
    };
    let (sx, mut tx, ddx) = axis(dx, rel.x, cx);
    let (sy, mut ty, ddy) = axis(dy, rel.y, cy);
    loop {
        if !visit(cx as usize, cy as usize) {
            return;
        }
        let t_next;
        if (tx - ty).abs() < EDGE_EPS {
            t_next = tx.min(ty);
            cx += sx;
            cy += sy;
            tx += ddx;
            ty += ddy;
        } else if tx < ty {
            t_next = tx;
            cx += sx;
            tx += ddx;
        } else {
            t_next = ty;
            cy += sy;
            ty += ddy;
        }
        if t_next >= range - EDGE_EPS || !geometry.contains_cell(cx, cy) {
            return;
        }
    }
}

/// Casts `rays` evenly spaced rays from `origin` against `truth`, marking
/// traversed cells Free and each first hit Occupied in `observed`.
///
/// Returns the number of cells that went from Unknown to known.
pub fn sense(origin: Point, rays: usize, range: f64, truth: &OccupancyGrid, observed: &mut OccupancyGrid) -> usize {
    let geometry = *truth.geometry();
    let mut newly = 0;
    for i in 0..rays {
        let angle = std::f64::consts::TAU * i as f64 / rays as f64;
        traverse(&geometry, origin, angle, range, |x, y| {
            let hit = truth.get(x, y) == CellState::Occupied;
            if observed.get(x, y) == CellState::Unknown {
                newly += 1;
                observed.set(x, y, if hit { CellState::Occupied } else { CellState::Free });
            }
            !hit
        });
    }
    newly
}

/// Unknown cells a sensor at `origin` would expect to see: rays stop at
/// Occupied cells of `map` and pass through Unknown ones.
pub fn visible_unknown(
    origin: Point,
    rays: usize,
    range: f64,
    map: &OccupancyGrid,
    scratch: &mut Vec<u32>,
    stamp: u32,
) -> usize {
    let geometry = *map.geometry();
    if scratch.len() != geometry.len() {
        scratch.clear();
        scratch.resize(geometry.len(), u32::MAX);
    }
    let mut count = 0;
    for i in 0..rays {
        let angle = std::f64::consts::TAU * i as f64 / rays as f64;
        traverse(&geometry, origin, angle, range, |x, y| {
            let idx = geometry.index(x, y);
            match map.cells()[idx] {
                CellState::Occupied => false,
                CellState::Free => true,
                CellState::Unknown => {
                    if scratch[idx] != stamp {
                        scratch[idx] = stamp;
                        count += 1;
                    }
                    true
                }
            }
        });
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_map_gives_free_disk() {
        let g = GridGeometry::new(60, 60, 0.5);
        let truth = OccupancyGrid::filled(g, CellState::Free);
        let mut obs = OccupancyGrid::unknown(g);
        let c = Point::new(15.1, 15.1);
        sense(c, 360, 10.0, &truth, &mut obs);
        assert_eq!(obs.count(CellState::Occupied), 0);
        let free = obs.count(CellState::Free) as f64 * 0.25;
        // Every pierced cell counts, so the area sits between the disk and
        // the disk grown by half a cell diagonal.
        let pi = std::f64::consts::PI;
        let outer = 10.0 + 0.25 * std::f64::consts::SQRT_2;
        assert!(free > pi * 100.0 && free < pi * outer * outer, "{free}");
        for y in 0..60 {
            for x in 0..60 {
                let d = g.cell_center(x, y).dist(c);
                if d < 9.0 {
                    assert_eq!(obs.get(x, y), CellState::Free);
                }
                if d > 10.5 {
                    assert_eq!(obs.get(x, y), CellState::Unknown);
                }
            }
        }
    }

    #[test]
    fn diagonal_through_corner_steps_diagonally() {
        let g = GridGeometry::new(4, 4, 1.0);
        let mut cells = Vec::new();
        traverse(&g, Point::new(0.5, 0.5), std::f64::consts::FRAC_PI_4, 3.0, |x, y| {
            cells.push((x, y));
            true
        });
        assert_eq!(cells, vec![(0, 0), (1, 1), (2, 2)]);
    }
}
