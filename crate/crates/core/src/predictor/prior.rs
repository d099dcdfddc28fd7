//! Posterior sampling over the procedural town prior.
//!
//! Each sample fills the masked cells in four passes:
//!
//! 1. Unknown pockets walled in by observed Occupied cells become Occupied
//!    (lidar only sees building walls, never interiors).
//! 2. A street hypothesis is fitted to the observed buildings, or drawn
//!    from the prior when too little has been seen.
//! 3. Every observed building fragment that borders unknown space is
//!    completed with a footprint drawn from the shape prior that contains
//!    the fragment and barely touches observed Free space.
//! 4. Buildings are hallucinated along the street in fully unknown space
//!    until the sampled building count is reached.

use std::collections::VecDeque;
use std::f64::consts::FRAC_PI_2;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{PredictedMap, PredictionRequest, Predictor};
use crate::geom::{convex_hull, Point};
use crate::grid::{CellState, GridGeometry, OccupancyGrid};
use crate::seed::{self, Rng};
use crate::worldgen::{
    dilate_into, footprint_cells, footprint_polygon, polygon_cells, uniform, Pose, Street, TownParams,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorParams {
    /// Prior over towns. The geometry is replaced by the predictor's.
    pub town: TownParams,
    /// Observed Occupied cells needed to fit the street instead of sampling it.
    pub min_fit_cells: usize,
    pub min_fit_components: usize,
    pub street_tries: u32,
    pub completion_tries: u32,
    /// A completion may cover up to `max(free_conflict_min,
    /// free_conflict_frac * footprint)` observed Free cells.
    pub free_conflict_frac: f64,
    pub free_conflict_min: usize,
    pub hallucination_tries: u32,
    /// Fragments smaller than this do not count toward the building total.
    pub min_component_cells: usize,
}

impl Default for PriorParams {
    fn default() -> Self {
        Self {
            town: TownParams::default(),
            min_fit_cells: 40,
            min_fit_components: 2,
            street_tries: 20,
            completion_tries: 100,
            free_conflict_frac: 0.03,
            free_conflict_min: 2,
            hallucination_tries: 50,
            min_component_cells: 4,
        }
    }
}

/// Connected components of cells satisfying `member`, in scan order.
pub(crate) fn components(g: &GridGeometry, member: impl Fn(usize) -> bool, eight: bool) -> Vec<Vec<usize>> {
    let mut seen = vec![false; g.len()];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..g.len() {
        if seen[start] || !member(start) {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut comp = Vec::new();
        while let Some(i) = queue.pop_front() {
            comp.push(i);
            let (x, y) = g.coords(i);
            let mut visit = |nx: usize, ny: usize| {
                let j = g.index(nx, ny);
                if !seen[j] && member(j) {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if eight {
                g.neighbors8(x, y).for_each(|(nx, ny)| visit(nx, ny));
            } else {
                g.neighbors4(x, y).for_each(|(nx, ny)| visit(nx, ny));
            }
        }
        out.push(comp);
    }
    out
}

fn center_of(g: &GridGeometry, i: usize) -> Point {
    let (x, y) = g.coords(i);
    g.cell_center(x, y)
}

/// Unknown pockets that touch neither the map edge nor any known Free cell.
fn enclosed_pockets(observed: &OccupancyGrid) -> Vec<usize> {
    let g = *observed.geometry();
    let cells = observed.cells();
    let mut out = Vec::new();
    for comp in components(&g, |i| cells[i] == CellState::Unknown, false) {
        let sealed = comp.iter().all(|&i| {
            let (x, y) = g.coords(i);
            let on_edge = x == 0 || y == 0 || x + 1 == g.width || y + 1 == g.height;
            !on_edge
                && g.neighbors4(x, y)
                    .all(|(nx, ny)| observed.get(nx, ny) != CellState::Free)
        });
        if sealed {
            out.extend(comp);
        }
    }
    out
}

/// Solves the 3x3 system `m * x = b` by Gaussian elimination.
fn solve3(mut m: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[pivot][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| m[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / m[row][row];
    }
    Some(x)
}

/// Signed offsets of `points` from the street centerline, measured along the
/// street normal in the street's own frame.
fn street_offsets(street: &Street, points: &[Point]) -> Vec<f64> {
    let t = Point::from_angle(street.heading);
    let n = t.perp();
    let [a, b, c] = street.coeffs;
    points
        .iter()
        .map(|&p| {
            let d = p - street.origin;
            let u = d.dot(t);
            d.dot(n) - (a + b * u + c * u * u)
        })
        .collect()
}

/// Least-squares quadratic through `points` along their principal axis,
/// then shifted sideways to the offset overlapping the fewest points.
pub fn fit_street(points: &[Point], town: &TownParams) -> Option<Street> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let mean = points.iter().fold(Point::default(), |acc, &p| acc + p) * (1.0 / n);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &p in points {
        let d = p - mean;
        sxx += d.x * d.x;
        syy += d.y * d.y;
        sxy += d.x * d.y;
    }
    let heading = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let t = Point::from_angle(heading);
    let nrm = t.perp();
    let uv: Vec<(f64, f64)> = points
        .iter()
        .map(|&p| ((p - mean).dot(t), (p - mean).dot(nrm)))
        .collect();

    let mut m = [[0.0; 3]; 3];
    let mut rhs = [0.0; 3];
    for &(u, v) in &uv {
        let pows = [1.0, u, u * u];
        for r in 0..3 {
            for k in 0..3 {
                m[r][k] += pows[r] * pows[k];
            }
            rhs[r] += pows[r] * v;
        }
    }
    let (k0, k1) = town.street_curvature_range;
    let [mut a, mut b, c] = solve3(m, rhs).unwrap_or([0.0, 0.0, 0.0]);
    let c_clamped = c.clamp(k0 / 2.0, k1 / 2.0);
    if c_clamped != c {
        // Refit the linear part with the curvature held fixed.
        let (mut su, mut suu, mut sr, mut sur) = (0.0, 0.0, 0.0, 0.0);
        for &(u, v) in &uv {
            let r = v - c_clamped * u * u;
            su += u;
            suu += u * u;
            sr += r;
            sur += u * r;
        }
        let det = n * suu - su * su;
        if det.abs() > 1e-12 {
            b = (n * sur - su * sr) / det;
            a = (sr - b * su) / n;
        }
    }
    let (w, h) = town.geometry.extent();
    let mut street = Street {
        origin: mean,
        heading,
        coeffs: [a, b, c_clamped],
        half_length: w.hypot(h),
        width: town.street_width,
    };
    let offsets = street_offsets(&street, points);
    let half = town.street_width / 2.0 + town.min_setback;
    let mut best = (usize::MAX, 0.0f64);
    for k in -60..=60 {
        let delta = k as f64 * 0.5;
        let hits = offsets.iter().filter(|&&r| (r - delta).abs() < half).count();
        if hits < best.0 || (hits == best.0 && delta.abs() < best.1.abs()) {
            best = (hits, delta);
        }
    }
    street.coeffs[0] += best.1;
    Some(street)
}

/// Orientation of the minimum-area bounding box of `points`, in [0, pi/2).
fn min_area_heading(points: &[Point], res: f64) -> f64 {
    let mut best = (f64::INFINITY, 0.0);
    for deg in 0..90 {
        let theta = (deg as f64).to_radians();
        let (t, n) = (Point::from_angle(theta), Point::from_angle(theta).perp());
        let (mut u0, mut u1, mut v0, mut v1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &p in points {
            let (u, v) = (p.dot(t), p.dot(n));
            u0 = u0.min(u);
            u1 = u1.max(u);
            v0 = v0.min(v);
            v1 = v1.max(v);
        }
        let area = (u1 - u0 + res) * (v1 - v0 + res);
        if area < best.0 - 1e-9 {
            best = (area, theta);
        }
    }
    best.1
}

/// Sampler drawing completions from the town prior.
#[derive(Debug, Clone)]
pub struct PriorSampler {
    params: PriorParams,
    geometry: GridGeometry,
}

struct Canvas<'a> {
    g: GridGeometry,
    observed: &'a OccupancyGrid,
    occupied: Vec<bool>,
}

impl Canvas<'_> {
    fn is_open(&self, i: usize) -> bool {
        self.observed.cells()[i] == CellState::Unknown && !self.occupied[i]
    }
}

impl PriorSampler {
    pub fn new(mut params: PriorParams, geometry: GridGeometry) -> Result<Self> {
        params.town.geometry = geometry;
        params.town.validate()?;
        if !(0.0..=1.0).contains(&params.free_conflict_frac) {
            return Err(Error::InvalidParameter("free_conflict_frac outside [0, 1]".into()));
        }
        Ok(Self { params, geometry })
    }

    pub fn params(&self) -> &PriorParams {
        &self.params
    }

    /// Draws one complete map consistent with `observed`.
    pub fn sample(&self, observed: &OccupancyGrid, seed: u64) -> Result<OccupancyGrid> {
        self.geometry.check_same(observed.geometry())?;
        let g = self.geometry;
        let mut rng = seed::stream(seed, 0x70_72_69);
        let mut canvas = Canvas {
            g,
            observed,
            occupied: observed.cells().iter().map(|&c| c == CellState::Occupied).collect(),
        };
        for i in enclosed_pockets(observed) {
            canvas.occupied[i] = true;
        }

        let fragments = components(&g, |i| observed.cells()[i] == CellState::Occupied, true);
        let street = self.street_hypothesis(&fragments, &mut rng);
        for frag in &fragments {
            let touches_unknown = frag.iter().any(|&i| {
                let (x, y) = g.coords(i);
                g.neighbors4(x, y).any(|(nx, ny)| canvas.is_open(g.index(nx, ny)))
            });
            if touches_unknown {
                self.complete_fragment(&mut canvas, frag, &mut rng);
            }
        }
        let seen = fragments
            .iter()
            .filter(|f| f.len() >= self.params.min_component_cells)
            .count();
        self.hallucinate(&mut canvas, &street, seen, &mut rng);

        let cells = observed
            .cells()
            .iter()
            .zip(&canvas.occupied)
            .map(|(&c, &occ)| match c {
                CellState::Unknown if occ => CellState::Occupied,
                CellState::Unknown => CellState::Free,
                known => known,
            })
            .collect();
        OccupancyGrid::from_cells(g, cells)
    }

    fn street_hypothesis(&self, fragments: &[Vec<usize>], rng: &mut Rng) -> Street {
        let g = &self.geometry;
        let town = &self.params.town;
        let points: Vec<Point> = fragments.iter().flatten().map(|&i| center_of(g, i)).collect();
        if points.len() >= self.params.min_fit_cells && fragments.len() >= self.params.min_fit_components {
            if let Some(s) = fit_street(&points, town) {
                return s;
            }
        }
        let mut street = town.sample_street(rng);
        for _ in 1..self.params.street_tries.max(1) {
            let clear = street_offsets(&street, &points)
                .iter()
                .all(|r| r.abs() >= town.street_width / 2.0);
            if clear {
                break;
            }
            street = town.sample_street(rng);
        }
        street
    }

    fn complete_fragment(&self, canvas: &mut Canvas, frag: &[usize], rng: &mut Rng) {
        let g = canvas.g;
        let res = g.resolution;
        let town = &self.params.town;
        let points: Vec<Point> = frag.iter().map(|&i| center_of(&g, i)).collect();
        let theta = min_area_heading(&points, res);
        let (t, n) = (Point::from_angle(theta), Point::from_angle(theta).perp());
        let (mut u0, mut u1, mut v0, mut v1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &p in &points {
            u0 = u0.min(p.dot(t));
            u1 = u1.max(p.dot(t));
            v0 = v0.min(p.dot(n));
            v1 = v1.max(p.dot(n));
        }
        let (lo_u, hi_u) = (u0 - res / 2.0, u1 + res / 2.0);
        let (lo_v, hi_v) = (v0 - res / 2.0, v1 + res / 2.0);
        let types: Vec<_> = town.building_types.iter().copied().collect();
        let mut member = vec![false; g.len()];
        for &i in frag {
            member[i] = true;
        }

        for _ in 0..self.params.completion_tries {
            let kind = types[rng.random_range(0..types.len())];
            let mut shape = town.sample_shape(rng);
            let quarter = rng.random_range(0..4u8);
            let (span_u, span_v) = (hi_u - lo_u, hi_v - lo_v);
            // Building-frame width lies along t for even quarter turns.
            if quarter % 2 == 0 {
                shape.width = shape.width.max(span_u);
                shape.depth = shape.depth.max(span_v);
            } else {
                shape.width = shape.width.max(span_v);
                shape.depth = shape.depth.max(span_u);
            }
            let (along_u, along_v) = if quarter % 2 == 0 {
                (shape.width, shape.depth)
            } else {
                (shape.depth, shape.width)
            };
            let cu = uniform(rng, hi_u - along_u / 2.0, lo_u + along_u / 2.0);
            let cv = uniform(rng, hi_v - along_v / 2.0, lo_v + along_v / 2.0);
            let pose = Pose {
                center: t * cu + n * cv,
                heading: theta + quarter as f64 * FRAC_PI_2,
            };
            let cells = polygon_cells(&footprint_polygon(kind, pose, shape), &g);
            let covered = cells.iter().filter(|&&(x, y)| member[g.index(x, y)]).count();
            if covered != frag.len() {
                continue;
            }
            let free_hits = cells
                .iter()
                .filter(|&&(x, y)| canvas.observed.get(x, y) == CellState::Free)
                .count();
            let allowed =
                (self.params.free_conflict_frac * cells.len() as f64).max(self.params.free_conflict_min as f64);
            if free_hits as f64 > allowed {
                continue;
            }
            for (x, y) in cells {
                canvas.occupied[g.index(x, y)] = true;
            }
            return;
        }

        let corners: Vec<Point> = points
            .iter()
            .flat_map(|&p| {
                let h = res / 2.0;
                [
                    p + Point::new(-h, -h),
                    p + Point::new(h, -h),
                    p + Point::new(h, h),
                    p + Point::new(-h, h),
                ]
            })
            .collect();
        for (x, y) in polygon_cells(&convex_hull(&corners), &g) {
            let i = g.index(x, y);
            if canvas.observed.cells()[i] == CellState::Unknown {
                canvas.occupied[i] = true;
            }
        }
    }

    fn hallucinate(&self, canvas: &mut Canvas, street: &Street, seen: usize, rng: &mut Rng) {
        let g = canvas.g;
        let town = &self.params.town;
        let (lo, hi) = town.building_count_range;
        let target = rng.random_range(lo..=hi) as usize;
        let inside = street.params_inside(&g, 1.0);
        if target <= seen || inside.is_empty() {
            return;
        }
        let gap = (town.min_building_gap / g.resolution).ceil() as usize;
        let mut reserved = vec![false; g.len()];
        let occupied: Vec<(usize, usize)> = (0..g.len())
            .filter(|&i| canvas.occupied[i])
            .map(|i| g.coords(i))
            .collect();
        dilate_into(&mut reserved, &g, &occupied, gap);

        for _ in seen..target {
            for _ in 0..self.params.hallucination_tries {
                let u = inside[rng.random_range(0..inside.len())];
                let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let b = town.sample_building(street, u, side, rng);
                let Ok(cells) = footprint_cells(b.kind, b.pose, b.shape, &g) else {
                    continue;
                };
                if cells.is_empty()
                    || cells
                        .iter()
                        .any(|&(x, y)| !canvas.is_open(g.index(x, y)) || reserved[g.index(x, y)])
                {
                    continue;
                }
                let centers: Vec<Point> = cells.iter().map(|&(x, y)| g.cell_center(x, y)).collect();
                if street_offsets(street, &centers)
                    .iter()
                    .any(|r| r.abs() <= street.width / 2.0)
                {
                    continue;
                }
                for &(x, y) in &cells {
                    canvas.occupied[g.index(x, y)] = true;
                }
                dilate_into(&mut reserved, &g, &cells, gap);
                break;
            }
        }
    }
}

impl Predictor for PriorSampler {
    fn name(&self) -> &str {
        "prior"
    }

    fn predict(&mut self, request: &PredictionRequest, seed: u64) -> Result<PredictedMap> {
        request.validate(&self.geometry)?;
        let observed = request.observed(&self.geometry)?;
        Ok(PredictedMap {
            id: request.id,
            predictor: self.name().to_string(),
            grid: self.sample(&observed, seed)?,
            degraded: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::accuracy;
    use crate::worldgen::{generate, BuildingType, ShapeParams};

    fn sampler() -> PriorSampler {
        PriorSampler::new(PriorParams::default(), GridGeometry::default()).unwrap()
    }

    #[test]
    fn full_observation_is_returned_verbatim() {
        let (_, truth) = generate(&TownParams::with_seed(4)).unwrap();
        assert_eq!(sampler().sample(&truth, 1).unwrap(), truth);
    }

    #[test]
    fn walled_pocket_is_filled() {
        let g = GridGeometry::new(20, 20, 0.5);
        let mut obs = OccupancyGrid::filled(g, CellState::Free);
        for k in 5..12 {
            for (x, y) in [(k, 5), (k, 11), (5, k), (11, k)] {
                obs.set(x, y, CellState::Occupied);
            }
        }
        for y in 6..11 {
            for x in 6..11 {
                obs.set(x, y, CellState::Unknown);
            }
        }
        let pockets = enclosed_pockets(&obs);
        assert_eq!(pockets.len(), 25);
    }

    #[test]
    fn fitted_street_runs_between_building_rows() {
        let town = TownParams::default();
        let mut pts = Vec::new();
        for k in 0..40 {
            let x = 20.0 + k as f64;
            pts.push(Point::new(x, 40.0));
            pts.push(Point::new(x, 60.0));
        }
        let s = fit_street(&pts, &town).unwrap();
        let mid = s.point_at(0.0);
        assert!((mid.y - 50.0).abs() < 1.0, "{mid:?}");
        for &p in &pts {
            let r = street_offsets(&s, &[p])[0];
            assert!(r.abs() >= town.street_width / 2.0);
        }
    }

    #[test]
    fn half_seen_rectangle_is_completed_consistently() {
        let g = GridGeometry::default();
        let mut params = PriorParams::default();
        params.town.building_types = [BuildingType::Rect].into_iter().collect();
        let sampler = PriorSampler::new(params, g).unwrap();
        let pose = Pose {
            center: Point::new(50.1, 50.1),
            heading: 0.0,
        };
        let mut truth = OccupancyGrid::filled(g, CellState::Free);
        let cells = polygon_cells(
            &footprint_polygon(BuildingType::Rect, pose, ShapeParams::rect(12.0, 8.0)),
            &g,
        );
        for &(x, y) in &cells {
            truth.set(x, y, CellState::Occupied);
        }
        // Observe the left half of the map.
        let mut obs = truth.clone();
        for y in 0..g.height {
            for x in 100..g.width {
                obs.set(x, y, CellState::Unknown);
            }
        }
        let row = g.cell_of(Point::new(50.1, 50.1)).unwrap().1;
        let mut extended = 0;
        for seed in 0..10 {
            let out = sampler.sample(&obs, seed).unwrap();
            for i in 0..g.len() {
                if obs.cells()[i] != CellState::Unknown {
                    assert_eq!(out.cells()[i], obs.cells()[i]);
                }
            }
            // The completed building is a solid axis-aligned block that
            // contains the observed half.
            let occ = |i: usize| out.cells()[i] == CellState::Occupied;
            let blocks = components(&g, occ, true);
            let block = blocks.iter().find(|b| b.contains(&g.index(88, row))).unwrap();
            let (mut x0, mut x1, mut y0, mut y1) = (usize::MAX, 0, usize::MAX, 0);
            for &i in block {
                let (x, y) = g.coords(i);
                (x0, x1, y0, y1) = (x0.min(x), x1.max(x), y0.min(y), y1.max(y));
            }
            assert_eq!(block.len(), (x1 - x0 + 1) * (y1 - y0 + 1));
            for &(x, y) in &cells {
                if x < 100 {
                    assert!(x >= x0 && x <= x1 && y >= y0 && y <= y1);
                }
            }
            extended += usize::from(x1 >= 100);
        }
        assert!(extended > 0);
    }

    #[test]
    fn seeds_differ_only_on_masked_cells() {
        let (_, truth) = generate(&TownParams::with_seed(8)).unwrap();
        let mut obs = truth.clone();
        for (i, c) in obs.cells_mut().iter_mut().enumerate() {
            if i % 200 >= 100 {
                *c = CellState::Unknown;
            }
        }
        let s = sampler();
        let a = s.sample(&obs, 1).unwrap();
        let b = s.sample(&obs, 2).unwrap();
        let mut masked_diff = 0;
        for i in 0..truth.len() {
            if obs.cells()[i] == CellState::Unknown {
                masked_diff += usize::from(a.cells()[i] != b.cells()[i]);
            } else {
                assert_eq!(a.cells()[i], b.cells()[i]);
            }
        }
        assert!(masked_diff > 0);
        assert_eq!(s.sample(&obs, 1).unwrap(), a);
    }

    #[test]
    fn cold_start_density_matches_worldgen() {
        let g = GridGeometry::default();
        let s = sampler();
        let empty = OccupancyGrid::unknown(g);
        let n = 60;
        let mut freq = vec![0u32; g.len()];
        let mut sampled = 0.0;
        let mut generated = 0.0;
        for k in 0..n {
            let out = s.sample(&empty, k).unwrap();
            for (f, c) in freq.iter_mut().zip(out.cells()) {
                *f += u32::from(*c == CellState::Occupied);
            }
            sampled += out.count(CellState::Occupied) as f64 / g.len() as f64;
            let (_, truth) = generate(&TownParams::with_seed(1000 + k)).unwrap();
            generated += truth.count(CellState::Occupied) as f64 / g.len() as f64;
            assert!(accuracy(&out, &truth, false).unwrap() > 0.6);
        }
        let (sampled, generated) = (sampled / n as f64, generated / n as f64);
        assert!(
            (sampled - generated).abs() < 0.25 * generated,
            "{sampled} vs {generated}"
        );
        assert!(freq.iter().all(|&f| (f as f64) < 0.5 * n as f64));
    }
}
