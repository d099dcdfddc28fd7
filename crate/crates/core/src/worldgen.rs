//! Procedural town generator: one curved main street with buildings along
//! both sides.
//!
//! The street is a quadratic arc `v = a + b*u + c*u^2` in a frame anchored
//! near the map center. Buildings are rectangles, L-shapes (rectangle minus
//! a corner notch) or C-shapes (rectangle minus a notch centered on one
//! side), oriented along the local street tangent. Footprints are filled
//! solid.

use std::collections::BTreeSet;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::geom::{point_polyline_distance, Point};
use crate::grid::{CellState, GridGeometry, OccupancyGrid};
use crate::seed::{self, Rng};
use crate::{Error, Result};

/// Smallest building side after clamping, in meters.
pub const MIN_BUILDING_DIM: f64 = 2.0;
const MIN_NOTCH_FRAC: f64 = 0.1;
const MAX_NOTCH_FRAC: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuildingType {
    Rect,
    LShape,
    CShape,
}

/// Shape parameters in the building's local frame.
///
/// `width` runs along the local x axis (parallel to the street), `depth`
/// along local y. `notch_side` selects the notched corner (L) or side (C),
/// in `0..4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams {
    pub width: f64,
    pub depth: f64,
    pub notch_width_frac: f64,
    pub notch_depth_frac: f64,
    pub notch_side: u8,
}

impl ShapeParams {
    pub fn rect(width: f64, depth: f64) -> Self {
        Self {
            width,
            depth,
            notch_width_frac: 0.5,
            notch_depth_frac: 0.5,
            notch_side: 0,
        }
    }

    pub fn clamped(self) -> Self {
        let dim = |v: f64| {
            if v.is_finite() {
                v.max(MIN_BUILDING_DIM)
            } else {
                MIN_BUILDING_DIM
            }
        };
        let frac = |v: f64| {
            if v.is_finite() {
                v.clamp(MIN_NOTCH_FRAC, MAX_NOTCH_FRAC)
            } else {
                0.5
            }
        };
        Self {
            width: dim(self.width),
            depth: dim(self.depth),
            notch_width_frac: frac(self.notch_width_frac),
            notch_depth_frac: frac(self.notch_depth_frac),
            notch_side: self.notch_side % 4,
        }
    }
}

/// Footprint placement: center in world meters, heading of the local x axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub center: Point,
    pub heading: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub kind: BuildingType,
    pub pose: Pose,
    pub shape: ShapeParams,
}

impl Building {
    pub fn polygon(&self) -> Vec<Point> {
        footprint_polygon(self.kind, self.pose, self.shape)
    }
}

/// Quadratic street centerline `origin + u*t + (a + b*u + c*u^2) * n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Street {
    pub origin: Point,
    pub heading: f64,
    pub coeffs: [f64; 3],
    /// Parameter range `[-half_length, half_length]`.
    pub half_length: f64,
    pub width: f64,
}

impl Street {
    fn axes(&self) -> (Point, Point) {
        let t = Point::from_angle(self.heading);
        (t, t.perp())
    }

    pub fn point_at(&self, u: f64) -> Point {
        let (t, n) = self.axes();
        let [a, b, c] = self.coeffs;
        self.origin + t * u + n * (a + b * u + c * u * u)
    }

    /// Unit tangent at parameter `u`.
    pub fn tangent_at(&self, u: f64) -> Point {
        let (t, n) = self.axes();
        let [_, b, c] = self.coeffs;
        (t + n * (b + 2.0 * c * u)).normalized()
    }

    /// Centerline sampled every `step` meters of parameter.
    pub fn polyline(&self, step: f64) -> Vec<Point> {
        let n = (2.0 * self.half_length / step).ceil().max(1.0) as usize;
        (0..=n)
            .map(|i| self.point_at(-self.half_length + 2.0 * self.half_length * i as f64 / n as f64))
            .collect()
    }

    /// Parameter values (at `step` spacing) whose centerline point lies in the map.
    pub fn params_inside(&self, geometry: &GridGeometry, step: f64) -> Vec<f64> {
        let n = (2.0 * self.half_length / step).ceil().max(1.0) as usize;
        (0..=n)
            .map(|i| -self.half_length + 2.0 * self.half_length * i as f64 / n as f64)
            .filter(|&u| geometry.contains_point(self.point_at(u)))
            .collect()
    }
}

/// Generator parameters. Lengths in meters, angles in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TownParams {
    pub seed: u64,
    pub geometry: GridGeometry,
    /// Street curvature range in 1/m.
    pub street_curvature_range: (f64, f64),
    pub street_width: f64,
    /// Maximum distance of the street anchor from the map center.
    pub street_offset: f64,
    pub building_count_range: (u32, u32),
    pub building_types: BTreeSet<BuildingType>,
    /// (width range, depth range).
    pub building_dims_range: ((f64, f64), (f64, f64)),
    pub notch_frac_range: (f64, f64),
    /// Minimum distance from the street edge to a footprint.
    pub min_setback: f64,
    /// Extra random setback added on top of `min_setback`.
    pub spacing_jitter: f64,
    pub angle_jitter: f64,
    /// Minimum clearance between two footprints.
    pub min_building_gap: f64,
    pub placement_retries: u32,
}

impl Default for TownParams {
    fn default() -> Self {
        Self {
            seed: 0,
            geometry: GridGeometry::default(),
            street_curvature_range: (-0.012, 0.012),
            street_width: 8.0,
            street_offset: 10.0,
            building_count_range: (3, 9),
            building_types: [BuildingType::Rect, BuildingType::LShape, BuildingType::CShape]
                .into_iter()
                .collect(),
            building_dims_range: ((6.0, 20.0), (6.0, 20.0)),
            notch_frac_range: (0.3, 0.6),
            min_setback: 1.0,
            spacing_jitter: 3.0,
            angle_jitter: 0.15,
            min_building_gap: 2.0,
            placement_retries: 50,
        }
    }
}

impl TownParams {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        let ordered = |r: (f64, f64)| r.0 <= r.1 && r.0.is_finite() && r.1.is_finite();
        if !ordered(self.street_curvature_range) {
            return bad("street_curvature_range must satisfy min <= max");
        }
        if self.building_count_range.0 > self.building_count_range.1 {
            return bad("building_count_range must satisfy min <= max");
        }
        let (wr, dr) = self.building_dims_range;
        if !ordered(wr) || !ordered(dr) || wr.0 <= 0.0 || dr.0 <= 0.0 {
            return bad("building_dims_range must be positive with min <= max");
        }
        if !ordered(self.notch_frac_range) {
            return bad("notch_frac_range must satisfy min <= max");
        }
        if self.building_types.is_empty() && self.building_count_range.1 > 0 {
            return bad("building_types is empty");
        }
        let (w, h) = self.geometry.extent();
        if !(self.street_width > 0.0 && self.street_width < w.min(h)) {
            return bad("street_width must be positive and smaller than the map");
        }
        if self.geometry.resolution <= 0.0 || self.geometry.is_empty() {
            return bad("map geometry must be non-empty with positive resolution");
        }
        if self.spacing_jitter < 0.0 || self.angle_jitter < 0.0 || self.min_setback < 0.0 {
            return bad("jitters and setback must be non-negative");
        }
        Ok(())
    }

    /// Samples a street from the prior.
    pub fn sample_street(&self, rng: &mut Rng) -> Street {
        let (w, h) = self.geometry.extent();
        let center = self.geometry.origin + Point::new(w / 2.0, h / 2.0);
        let r = self.street_offset * rng.random::<f64>().sqrt();
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        let heading = rng.random_range(0.0..std::f64::consts::TAU);
        let (k0, k1) = self.street_curvature_range;
        let curvature = if k0 < k1 { rng.random_range(k0..=k1) } else { k0 };
        Street {
            origin: center + Point::from_angle(phi) * r,
            heading,
            coeffs: [0.0, 0.0, curvature / 2.0],
            half_length: w.hypot(h),
            width: self.street_width,
        }
    }

    /// Samples one building at street parameter `u` on `side` (+1 or -1).
    pub fn sample_building(&self, street: &Street, u: f64, side: f64, rng: &mut Rng) -> Building {
        let types: Vec<BuildingType> = self.building_types.iter().copied().collect();
        let kind = types[rng.random_range(0..types.len())];
        let shape = self.sample_shape(rng);
        let tangent = street.tangent_at(u);
        let normal = tangent.perp() * side;
        let setback = self.min_setback + uniform(rng, 0.0, self.spacing_jitter);
        let center = street.point_at(u) + normal * (street.width / 2.0 + setback + shape.depth / 2.0);
        let heading = tangent.y.atan2(tangent.x) + uniform(rng, -self.angle_jitter, self.angle_jitter);
        Building {
            kind,
            pose: Pose { center, heading },
            shape,
        }
    }

    pub fn sample_shape(&self, rng: &mut Rng) -> ShapeParams {
        let ((w0, w1), (d0, d1)) = self.building_dims_range;
        let (f0, f1) = self.notch_frac_range;
        ShapeParams {
            width: uniform(rng, w0, w1),
            depth: uniform(rng, d0, d1),
            notch_width_frac: uniform(rng, f0, f1),
            notch_depth_frac: uniform(rng, f0, f1),
            notch_side: rng.random_range(0..4u8),
        }
        .clamped()
    }
}

pub(crate) fn uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TownLayout {
    pub street: Street,
    /// Centerline clipped to the map, 1 m spacing.
    pub street_centerline: Vec<Point>,
    pub buildings: Vec<Building>,
}

/// Footprint polygon in world coordinates.
pub fn footprint_polygon(kind: BuildingType, pose: Pose, shape: ShapeParams) -> Vec<Point> {
    let s = shape.clamped();
    let (hw, hd) = (s.width / 2.0, s.depth / 2.0);
    let local: Vec<(f64, f64)> = match kind {
        BuildingType::Rect => vec![(-hw, -hd), (hw, -hd), (hw, hd), (-hw, hd)],
        BuildingType::LShape => {
            let (nw, nd) = (s.notch_width_frac * s.width, s.notch_depth_frac * s.depth);
            let sx = if s.notch_side & 1 == 0 { 1.0 } else { -1.0 };
            let sy = if s.notch_side & 2 == 0 { 1.0 } else { -1.0 };
            [
                (-hw, -hd),
                (hw, -hd),
                (hw, hd - nd),
                (hw - nw, hd - nd),
                (hw - nw, hd),
                (-hw, hd),
            ]
            .iter()
            .map(|&(x, y)| (x * sx, y * sy))
            .collect()
        }
        BuildingType::CShape => {
            let sign = if s.notch_side & 1 == 0 { 1.0 } else { -1.0 };
            if s.notch_side < 2 {
                // Notch on the +/-y side, centered along x.
                let (nw, nd) = (s.notch_width_frac * s.width / 2.0, s.notch_depth_frac * s.depth);
                [
                    (-hw, -hd),
                    (hw, -hd),
                    (hw, hd),
                    (nw, hd),
                    (nw, hd - nd),
                    (-nw, hd - nd),
                    (-nw, hd),
                    (-hw, hd),
                ]
                .iter()
                .map(|&(x, y)| (x, y * sign))
                .collect()
            } else {
                // Notch on the +/-x side, centered along y.
                let (nw, nd) = (s.notch_width_frac * s.depth / 2.0, s.notch_depth_frac * s.width);
                [
                    (-hw, -hd),
                    (hw, -hd),
                    (hw, -nw),
                    (hw - nd, -nw),
                    (hw - nd, nw),
                    (hw, nw),
                    (hw, hd),
                    (-hw, hd),
                ]
                .iter()
                .map(|&(x, y)| (x * sign, y))
                .collect()
            }
        }
    };
    local
        .into_iter()
        .map(|(x, y)| pose.center + Point::new(x, y).rotate(pose.heading))
        .collect()
}

/// Cells whose centers fall inside `poly`, by scanline fill.
///
/// Uses the half-open crossing rule, so results agree with an even-odd
/// point-in-polygon test on every cell center. Cells outside the grid are
/// skipped.
pub fn polygon_cells(poly: &[Point], geometry: &GridGeometry) -> Vec<(usize, usize)> {
    if poly.len() < 3 {
        return Vec::new();
    }
    let res = geometry.resolution;
    let o = geometry.origin;
    let (ymin, ymax) = poly.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p.y), hi.max(p.y))
    });
    let row_lo = (((ymin - o.y) / res - 0.5).floor() as i64).max(0);
    let row_hi = (((ymax - o.y) / res - 0.5).ceil() as i64).min(geometry.height as i64 - 1);
    let mut out = Vec::new();
    let mut xs: Vec<f64> = Vec::with_capacity(poly.len());
    for row in row_lo..=row_hi {
        let yc = o.y + (row as f64 + 0.5) * res;
        xs.clear();
        let n = poly.len();
        let mut j = n - 1;
        for i in 0..n {
            let (a, b) = (poly[i], poly[j]);
            if (a.y > yc) != (b.y > yc) {
                xs.push(a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y));
            }
            j = i;
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            let (x0, x1) = (pair[0], pair[1]);
            let c_lo = (((x0 - o.x) / res - 0.5).floor() as i64).max(0);
            let c_hi = (((x1 - o.x) / res - 0.5).ceil() as i64).min(geometry.width as i64 - 1);
            for col in c_lo..=c_hi {
                let xc = o.x + (col as f64 + 0.5) * res;
                if xc >= x0 && xc < x1 {
                    out.push((col as usize, row as usize));
                }
            }
        }
    }
    out
}

fn polygon_in_bounds(poly: &[Point], geometry: &GridGeometry) -> bool {
    let (w, h) = geometry.extent();
    let o = geometry.origin;
    poly.iter()
        .all(|p| p.x >= o.x && p.y >= o.y && p.x <= o.x + w && p.y <= o.y + h)
}

/// Footprint cells, or `OutOfBounds` if any vertex leaves the map.
pub fn footprint_cells(
    kind: BuildingType,
    pose: Pose,
    shape: ShapeParams,
    geometry: &GridGeometry,
) -> Result<Vec<(usize, usize)>> {
    let poly = footprint_polygon(kind, pose, shape);
    if !polygon_in_bounds(&poly, geometry) {
        return Err(Error::OutOfBounds);
    }
    Ok(polygon_cells(&poly, geometry))
}

/// Marks a building footprint Occupied. Returns the number of cells covered.
pub fn raster_building(kind: BuildingType, pose: Pose, shape: ShapeParams, grid: &mut OccupancyGrid) -> Result<usize> {
    let cells = footprint_cells(kind, pose, shape, grid.geometry())?;
    for &(x, y) in &cells {
        grid.set(x, y, CellState::Occupied);
    }
    Ok(cells.len())
}

/// Marks every cell within Chebyshev distance `radius` of `cells` in `mask`.
pub(crate) fn dilate_into(mask: &mut [bool], geometry: &GridGeometry, cells: &[(usize, usize)], radius: usize) {
    let r = radius as i64;
    for &(x, y) in cells {
        for dy in -r..=r {
            for dx in -r..=r {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if geometry.contains_cell(nx, ny) {
                    mask[geometry.index(nx as usize, ny as usize)] = true;
                }
            }
        }
    }
}

/// Whether any cell center of `cells` lies within `clearance` of the street centerline.
pub(crate) fn touches_corridor(
    cells: &[(usize, usize)],
    geometry: &GridGeometry,
    centerline: &[Point],
    clearance: f64,
) -> bool {
    cells
        .iter()
        .any(|&(x, y)| point_polyline_distance(geometry.cell_center(x, y), centerline) <= clearance)
}

/// Generates a town layout and its rasterized ground-truth grid.
///
/// Pure in `params`. Buildings that cannot be placed within the retry
/// budget are dropped.
pub fn generate(params: &TownParams) -> Result<(TownLayout, OccupancyGrid)> {
    params.validate()?;
    let geometry = params.geometry;
    let mut rng = seed::stream(params.seed, 0x70_77_6E);
    let street = params.sample_street(&mut rng);
    let centerline: Vec<Point> = street
        .polyline(1.0)
        .into_iter()
        .filter(|&p| {
            let (w, h) = geometry.extent();
            let margin = street.width;
            let q = p - geometry.origin;
            q.x >= -margin && q.y >= -margin && q.x <= w + margin && q.y <= h + margin
        })
        .collect();
    let inside = street.params_inside(&geometry, 1.0);
    let (lo, hi) = params.building_count_range;
    let target = rng.random_range(lo..=hi);

    let mut grid = OccupancyGrid::filled(geometry, CellState::Free);
    let mut reserved = vec![false; geometry.len()];
    let gap_cells = (params.min_building_gap / geometry.resolution).ceil() as usize;
    let mut buildings = Vec::new();

    for _ in 0..target {
        if inside.is_empty() {
            break;
        }
        for _ in 0..params.placement_retries.max(1) {
            let u = inside[rng.random_range(0..inside.len())];
            let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let b = params.sample_building(&street, u, side, &mut rng);
            let Ok(cells) = footprint_cells(b.kind, b.pose, b.shape, &geometry) else {
                continue;
            };
            if cells.is_empty() || cells.iter().any(|&(x, y)| reserved[geometry.index(x, y)]) {
                continue;
            }
            if touches_corridor(&cells, &geometry, &centerline, street.width / 2.0) {
                continue;
            }
            for &(x, y) in &cells {
                grid.set(x, y, CellState::Occupied);
            }
            dilate_into(&mut reserved, &geometry, &cells, gap_cells);
            buildings.push(b);
            break;
        }
    }

    let street_centerline = centerline.into_iter().filter(|&p| geometry.contains_point(p)).collect();
    Ok((
        TownLayout {
            street,
            street_centerline,
            buildings,
        },
        grid,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geo() -> GridGeometry {
        GridGeometry::default()
    }

    /// Brute-force even-odd test written independently of the scanline path.
    fn brute_inside(p: Point, poly: &[Point]) -> bool {
        let mut crossings = 0;
        for k in 0..poly.len() {
            let a = poly[k];
            let b = poly[(k + poly.len() - 1) % poly.len()];
            let straddles = (a.y > p.y && b.y <= p.y) || (b.y > p.y && a.y <= p.y);
            if straddles && p.x < a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y) {
                crossings += 1;
            }
        }
        crossings % 2 == 1
    }

    fn brute_cells(poly: &[Point], g: &GridGeometry) -> BTreeSet<(usize, usize)> {
        let mut out = BTreeSet::new();
        for y in 0..g.height {
            for x in 0..g.width {
                if brute_inside(g.cell_center(x, y), poly) {
                    out.insert((x, y));
                }
            }
        }
        out
    }

    #[test]
    fn rect_10x6_axis_aligned_is_20x12_block() {
        let pose = Pose {
            center: Point::new(50.1, 40.1),
            heading: 0.0,
        };
        let mut grid = OccupancyGrid::filled(geo(), CellState::Free);
        let n = raster_building(BuildingType::Rect, pose, ShapeParams::rect(10.0, 6.0), &mut grid).unwrap();
        assert_eq!(n, 240);
        let poly = footprint_polygon(BuildingType::Rect, pose, ShapeParams::rect(10.0, 6.0));
        assert_eq!(brute_cells(&poly, &geo()).len(), 240);
        let xs: BTreeSet<usize> = (0..grid.len())
            .filter(|&i| grid.cells()[i] == CellState::Occupied)
            .map(|i| i % 200)
            .collect();
        assert_eq!(xs.len(), 20);
    }

    #[test]
    fn l_shape_is_rect_minus_notch() {
        let pose = Pose {
            center: Point::new(30.1, 30.1),
            heading: 0.0,
        };
        let shape = ShapeParams {
            width: 12.0,
            depth: 10.0,
            notch_width_frac: 0.5,
            notch_depth_frac: 0.4,
            notch_side: 0,
        };
        let full = polygon_cells(&footprint_polygon(BuildingType::Rect, pose, shape), &geo()).len();
        let l_poly = footprint_polygon(BuildingType::LShape, pose, shape);
        let l = polygon_cells(&l_poly, &geo()).len();
        // 24x20 block minus a 12x8 notch.
        assert_eq!(full, 480);
        assert_eq!(l, 480 - 96);
        assert_eq!(brute_cells(&l_poly, &geo()).len(), l);
    }

    #[test]
    fn zero_area_shape_is_clamped() {
        let pose = Pose {
            center: Point::new(20.0, 20.0),
            heading: 0.3,
        };
        let mut grid = OccupancyGrid::filled(geo(), CellState::Free);
        let n = raster_building(BuildingType::CShape, pose, ShapeParams::rect(0.0, 0.0), &mut grid).unwrap();
        assert!(n > 0);
    }

    #[test]
    fn out_of_bounds_footprint_is_rejected() {
        let pose = Pose {
            center: Point::new(1.0, 50.0),
            heading: 0.0,
        };
        let mut grid = OccupancyGrid::filled(geo(), CellState::Free);
        let r = raster_building(BuildingType::Rect, pose, ShapeParams::rect(10.0, 6.0), &mut grid);
        assert!(matches!(r, Err(Error::OutOfBounds)));
        assert_eq!(grid.count(CellState::Occupied), 0);
    }

    #[test]
    fn scanline_matches_brute_force_on_generated_footprints() {
        for seed in 0..20 {
            let (layout, _) = generate(&TownParams::with_seed(seed)).unwrap();
            for b in &layout.buildings {
                let poly = b.polygon();
                let fast: BTreeSet<_> = polygon_cells(&poly, &geo()).into_iter().collect();
                assert_eq!(fast, brute_cells(&poly, &geo()), "seed {seed} {b:?}");
            }
        }
    }

    #[test]
    fn same_seed_same_grid() {
        let a = generate(&TownParams::with_seed(7)).unwrap();
        let b = generate(&TownParams::with_seed(7)).unwrap();
        assert_eq!(a, b);
        let c = generate(&TownParams::with_seed(8)).unwrap();
        assert_ne!(a.1, c.1);
    }

    #[test]
    fn zero_buildings_gives_all_free() {
        let params = TownParams {
            building_count_range: (0, 0),
            ..TownParams::with_seed(3)
        };
        let (layout, grid) = generate(&params).unwrap();
        assert!(layout.buildings.is_empty());
        assert_eq!(grid.count(CellState::Free), grid.len());
    }

    #[test]
    fn layout_invariants_hold() {
        let g = geo();
        for seed in 0..30 {
            let params = TownParams::with_seed(seed);
            let (layout, grid) = generate(&params).unwrap();
            let mut seen = vec![false; g.len()];
            let mut total = 0;
            for b in &layout.buildings {
                let poly = b.polygon();
                assert!(polygon_in_bounds(&poly, &g));
                let cells = polygon_cells(&poly, &g);
                for &(x, y) in &cells {
                    assert!(!seen[g.index(x, y)], "overlap seed {seed}");
                    seen[g.index(x, y)] = true;
                }
                total += cells.len();
            }
            assert_eq!(total, grid.count(CellState::Occupied));
            // Corridor cells stay free.
            for y in 0..g.height {
                for x in 0..g.width {
                    let d = point_polyline_distance(g.cell_center(x, y), &layout.street_centerline);
                    if d <= params.street_width / 2.0 - 1.0 {
                        assert_eq!(grid.get(x, y), CellState::Free);
                    }
                }
            }
            assert!(grid.cells().iter().all(|c| c.is_known()));
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let p = TownParams {
            building_count_range: (5, 2),
            ..TownParams::default()
        };
        assert!(p.validate().is_err());
        let p = TownParams {
            street_width: 500.0,
            ..TownParams::default()
        };
        assert!(p.validate().is_err());
    }
}
