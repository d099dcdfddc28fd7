//! Occupancy grids, the grayscale/mask image codec and map accuracy metrics.
//!
//! Cells are stored row-major with index `y * width + x`. Cell `(x, y)`
//! covers the world square `origin + [x, x+1) * resolution` by
//! `origin + [y, y+1) * resolution`. Image row `y` is grid row `y`.

use serde::{Deserialize, Serialize};

use crate::geom::Point;
use crate::{Error, Result};

/// Grayscale value for occupied cells.
pub const PIXEL_OCCUPIED: u8 = 0;
/// Grayscale value for unknown cells.
pub const PIXEL_UNKNOWN: u8 = 127;
/// Grayscale value for free cells.
pub const PIXEL_FREE: u8 = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum CellState {
    Free,
    Occupied,
    Unknown,
}

impl CellState {
    pub fn is_known(self) -> bool {
        self != CellState::Unknown
    }

    /// Flips Free and Occupied, leaves Unknown alone.
    pub fn complement(self) -> CellState {
        match self {
            CellState::Free => CellState::Occupied,
            CellState::Occupied => CellState::Free,
            CellState::Unknown => CellState::Unknown,
        }
    }
}

/// Size, resolution and placement of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub width: usize,
    pub height: usize,
    /// Meters per cell.
    pub resolution: f64,
    /// World position of the corner of cell (0, 0).
    pub origin: Point,
}

impl GridGeometry {
    pub fn new(width: usize, height: usize, resolution: f64) -> Self {
        Self {
            width,
            height,
            resolution,
            origin: Point::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn extent(&self) -> (f64, f64) {
        (
            self.width as f64 * self.resolution,
            self.height as f64 * self.resolution,
        )
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.width, index / self.width)
    }

    pub fn contains_cell(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    /// Whether a world point lies inside the map (closed on the low edge, open on the high edge).
    pub fn contains_point(&self, p: Point) -> bool {
        let (w, h) = self.extent();
        let q = p - self.origin;
        q.x >= 0.0 && q.y >= 0.0 && q.x < w && q.y < h
    }

    /// Cell containing a world point, or `None` outside the map.
    pub fn cell_of(&self, p: Point) -> Option<(usize, usize)> {
        let (x, y) = self.cell_of_unclamped(p);
        self.contains_cell(x, y).then_some((x as usize, y as usize))
    }

    pub fn cell_of_unclamped(&self, p: Point) -> (i64, i64) {
        let q = p - self.origin;
        (
            (q.x / self.resolution).floor() as i64,
            (q.y / self.resolution).floor() as i64,
        )
    }

    pub fn cell_center(&self, x: usize, y: usize) -> Point {
        self.origin + Point::new((x as f64 + 0.5) * self.resolution, (y as f64 + 0.5) * self.resolution)
    }

    /// Clamps a world point into the map interior.
    pub fn clamp_point(&self, p: Point) -> Point {
        let (w, h) = self.extent();
        let eps = self.resolution * 1e-6;
        Point::new(
            p.x.clamp(self.origin.x, self.origin.x + w - eps),
            p.y.clamp(self.origin.y, self.origin.y + h - eps),
        )
    }

    pub fn check_same(&self, other: &GridGeometry) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(())
    }

    /// 4-neighbours of a cell that lie inside the grid.
    pub fn neighbors4(&self, x: usize, y: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        const D: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
        let (x, y) = (x as i64, y as i64);
        D.iter().filter_map(move |&(dx, dy)| {
            let (nx, ny) = (x + dx, y + dy);
            self.contains_cell(nx, ny).then_some((nx as usize, ny as usize))
        })
    }

    /// 8-neighbours of a cell that lie inside the grid.
    pub fn neighbors8(&self, x: usize, y: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        const D: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];
        let (x, y) = (x as i64, y as i64);
        D.iter().filter_map(move |&(dx, dy)| {
            let (nx, ny) = (x + dx, y + dy);
            self.contains_cell(nx, ny).then_some((nx as usize, ny as usize))
        })
    }
}

impl Default for GridGeometry {
    /// 200 x 200 cells at 0.5 m: a 100 m square.
    fn default() -> Self {
        Self::new(200, 200, 0.5)
    }
}

/// A dense tri-state occupancy grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    geometry: GridGeometry,
    cells: Vec<CellState>,
}

impl OccupancyGrid {
    pub fn filled(geometry: GridGeometry, state: CellState) -> Self {
        Self {
            cells: vec![state; geometry.len()],
            geometry,
        }
    }

    pub fn unknown(geometry: GridGeometry) -> Self {
        Self::filled(geometry, CellState::Unknown)
    }

    pub fn from_cells(geometry: GridGeometry, cells: Vec<CellState>) -> Result<Self> {
        if geometry.resolution <= 0.0 || !geometry.resolution.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "resolution must be positive, got {}",
                geometry.resolution
            )));
        }
        if cells.len() != geometry.len() {
            return Err(Error::DimensionMismatch {
                expected: geometry.dims(),
                actual: (cells.len(), 1),
            });
        }
        Ok(Self { geometry, cells })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn width(&self) -> usize {
        self.geometry.width
    }

    pub fn height(&self) -> usize {
        self.geometry.height
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[CellState] {
        &self.cells
    }

    pub fn cells_mut(&mut self) -> &mut [CellState] {
        &mut self.cells
    }

    pub fn get(&self, x: usize, y: usize) -> CellState {
        self.cells[self.geometry.index(x, y)]
    }

    pub fn set(&mut self, x: usize, y: usize, state: CellState) {
        let i = self.geometry.index(x, y);
        self.cells[i] = state;
    }

    /// State at a world point; `None` outside the map.
    pub fn at_point(&self, p: Point) -> Option<CellState> {
        self.geometry.cell_of(p).map(|(x, y)| self.get(x, y))
    }

    pub fn count(&self, state: CellState) -> usize {
        self.cells.iter().filter(|&&c| c == state).count()
    }

    /// Fraction of cells that are known (Free or Occupied).
    pub fn known_fraction(&self) -> f64 {
        if self.cells.is_empty() {
            return 0.0;
        }
        1.0 - self.count(CellState::Unknown) as f64 / self.cells.len() as f64
    }
}

/// Quantized grayscale image plus inpainting mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
    /// `true` where the pixel is unknown and should be inpainted.
    pub mask: Vec<bool>,
}

impl GridImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>, mask: Vec<bool>) -> Result<Self> {
        let n = width * height;
        if pixels.len() != n || mask.len() != n {
            return Err(Error::DimensionMismatch {
                expected: (width, height),
                actual: (pixels.len(), mask.len()),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
            mask,
        })
    }

    /// Image with the mask derived from gray pixels.
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        let mask = pixels.iter().map(|&p| p == PIXEL_UNKNOWN).collect();
        Self::new(width, height, pixels, mask)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Mask as 0/255 bytes for PNG export.
    pub fn mask_bytes(&self) -> Vec<u8> {
        self.mask.iter().map(|&m| if m { 255 } else { 0 }).collect()
    }

    /// Whether the mask marks exactly the gray pixels.
    pub fn mask_consistent(&self) -> bool {
        self.pixels
            .iter()
            .zip(&self.mask)
            .all(|(&p, &m)| m == (p == PIXEL_UNKNOWN))
    }
}

/// Decode thresholds: pixels below `low` are occupied, above `high` are free.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thresholds {
    pub low: u8,
    pub high: u8,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            low: PIXEL_UNKNOWN,
            high: PIXEL_UNKNOWN,
        }
    }
}

impl Thresholds {
    pub fn classify(self, pixel: u8) -> CellState {
        if pixel < self.low {
            CellState::Occupied
        } else if pixel > self.high {
            CellState::Free
        } else {
            CellState::Unknown
        }
    }
}

pub fn encode_cell(state: CellState) -> u8 {
    match state {
        CellState::Occupied => PIXEL_OCCUPIED,
        CellState::Free => PIXEL_FREE,
        CellState::Unknown => PIXEL_UNKNOWN,
    }
}

pub fn encode(grid: &OccupancyGrid) -> GridImage {
    let pixels: Vec<u8> = grid.cells().iter().map(|&c| encode_cell(c)).collect();
    let mask = grid.cells().iter().map(|&c| c == CellState::Unknown).collect();
    GridImage {
        width: grid.width(),
        height: grid.height(),
        pixels,
        mask,
    }
}

/// Converts an image back into a grid with the given geometry.
pub fn decode(image: &GridImage, geometry: &GridGeometry, thresholds: Thresholds) -> Result<OccupancyGrid> {
    if image.dims() != geometry.dims() || image.pixels.len() != geometry.len() {
        return Err(Error::DimensionMismatch {
            expected: geometry.dims(),
            actual: image.dims(),
        });
    }
    let cells = image.pixels.iter().map(|&p| thresholds.classify(p)).collect();
    OccupancyGrid::from_cells(*geometry, cells)
}

/// Fraction of cells where `predicted` matches `truth`.
///
/// With `count_unknown_as_half` each unknown predicted cell scores 0.5;
/// otherwise unknown cells count as mismatches.
pub fn accuracy(predicted: &OccupancyGrid, truth: &OccupancyGrid, count_unknown_as_half: bool) -> Result<f64> {
    truth.geometry().check_same(predicted.geometry())?;
    if truth.cells().contains(&CellState::Unknown) {
        return Err(Error::TruthHasUnknown);
    }
    if truth.is_empty() {
        return Ok(1.0);
    }
    let mut matches = 0usize;
    let mut unknown = 0usize;
    for (&p, &t) in predicted.cells().iter().zip(truth.cells()) {
        if p == CellState::Unknown {
            unknown += 1;
        } else if p == t {
            matches += 1;
        }
    }
    let credit = if count_unknown_as_half {
        matches as f64 + 0.5 * unknown as f64
    } else {
        matches as f64
    };
    Ok(credit / truth.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorLabel {
    CorrectFree,
    CorrectOccupied,
    /// Predicted free, truly occupied.
    WrongFree,
    /// Predicted occupied, truly free.
    WrongOccupied,
}

impl ErrorLabel {
    pub fn color(self) -> [u8; 3] {
        match self {
            ErrorLabel::CorrectFree => [255, 255, 255],
            ErrorLabel::CorrectOccupied => [0, 0, 0],
            ErrorLabel::WrongFree => [0, 255, 0],
            ErrorLabel::WrongOccupied => [0, 0, 255],
        }
    }
}

/// Per-cell comparison of a prediction against ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMap {
    pub width: usize,
    pub height: usize,
    /// `None` where either side is unknown.
    pub labels: Vec<Option<ErrorLabel>>,
}

impl ErrorMap {
    pub fn count(&self, label: ErrorLabel) -> usize {
        self.labels.iter().filter(|&&l| l == Some(label)).count()
    }

    pub fn unlabeled(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }

    /// RGB rendering; unlabeled cells are gray.
    pub fn to_rgb(&self) -> Vec<u8> {
        self.labels
            .iter()
            .flat_map(|l| l.map_or([PIXEL_UNKNOWN; 3], ErrorLabel::color))
            .collect()
    }
}

pub fn error_map(predicted: &OccupancyGrid, truth: &OccupancyGrid) -> Result<ErrorMap> {
    truth.geometry().check_same(predicted.geometry())?;
    let labels = predicted
        .cells()
        .iter()
        .zip(truth.cells())
        .map(|(&p, &t)| match (p, t) {
            (CellState::Free, CellState::Free) => Some(ErrorLabel::CorrectFree),
            (CellState::Occupied, CellState::Occupied) => Some(ErrorLabel::CorrectOccupied),
            (CellState::Free, CellState::Occupied) => Some(ErrorLabel::WrongFree),
            (CellState::Occupied, CellState::Free) => Some(ErrorLabel::WrongOccupied),
            _ => None,
        })
        .collect();
    Ok(ErrorMap {
        width: predicted.width(),
        height: predicted.height(),
        labels,
    })
}
