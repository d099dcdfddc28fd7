//! Per-cell occupancy posterior accumulated from predicted maps, and the
//! generative-entropy field derived from it.
//!
//! Every prediction is folded in as a noisy observation with confidence
//! `q`: `log_odds += ±ln(q / (1 - q))`, clamped to `±L_max`. Cells that
//! have been observed directly are pinned at `±L_max`.

use serde::{Deserialize, Serialize};

use crate::geom::Point;
use crate::grid::{CellState, GridGeometry, OccupancyGrid};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BeliefParams {
    /// Probability that a single prediction is right about a cell.
    pub confidence: f64,
    /// Saturation bound on |log-odds|.
    pub max_log_odds: f64,
    pub prior: f64,
}

impl Default for BeliefParams {
    fn default() -> Self {
        Self {
            confidence: 0.65,
            max_log_odds: 4.0,
            prior: 0.5,
        }
    }
}

impl BeliefParams {
    /// Log-odds increment of one prediction.
    pub fn step(&self) -> f64 {
        (self.confidence / (1.0 - self.confidence)).ln()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.confidence > 0.5 && self.confidence < 1.0) {
            return Err(Error::InvalidParameter("belief confidence must be in (0.5, 1)".into()));
        }
        if !(self.max_log_odds > 0.0 && self.max_log_odds.is_finite()) {
            return Err(Error::InvalidParameter("max_log_odds must be positive".into()));
        }
        if !(self.prior > 0.0 && self.prior < 1.0) {
            return Err(Error::InvalidParameter("belief prior must be in (0, 1)".into()));
        }
        Ok(())
    }
}

pub fn logistic(l: f64) -> f64 {
    1.0 / (1.0 + (-l).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Binary entropy in bits, with `0 log 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.log2() };
    term(p) + term(1.0 - p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefField {
    geometry: GridGeometry,
    params: BeliefParams,
    log_odds: Vec<f64>,
    updates: usize,
}

impl BeliefField {
    pub fn new(geometry: GridGeometry, params: BeliefParams) -> Self {
        let l0 = logit(params.prior).clamp(-params.max_log_odds, params.max_log_odds);
        Self {
            log_odds: vec![l0; geometry.len()],
            geometry,
            params,
            updates: 0,
        }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn params(&self) -> &BeliefParams {
        &self.params
    }

    pub fn log_odds(&self) -> &[f64] {
        &self.log_odds
    }

    /// Number of predictions folded in so far.
    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn probability(&self, index: usize) -> f64 {
        logistic(self.log_odds[index])
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.log_odds.iter().map(|&l| logistic(l)).collect()
    }

    /// Folds in a predicted map. Observed cells are pinned to `±L_max`.
    ///
    /// Predicted cells that are still Unknown leave the belief unchanged.
    pub fn update(&mut self, prediction: &OccupancyGrid, observed: &OccupancyGrid) -> Result<()> {
        self.geometry.check_same(prediction.geometry())?;
        self.geometry.check_same(observed.geometry())?;
        let step = self.params.step();
        let lmax = self.params.max_log_odds;
        for ((l, &pred), &obs) in self.log_odds.iter_mut().zip(prediction.cells()).zip(observed.cells()) {
            *l = match obs {
                CellState::Occupied => lmax,
                CellState::Free => -lmax,
                CellState::Unknown => match pred {
                    CellState::Occupied => (*l + step).min(lmax),
                    CellState::Free => (*l - step).max(-lmax),
                    CellState::Unknown => *l,
                },
            };
        }
        self.updates += 1;
        Ok(())
    }

    /// Cells whose posterior favours occupancy (`p > 0.5`) as Occupied, else Free.
    pub fn classify(&self) -> OccupancyGrid {
        let cells = self
            .log_odds
            .iter()
            .map(|&l| if l > 0.0 { CellState::Occupied } else { CellState::Free })
            .collect();
        OccupancyGrid::from_cells(self.geometry, cells).expect("geometry matches")
    }

    pub fn entropy(&self) -> EntropyField {
        EntropyField {
            geometry: self.geometry,
            bits: self.log_odds.iter().map(|&l| binary_entropy(logistic(l))).collect(),
        }
    }
}

/// Per-cell binary entropy in bits.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyField {
    geometry: GridGeometry,
    bits: Vec<f64>,
}

impl EntropyField {
    pub fn from_probabilities(geometry: GridGeometry, p: &[f64]) -> Result<Self> {
        if p.len() != geometry.len() {
            return Err(Error::DimensionMismatch {
                expected: geometry.dims(),
                actual: (p.len(), 1),
            });
        }
        Ok(Self {
            geometry,
            bits: p.iter().map(|&p| binary_entropy(p)).collect(),
        })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn bits(&self) -> &[f64] {
        &self.bits
    }

    pub fn total(&self) -> f64 {
        self.bits.iter().sum()
    }

    /// Cell index range of a `box_side` square centered on `center`, clipped
    /// to the map. Spans `2 * round(box_side / (2 * resolution)) + 1` cells
    /// per side around the center cell.
    pub fn box_cells(geometry: &GridGeometry, center: Point, box_side: f64) -> Option<(usize, usize, usize, usize)> {
        let half = (box_side / (2.0 * geometry.resolution)).round() as i64;
        let (cx, cy) = geometry.cell_of_unclamped(center);
        let x0 = (cx - half).max(0);
        let y0 = (cy - half).max(0);
        let x1 = (cx + half).min(geometry.width as i64 - 1);
        let y1 = (cy + half).min(geometry.height as i64 - 1);
        (x0 <= x1 && y0 <= y1).then_some((x0 as usize, y0 as usize, x1 as usize, y1 as usize))
    }

    /// Sum of entropy over the clipped box; 0 when the box misses the map.
    pub fn region_entropy(&self, center: Point, box_side: f64) -> f64 {
        let Some((x0, y0, x1, y1)) = Self::box_cells(&self.geometry, center, box_side) else {
            return 0.0;
        };
        let w = self.geometry.width;
        (y0..=y1)
            .map(|y| self.bits[y * w + x0..=y * w + x1].iter().sum::<f64>())
            .sum()
    }

    /// 8-bit rendering, dark = high entropy.
    pub fn to_gray(&self) -> Vec<u8> {
        self.bits
            .iter()
            .map(|&h| (255.0 * (1.0 - h.clamp(0.0, 1.0))).round() as u8)
            .collect()
    }
}
