//! Map predictors: given a partial observation, produce a complete map.
//!
//! Built in are an oracle (ground truth with random flips, for tests) and
//! a sampler over the procedural town prior. External processes speak the
//! binary protocol in [`protocol`] and are driven by [`external`].

pub mod external;
pub mod prior;
pub mod protocol;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::grid::{decode, encode, CellState, GridGeometry, GridImage, OccupancyGrid, Thresholds, PIXEL_UNKNOWN};
use crate::{seed, Error, Result};

pub use external::{ExternalConfig, ExternalPredictor, Transport};
pub use prior::{PriorParams, PriorSampler};

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRequest {
    pub id: u32,
    /// Simulation time of the observation, seconds.
    pub time: f64,
    pub image: GridImage,
}

impl PredictionRequest {
    pub fn from_observed(id: u32, time: f64, observed: &OccupancyGrid) -> Self {
        Self {
            id,
            time,
            image: encode(observed),
        }
    }

    pub fn validate(&self, geometry: &GridGeometry) -> Result<()> {
        if self.image.dims() != geometry.dims() {
            return Err(Error::DimensionMismatch {
                expected: geometry.dims(),
                actual: self.image.dims(),
            });
        }
        if !self.image.mask_consistent() {
            return Err(Error::InvalidParameter(
                "request mask does not match gray pixels".into(),
            ));
        }
        Ok(())
    }

    pub fn observed(&self, geometry: &GridGeometry) -> Result<OccupancyGrid> {
        decode(&self.image, geometry, Thresholds::default())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictedMap {
    pub id: u32,
    pub predictor: String,
    /// Complete map: no Unknown cells.
    pub grid: OccupancyGrid,
    /// The predictor failed and this is the all-Free fallback.
    pub degraded: bool,
}

pub trait Predictor: Send {
    fn name(&self) -> &str;

    /// Completes the masked cells of `request`. Unmasked cells are copied.
    fn predict(&mut self, request: &PredictionRequest, seed: u64) -> Result<PredictedMap>;
}

/// Classifies a predicted pixel: darker than unknown gray is Occupied,
/// anything else Free.
pub fn binarize(pixel: u8) -> CellState {
    if pixel < PIXEL_UNKNOWN {
        CellState::Occupied
    } else {
        CellState::Free
    }
}

/// The request with every masked cell set Free.
pub fn fallback_grid(request: &PredictionRequest, geometry: &GridGeometry) -> Result<OccupancyGrid> {
    let mut grid = request.observed(geometry)?;
    for c in grid.cells_mut() {
        if *c == CellState::Unknown {
            *c = CellState::Free;
        }
    }
    Ok(grid)
}

/// Builds a complete grid from predicted pixels, forcing known cells back to
/// the request's values. Returns the grid and the number of known cells that
/// had to be repaired.
pub fn grid_from_prediction(
    request: &PredictionRequest,
    pixels: &[u8],
    geometry: &GridGeometry,
) -> Result<(OccupancyGrid, usize)> {
    if pixels.len() != geometry.len() {
        return Err(Error::DimensionMismatch {
            expected: geometry.dims(),
            actual: (pixels.len(), 1),
        });
    }
    let known = Thresholds::default();
    let mut repaired = 0;
    let cells = pixels
        .iter()
        .zip(&request.image.pixels)
        .zip(&request.image.mask)
        .map(|((&p, &q), &masked)| {
            if masked {
                binarize(p)
            } else {
                let want = known.classify(q);
                if binarize(p) != want {
                    repaired += 1;
                }
                want
            }
        })
        .collect();
    Ok((OccupancyGrid::from_cells(*geometry, cells)?, repaired))
}

/// Whether `predicted` is complete and agrees with every unmasked cell.
pub fn honors_request(request: &PredictionRequest, predicted: &OccupancyGrid) -> bool {
    let known = Thresholds::default();
    predicted.len() == request.image.pixels.len()
        && predicted
            .cells()
            .iter()
            .zip(&request.image.pixels)
            .zip(&request.image.mask)
            .all(|((&c, &p), &m)| c != CellState::Unknown && (m || c == known.classify(p)))
}

/// Ground truth on masked cells, each flipped with probability `flip_rate`.
#[derive(Debug, Clone)]
pub struct OraclePredictor {
    truth: OccupancyGrid,
    flip_rate: f64,
}

impl OraclePredictor {
    pub fn new(truth: OccupancyGrid, flip_rate: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&flip_rate) {
            return Err(Error::InvalidParameter(format!("flip_rate {flip_rate} outside [0, 1]")));
        }
        if truth.cells().contains(&CellState::Unknown) {
            return Err(Error::TruthHasUnknown);
        }
        Ok(Self { truth, flip_rate })
    }
}

impl Predictor for OraclePredictor {
    fn name(&self) -> &str {
        "oracle"
    }

    fn predict(&mut self, request: &PredictionRequest, seed: u64) -> Result<PredictedMap> {
        let g = *self.truth.geometry();
        request.validate(&g)?;
        let mut grid = request.observed(&g)?;
        let mut rng = seed::stream(seed, 0x6F_72_61);
        for (c, &t) in grid.cells_mut().iter_mut().zip(self.truth.cells()) {
            if *c == CellState::Unknown {
                *c = if rng.random::<f64>() < self.flip_rate {
                    t.complement()
                } else {
                    t
                };
            }
        }
        Ok(PredictedMap {
            id: request.id,
            predictor: self.name().to_string(),
            grid,
            degraded: false,
        })
    }
}

/// Predictor selection as written in trial configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictorSpec {
    Oracle {
        #[serde(default)]
        flip_rate: f64,
    },
    Prior(PriorParams),
    External(ExternalConfig),
}

impl Default for PredictorSpec {
    fn default() -> Self {
        PredictorSpec::Prior(PriorParams::default())
    }
}

impl PredictorSpec {
    /// Instantiates the predictor; the oracle needs `truth`.
    pub fn build(&self, geometry: &GridGeometry, truth: &OccupancyGrid) -> Result<Box<dyn Predictor>> {
        Ok(match self {
            PredictorSpec::Oracle { flip_rate } => Box::new(OraclePredictor::new(truth.clone(), *flip_rate)?),
            PredictorSpec::Prior(params) => Box::new(PriorSampler::new(params.clone(), *geometry)?),
            PredictorSpec::External(config) => Box::new(ExternalPredictor::connect(config.clone(), *geometry)?),
        })
    }
}
