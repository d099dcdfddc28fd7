//! Python module `pyexplore`.
//!
//! Grids cross the boundary as encoded bytes (0 occupied, 255 free, 127
//! unknown, row-major). Configs are TOML strings in the same schema as the
//! command line tool; structured results come back as plain dicts and lists.

use explore_core::auction::{self, AgentInfo, AuctionConfig, AuctionTask, Topology};
use explore_core::belief::{BeliefField, BeliefParams};
use explore_core::grid::{self, GridImage, Thresholds};
use explore_core::harness::{self, ExperimentConfig, OutputOptions, TrialConfig};
use explore_core::tasking::RewardKind;
use explore_core::{worldgen, CellState, GridGeometry, OccupancyGrid, Point};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

fn err(e: explore_core::Error) -> PyErr {
    match e {
        explore_core::Error::Io { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn trial_config(config: Option<&str>) -> PyResult<ExperimentConfig> {
    let exp = match config {
        Some(text) => ExperimentConfig::from_toml(text).map_err(err)?,
        None => ExperimentConfig::default(),
    };
    Ok(exp)
}

fn policy(name: &str) -> PyResult<RewardKind> {
    name.parse().map_err(err)
}

/// Tri-state occupancy grid.
#[pyclass(name = "Grid", module = "pyexplore")]
struct PyGrid {
    inner: OccupancyGrid,
}

#[pymethods]
impl PyGrid {
    /// All-unknown grid.
    #[new]
    #[pyo3(signature = (width=200, height=200, resolution=0.5))]
    fn new(width: usize, height: usize, resolution: f64) -> Self {
        Self {
            inner: OccupancyGrid::unknown(GridGeometry::new(width, height, resolution)),
        }
    }

    /// Decodes encoded pixels; values below 127 are occupied, 127 unknown,
    /// above free.
    #[staticmethod]
    #[pyo3(signature = (width, height, data, resolution=0.5))]
    fn from_bytes(width: usize, height: usize, data: &[u8], resolution: f64) -> PyResult<Self> {
        let image = GridImage::from_pixels(width, height, data.to_vec()).map_err(err)?;
        let g = GridGeometry::new(width, height, resolution);
        let inner = grid::decode(&image, &g, Thresholds::default()).map_err(err)?;
        Ok(Self { inner })
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &grid::encode(&self.inner).pixels)
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn resolution(&self) -> f64 {
        self.inner.geometry().resolution
    }

    /// `"occupied"`, `"free"` or `"unknown"`.
    fn get(&self, x: usize, y: usize) -> PyResult<&'static str> {
        if x >= self.inner.width() || y >= self.inner.height() {
            return Err(PyValueError::new_err(format!("cell ({x}, {y}) outside grid")));
        }
        Ok(state_name(self.inner.get(x, y)))
    }

    /// Cell counts keyed by state.
    fn counts(&self) -> std::collections::HashMap<&'static str, usize> {
        [CellState::Occupied, CellState::Free, CellState::Unknown]
            .into_iter()
            .map(|s| (state_name(s), self.inner.count(s)))
            .collect()
    }

    fn known_fraction(&self) -> f64 {
        self.inner.known_fraction()
    }

    fn save_png(&self, path: &str) -> PyResult<()> {
        explore_core::imageio::write_grid(std::path::Path::new(path), &self.inner).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Grid({}x{}, known {:.3})",
            self.inner.width(),
            self.inner.height(),
            self.inner.known_fraction()
        )
    }
}

fn state_name(s: CellState) -> &'static str {
    match s {
        CellState::Occupied => "occupied",
        CellState::Free => "free",
        CellState::Unknown => "unknown",
    }
}

/// Per-cell log-odds belief fed by predicted maps.
#[pyclass(name = "Belief", module = "pyexplore")]
struct PyBelief {
    inner: BeliefField,
}

#[pymethods]
impl PyBelief {
    #[new]
    #[pyo3(signature = (width=200, height=200, resolution=0.5, confidence=0.65, max_log_odds=4.0))]
    fn new(width: usize, height: usize, resolution: f64, confidence: f64, max_log_odds: f64) -> PyResult<Self> {
        let params = BeliefParams {
            confidence,
            max_log_odds,
            ..BeliefParams::default()
        };
        params.validate().map_err(err)?;
        Ok(Self {
            inner: BeliefField::new(GridGeometry::new(width, height, resolution), params),
        })
    }

    /// Folds one predicted map in; cells known in `observed` are pinned.
    fn update(&mut self, prediction: &PyGrid, observed: &PyGrid) -> PyResult<()> {
        self.inner.update(&prediction.inner, &observed.inner).map_err(err)
    }

    fn probabilities(&self) -> Vec<f64> {
        self.inner.probabilities()
    }

    /// Binary entropy per cell in bits.
    fn entropy(&self) -> Vec<f64> {
        self.inner.entropy().bits().to_vec()
    }

    fn total_entropy(&self) -> f64 {
        self.inner.entropy().total()
    }

    /// Entropy summed over the square of side `box_side` meters centered on
    /// `(x, y)`.
    #[pyo3(signature = (x, y, box_side=10.0))]
    fn region_entropy(&self, x: f64, y: f64, box_side: f64) -> f64 {
        self.inner.entropy().region_entropy(Point::new(x, y), box_side)
    }

    /// Most likely state per cell.
    fn classify(&self) -> PyGrid {
        PyGrid {
            inner: self.inner.classify(),
        }
    }

    #[getter]
    fn updates(&self) -> usize {
        self.inner.updates()
    }
}

/// Generates a town; returns `(grid, layout)`.
#[pyfunction]
#[pyo3(signature = (seed, config=None))]
fn generate_town(py: Python<'_>, seed: u64, config: Option<&str>) -> PyResult<(PyGrid, Py<PyAny>)> {
    let mut town = trial_config(config)?.trial.town;
    town.seed = seed;
    let (layout, inner) = worldgen::generate(&town).map_err(err)?;
    Ok((PyGrid { inner }, to_py(py, &layout)?))
}

/// Discounted score of visiting `path` (`[(x, y, reward), ...]`) in order.
#[pyfunction]
fn path_score(start: (f64, f64), speed: f64, discount: f64, path: Vec<(f64, f64, f64)>) -> f64 {
    let path: Vec<(Point, f64)> = path.into_iter().map(|(x, y, r)| (Point::new(x, y), r)).collect();
    auction::path_score(Point::new(start.0, start.1), speed, discount, &path)
}

/// Runs the bundle auction on a fully connected team.
///
/// `agents` are `(x, y, speed)`, `tasks` are `(id, x, y, reward)`. Returns
/// a dict with `paths`, `winners`, `rounds` and `converged`.
#[pyfunction]
#[pyo3(signature = (agents, tasks, discount=0.95, bundle_size=3, round_budget=50))]
fn run_auction(
    py: Python<'_>,
    agents: Vec<(f64, f64, f64)>,
    tasks: Vec<(u32, f64, f64, f64)>,
    discount: f64,
    bundle_size: usize,
    round_budget: usize,
) -> PyResult<Py<PyAny>> {
    let config = AuctionConfig {
        discount,
        bundle_size,
        round_budget,
        ..AuctionConfig::default()
    };
    config.validate().map_err(err)?;
    let agents = agents
        .into_iter()
        .map(|(x, y, s)| AgentInfo::new(Point::new(x, y), s))
        .collect();
    let tasks = tasks
        .into_iter()
        .map(|(id, x, y, reward)| AuctionTask {
            id,
            location: Point::new(x, y),
            reward,
        })
        .collect();
    let (assignment, _) = auction::run_auction(agents, tasks, config, Topology::Full).map_err(err)?;
    to_py(py, &assignment)
}

/// Runs one trial. Returns a dict with `ticks`, `crossings`,
/// `uncovered_crossings`, `end_time` and `stopped_early`.
#[pyfunction]
#[pyo3(signature = (policy, world_seed, sim_seed, config=None, duration=None))]
fn run_trial(
    py: Python<'_>,
    policy: &str,
    world_seed: u64,
    sim_seed: u64,
    config: Option<&str>,
    duration: Option<f64>,
) -> PyResult<Py<PyAny>> {
    let mut c: TrialConfig = trial_config(config)?
        .trial
        .with_trial(self::policy(policy)?, world_seed, sim_seed);
    if let Some(d) = duration {
        c.duration = d;
    }
    let record = py.detach(|| harness::run_trial(&c)).map_err(err)?;
    let out = serde_json::json!({
        "ticks": record.ticks,
        "crossings": record.crossings,
        "uncovered_crossings": record.uncovered_crossings,
        "end_time": record.end_time,
        "stopped_early": record.stopped_early,
        "degraded_predictions": record.degraded_predictions,
    });
    to_py(py, &out)
}

/// Runs the campaign described by `config` and returns the per-policy
/// summaries; writes the usual output files when `out` is given.
#[pyfunction]
#[pyo3(signature = (config=None, out=None))]
fn run_campaign(py: Python<'_>, config: Option<&str>, out: Option<&str>) -> PyResult<Py<PyAny>> {
    let exp = trial_config(config)?;
    let configs = exp.campaign.expand(&exp.trial);
    let result = py
        .detach(|| harness::run_campaign(&configs, exp.campaign.threads))
        .map_err(err)?;
    if let Some(dir) = out {
        harness::write_campaign(&result, std::path::Path::new(dir), OutputOptions::default()).map_err(err)?;
    }
    to_py(py, &result.summaries)
}

/// Fraction of cells that must be uncovered for the observed map alone to
/// reach the given half-credit accuracy.
#[pyfunction]
fn equivalent_uncovered_threshold(accuracy: f64) -> f64 {
    harness::equivalent_uncovered_threshold(accuracy)
}

/// The default experiment config as TOML.
#[pyfunction]
fn default_config() -> PyResult<String> {
    ExperimentConfig::default().to_toml().map_err(err)
}

#[pymodule]
fn pyexplore(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyBelief>()?;
    m.add_function(wrap_pyfunction!(generate_town, m)?)?;
    m.add_function(wrap_pyfunction!(path_score, m)?)?;
    m.add_function(wrap_pyfunction!(run_auction, m)?)?;
    m.add_function(wrap_pyfunction!(run_trial, m)?)?;
    m.add_function(wrap_pyfunction!(run_campaign, m)?)?;
    m.add_function(wrap_pyfunction!(equivalent_uncovered_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    Ok(())
}
