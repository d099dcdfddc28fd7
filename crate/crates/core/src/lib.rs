//! Multi-robot exploration with map prediction.
//!
//! The crate is organised around the pipeline a trial runs every
//! prediction period:
//!
//! 1. [`sim`] advances robots and fuses their lidar scans into a global
//!    tri-state [`grid::OccupancyGrid`].
//! 2. A [`predictor`] completes the unknown part of that map.
//! 3. [`belief`] folds every prediction into a per-cell log-odds posterior
//!    whose binary entropy is the *generative entropy* field.
//! 4. [`tasking`] prices tasks (constant, visible unknown volume, or
//!    generative entropy) and [`auction`] allocates them with a
//!    consensus-based bundle auction.
//!
//! [`harness`] wires these together into seeded trials and campaigns, and
//! [`worldgen`] produces the procedural towns everything runs on.

pub mod auction;
pub mod belief;
mod error;
pub mod geom;
pub mod grid;
pub mod harness;
pub mod imageio;
pub mod predictor;
pub mod seed;
pub mod sim;
pub mod tasking;
pub mod worldgen;

pub use error::{Error, Result};
pub use geom::Point;
pub use grid::{CellState, GridGeometry, GridImage, OccupancyGrid};
