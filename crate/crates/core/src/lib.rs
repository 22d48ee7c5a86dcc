//! Prior-map engine for online vectorized HD map construction.

pub mod error;
pub mod eval;
pub mod geometry;
pub mod perturbation;
pub mod plot;
pub mod prior;
pub mod rng;
pub mod sim;
pub mod tile_store;

pub use error::{Error, GeometryError, Result};
