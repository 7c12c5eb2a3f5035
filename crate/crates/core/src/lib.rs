//! Lattice simulation of heat-kernel KPZ scaling in 2d Liouville quantum
//! gravity.
//!
//! The pipeline samples a log-correlated Gaussian field, builds Wick-ordered
//! chaos measures from it, restricts them to deterministic fractals, evolves
//! the heat kernel of the random-metric Laplacian and fits the decay
//! exponent of the fractal's heat-kernel mass, which is then compared with
//! the KPZ prediction.

pub mod error;
pub mod experiment;
pub mod fractal;
pub mod gff;
pub mod grid_io;
pub mod heat;
pub mod kpz;
pub mod lattice;
pub mod measure;
pub mod scaling;
pub mod seed;
mod spectral;

pub use error::{KpzError, Result};
pub use lattice::{Geometry, Lattice};
