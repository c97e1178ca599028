//! Anisotropic mixed-Morrey and Besov-type function spaces on periodic grids,
//! the spectral operators of the incompressible Navier-Stokes mild
//! formulation, a Picard solver for small data and an empirical harness for
//! the norm inequalities.

pub mod error;
pub mod grid;
pub mod lpdecomp;
pub mod norms;
pub mod io;
pub mod operators;
pub mod solver;
pub mod lab;

pub use error::{Error, Result};
pub use grid::{Field, Grid, Representation, VectorField};
pub use lpdecomp::DyadicPartition;
pub use norms::{Flavor, NormReport, SpaceParams};
pub use operators::Trajectory;
