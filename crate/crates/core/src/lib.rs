//! Convex-integration toolkit for steady incompressible Euler flows with a
//! linear source term `B v` on the periodic torus.

pub mod cli;
pub mod driver;
pub mod error;
pub mod io;
pub mod lamination;
pub mod linalg;
pub mod segment;
pub mod spectral;
pub mod state;
pub mod wave;

pub use error::{Error, Result};
