//! Periodic-torus calculus: grids, fields, Fourier-multiplier operators,
//! the profile ladder and smooth cutoffs.

mod cutoff;
mod field;
mod grid;
mod ops;
mod profile;

pub use cutoff::{cutoff_bump, smooth_ramp, Region, MIN_RAMP_CELLS};
pub use field::{MatrixField, ScalarField, VectorField};
pub use grid::{TorusGrid, MAX_NODES};
pub use ops::{
    anti_divergence, div, div_matrix, grad, hminus1_distance, inv_laplacian, inv_laplacian_vec,
    laplacian, laplacian_vec, leray_correct, MEAN_TOL,
};
pub use profile::{build_profiles, ProfileLadder, DEFAULT_M, LADDER_LEN};

pub(crate) use cutoff::for_each_in_box;
pub(crate) use ops::{anti_div_mode, expand_sym, Spectral};
