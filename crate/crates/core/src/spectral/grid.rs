use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Uniform periodic grid on the torus `[0, 2 pi)^d`.
///
/// Nodes are stored row-major: axis 0 varies slowest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TorusGrid {
    dims: Vec<usize>,
}

/// Upper bound on the number of grid nodes accepted by [`TorusGrid::new`].
pub const MAX_NODES: usize = 1 << 24;

impl TorusGrid {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidParameter(format!("grid dimension {} < 2", dims.len())));
        }
        for &n in &dims {
            if n < 8 || n % 2 != 0 {
                return Err(Error::InvalidParameter(format!(
                    "grid size {n} per axis must be even and at least 8"
                )));
            }
        }
        let total = dims.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n));
        match total {
            Some(t) if t <= MAX_NODES => Ok(TorusGrid { dims }),
            _ => Err(Error::InvalidParameter(format!(
                "grid {dims:?} exceeds the node budget of {MAX_NODES}"
            ))),
        }
    }

    /// Isotropic grid with `n` points per axis.
    pub fn cube(d: usize, n: usize) -> Result<Self> {
        Self::new(vec![n; d])
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        TAU / self.dims[axis] as f64
    }

    pub fn max_spacing(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).fold(0.0, f64::max)
    }

    pub fn min_points(&self) -> usize {
        *self.dims.iter().min().expect("nonempty")
    }

    /// Volume of the whole torus, `(2 pi)^d`.
    pub fn volume(&self) -> f64 {
        TAU.powi(self.dim() as i32)
    }

    pub fn cell_volume(&self) -> f64 {
        self.volume() / self.len() as f64
    }

    /// Row-major stride of `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.dims[axis + 1..].iter().product()
    }

    /// Multi-index of node `n`.
    pub fn unravel(&self, mut n: usize, idx: &mut [usize]) {
        for a in (0..self.dim()).rev() {
            idx[a] = n % self.dims[a];
            n /= self.dims[a];
        }
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.dims).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    /// Physical coordinates of node `n`.
    pub fn coords_into(&self, mut n: usize, x: &mut [f64]) {
        for a in (0..self.dim()).rev() {
            let i = n % self.dims[a];
            n /= self.dims[a];
            x[a] = i as f64 * self.spacing(a);
        }
    }

    /// Wavenumber used by derivative operators; the Nyquist mode maps to 0.
    pub fn deriv_wavenumber(&self, axis: usize, j: usize) -> f64 {
        let n = self.dims[axis];
        if j < n / 2 {
            j as f64
        } else if j == n / 2 {
            0.0
        } else {
            j as f64 - n as f64
        }
    }

    /// Signed wavenumber with the Nyquist mode kept at `n/2`.
    pub fn wavenumber(&self, axis: usize, j: usize) -> f64 {
        let n = self.dims[axis];
        if j <= n / 2 {
            j as f64
        } else {
            j as f64 - n as f64
        }
    }

    /// Per-axis tables of derivative wavenumbers.
    pub fn deriv_tables(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|a| (0..self.dims[a]).map(|j| self.deriv_wavenumber(a, j)).collect())
            .collect()
    }

    /// Calls `f(mode_index, k)` for every Fourier mode with its derivative
    /// wavevector.
    pub fn for_each_mode(&self, mut f: impl FnMut(usize, &[f64])) {
        let tables = self.deriv_tables();
        let d = self.dim();
        let mut idx = vec![0usize; d];
        let mut k = vec![0.0; d];
        for n in 0..self.len() {
            for a in 0..d {
                k[a] = tables[a][idx[a]];
            }
            f(n, &k);
            for a in (0..d).rev() {
                idx[a] += 1;
                if idx[a] < self.dims[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
    }

    pub(crate) fn fft(&self) -> FftEngine {
        FftEngine::new(self)
    }
}

/// Lines gathered per batch in the strided passes.
const LINE_TILE: usize = 16;

/// Multi-dimensional complex FFT built from one-dimensional passes.
pub(crate) struct FftEngine {
    dims: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl FftEngine {
    fn new(grid: &TorusGrid) -> Self {
        let mut planner = FftPlanner::new();
        let forward = grid.dims.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse = grid.dims.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        FftEngine { dims: grid.dims.clone(), forward, inverse }
    }

    fn transform(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>]) {
        let d = self.dims.len();
        let total: usize = self.dims.iter().product();
        let mut scratch = Vec::new();
        let mut work = Vec::new();
        for a in 0..d {
            work.resize(plans[a].get_inplace_scratch_len(), Complex64::new(0.0, 0.0));
            let n = self.dims[a];
            let stride: usize = self.dims[a + 1..].iter().product();
            if stride == 1 {
                plans[a].process_with_scratch(data, &mut work);
                continue;
            }
            // Gather tiles of adjacent lines so reads stay within cache
            // lines, transform them as one batch and scatter back.
            let block = n * stride;
            let tile = LINE_TILE.min(stride);
            scratch.resize(tile * n, Complex64::new(0.0, 0.0));
            for outer in (0..total).step_by(block) {
                let blk = &mut data[outer..outer + block];
                for c0 in (0..stride).step_by(tile) {
                    let t_len = tile.min(stride - c0);
                    let buf = &mut scratch[..t_len * n];
                    for j in 0..n {
                        let row = &blk[j * stride + c0..j * stride + c0 + t_len];
                        for (t, &z) in row.iter().enumerate() {
                            buf[t * n + j] = z;
                        }
                    }
                    plans[a].process_with_scratch(buf, &mut work);
                    for j in 0..n {
                        let row = &mut blk[j * stride + c0..j * stride + c0 + t_len];
                        for (t, z) in row.iter_mut().enumerate() {
                            *z = buf[t * n + j];
                        }
                    }
                }
            }
        }
    }

    /// Unnormalised forward transform of complex samples, in place.
    pub fn forward_complex(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
    }

    /// Unnormalised inverse transform of complex spectra, in place.
    pub fn inverse_complex(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
    }

    /// Unnormalised forward transform of real samples.
    pub fn forward_real(&self, data: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = data.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.transform(&mut buf, &self.forward);
        buf
    }

    /// Inverse transform normalised by `1/N`, keeping the real part.
    pub fn inverse_real(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut spec, &self.inverse);
        let scale = 1.0 / spec.len() as f64;
        spec.into_iter().map(|c| c.re * scale).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_sizes() {
        assert!(TorusGrid::new(vec![8]).is_err());
        assert!(TorusGrid::new(vec![6, 8]).is_err());
        assert!(TorusGrid::new(vec![9, 8]).is_err());
        assert!(TorusGrid::new(vec![1 << 13, 1 << 13]).is_err());
        assert!(TorusGrid::new(vec![8, 16, 32]).is_ok());
    }

    #[test]
    fn ravel_round_trip() {
        let g = TorusGrid::new(vec![8, 10, 12]).unwrap();
        let mut idx = [0; 3];
        for n in [0, 1, 17, 500, g.len() - 1] {
            g.unravel(n, &mut idx);
            assert_eq!(g.ravel(&idx), n);
        }
    }

    #[test]
    fn fft_round_trip_and_single_mode() {
        let g = TorusGrid::new(vec![8, 16]).unwrap();
        let fft = g.fft();
        let mut x = [0.0; 2];
        let data: Vec<f64> = (0..g.len())
            .map(|n| {
                g.coords_into(n, &mut x);
                (3.0 * x[1]).cos()
            })
            .collect();
        let spec = fft.forward_real(&data);
        let n = g.len() as f64;
        // cos(3 x_1): coefficients 1/2 at k = (0, +-3).
        assert!((spec[3].re / n - 0.5).abs() < 1e-12);
        assert!((spec[16 - 3].re / n - 0.5).abs() < 1e-12);
        let back = fft.inverse_real(spec);
        for (a, b) in back.iter().zip(&data) {
            assert!((a - b).abs() < 1e-13);
        }
    }
}
