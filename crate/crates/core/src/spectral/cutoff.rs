//! Smooth tensor-product cutoffs on axis-aligned boxes of the torus.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::field::ScalarField;
use super::grid::TorusGrid;

/// Fewest grid cells a cutoff ramp may span. Below this the ramp falls
/// between nodes and the sampled cutoff is an indicator function.
pub const MIN_RAMP_CELLS: f64 = 0.5;

/// Fraction of the allowed plateau-violation volume actually used by the ramps.
const RAMP_FILL: f64 = 0.9;

/// Axis-aligned box `lo + [0, len]` on the torus; boxes may wrap around.
/// A side of length `>= 2 pi` covers the whole axis and carries no ramp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lo: Vec<f64>,
    pub len: Vec<f64>,
}

impl Region {
    pub fn new(lo: Vec<f64>, len: Vec<f64>) -> Result<Self> {
        if lo.len() != len.len() || lo.is_empty() {
            return Err(Error::InvalidParameter("region corner and sides differ in length".into()));
        }
        if len.iter().any(|&l| !(l > 0.0)) || lo.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(format!("degenerate region {lo:?} + {len:?}")));
        }
        let len = len.into_iter().map(|l| l.min(TAU)).collect();
        Ok(Region { lo, len })
    }

    /// The whole torus.
    pub fn full(d: usize) -> Self {
        Region { lo: vec![0.0; d], len: vec![TAU; d] }
    }

    /// Cube of side `side` with lower corner `lo`.
    pub fn cube(lo: Vec<f64>, side: f64) -> Result<Self> {
        let d = lo.len();
        Self::new(lo, vec![side; d])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.len.iter().product()
    }

    fn is_full(&self, axis: usize) -> bool {
        self.len[axis] >= TAU
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.len).map(|(a, l)| (a + 0.5 * l).rem_euclid(TAU)).collect()
    }

    /// Offset of coordinate `x` from the lower corner, reduced to `[0, 2 pi)`.
    fn offset(&self, axis: usize, x: f64) -> f64 {
        (x - self.lo[axis]).rem_euclid(TAU)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        (0..self.dim()).all(|a| self.is_full(a) || self.offset(a, x[a]) <= self.len[a])
    }

    /// Ramp width giving a plateau-violation volume of `RAMP_FILL * delta`.
    pub fn ramp_width(&self, delta: f64) -> Result<f64> {
        let vol = self.volume();
        if !(delta > 0.0 && delta < vol) {
            return Err(Error::InvalidParameter(format!(
                "cutoff delta = {delta} must lie in (0, vol(box) = {vol})"
            )));
        }
        let ramped: Vec<usize> = (0..self.dim()).filter(|&a| !self.is_full(a)).collect();
        if ramped.is_empty() {
            return Ok(0.0);
        }
        let target = RAMP_FILL * delta;
        let violation = |rho: f64| {
            let inner: f64 = (0..self.dim())
                .map(|a| if self.is_full(a) { self.len[a] } else { (self.len[a] - 2.0 * rho).max(0.0) })
                .product();
            vol - inner
        };
        let (mut lo, mut hi) = (0.0, ramped.iter().map(|&a| 0.5 * self.len[a]).fold(f64::MAX, f64::min));
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if violation(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(lo)
    }

    /// Nodes of `axis` inside the box as `(index, cutoff factor, offset from
    /// the lower corner)`; the offset is continuous across the torus seam.
    pub(crate) fn axis_profile(&self, grid: &TorusGrid, axis: usize, rho: f64) -> Vec<(usize, f64, f64)> {
        let n = grid.dims()[axis];
        let h = grid.spacing(axis);
        if self.is_full(axis) {
            return (0..n).map(|i| (i, 1.0, i as f64 * h)).collect();
        }
        let l = self.len[axis];
        (0..n)
            .filter_map(|i| {
                let t = self.offset(axis, i as f64 * h);
                if t >= l {
                    return None;
                }
                let dist = t.min(l - t);
                let f = if rho > 0.0 { smooth_ramp(dist / rho) } else { 1.0 };
                (f > 0.0).then_some((i, f, t))
            })
            .collect()
    }

    /// Checks the ramp spans at least `MIN_RAMP_CELLS` cells on every ramped axis.
    pub(crate) fn check_resolution(&self, grid: &TorusGrid, rho: f64) -> Result<()> {
        if grid.dim() != self.dim() {
            return Err(Error::InvalidParameter(format!(
                "region dimension {} does not match grid dimension {}",
                self.dim(),
                grid.dim()
            )));
        }
        for a in 0..self.dim() {
            if self.is_full(a) {
                continue;
            }
            if rho < MIN_RAMP_CELLS * grid.spacing(a) {
                return Err(Error::Resolution(format!(
                    "box too small for requested delta at grid resolution: ramp {rho:.3e} spans \
                     fewer than {MIN_RAMP_CELLS} cells of size {:.3e} on axis {a}",
                    grid.spacing(a)
                )));
            }
        }
        Ok(())
    }
}

/// `e^{-1/t} / (e^{-1/t} + e^{-1/(1-t)})`, clamped to `[0, 1]` outside `(0, 1)`.
pub fn smooth_ramp(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / t).exp();
        let b = (-1.0 / (1.0 - t)).exp();
        a / (a + b)
    }
}

/// Smooth cutoff equal to 1 on the box minus ramps of total volume below
/// `delta`, and 0 outside the box.
pub fn cutoff_bump(region: &Region, delta: f64, grid: &TorusGrid) -> Result<ScalarField> {
    let rho = region.ramp_width(delta)?;
    region.check_resolution(grid, rho)?;
    let mut out = ScalarField::zeros(grid);
    let axes: Vec<_> = (0..grid.dim()).map(|a| region.axis_profile(grid, a, rho)).collect();
    for_each_in_box(grid, &axes, |n, f, _| out.data_mut()[n] = f);
    Ok(out)
}

/// Visits the tensor product of per-axis `(index, factor, extra)` lists,
/// passing the flat node index, the product of factors and the sum of extras.
pub(crate) fn for_each_in_box(
    grid: &TorusGrid,
    axes: &[Vec<(usize, f64, f64)>],
    mut f: impl FnMut(usize, f64, f64),
) {
    let d = grid.dim();
    if axes.iter().any(|a| a.is_empty()) {
        return;
    }
    let strides: Vec<usize> = (0..d).map(|a| grid.stride(a)).collect();
    let mut pos = vec![0usize; d];
    loop {
        let mut n = 0;
        let mut v = 1.0;
        let mut e = 0.0;
        for a in 0..d {
            let (i, fa, ea) = axes[a][pos[a]];
            n += i * strides[a];
            v *= fa;
            e += ea;
        }
        f(n, v, e);
        let mut a = d;
        loop {
            if a == 0 {
                return;
            }
            a -= 1;
            pos[a] += 1;
            if pos[a] < axes[a].len() {
                break;
            }
            pos[a] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn violation_volume(phi: &ScalarField, region: &Region) -> f64 {
        let g = phi.grid();
        let mut x = vec![0.0; g.dim()];
        let count = (0..g.len())
            .filter(|&n| {
                g.coords_into(n, &mut x);
                let interior = (0..g.dim()).all(|a| {
                    let t = (x[a] - region.lo[a]).rem_euclid(std::f64::consts::TAU);
                    t > 0.0 && t < region.len[a]
                });
                interior && phi.data()[n] != 1.0
            })
            .count();
        count as f64 * g.cell_volume()
    }

    #[test]
    fn plateau_violation_below_delta() {
        let g = TorusGrid::cube(2, 128).unwrap();
        let region = Region::cube(vec![0.0, 0.0], PI).unwrap();
        let phi = cutoff_bump(&region, 0.5, &g).unwrap();
        assert!(violation_volume(&phi, &region) < 0.5);
        assert!(phi.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        // Center value.
        let c = g.ravel(&[32, 32]);
        assert_eq!(phi.data()[c], 1.0);
    }

    #[test]
    fn wide_ramps_stay_in_box() {
        let g = TorusGrid::cube(2, 128).unwrap();
        let region = Region::new(vec![1.0, 2.0], vec![2.0, 1.5]).unwrap();
        let phi = cutoff_bump(&region, 0.99 * region.volume(), &g).unwrap();
        let mut x = [0.0; 2];
        for n in 0..g.len() {
            g.coords_into(n, &mut x);
            if !region.contains(&x) {
                assert_eq!(phi.data()[n], 0.0);
            }
        }
        assert!(phi.sup() > 0.0);
    }

    #[test]
    fn wrapping_box() {
        let g = TorusGrid::cube(2, 64).unwrap();
        let region = Region::cube(vec![5.5, 5.5], 2.0).unwrap();
        let phi = cutoff_bump(&region, 2.5, &g).unwrap();
        // (0.2, 0.2) is inside after wrap-around, (3, 3) is not.
        let inside = g.ravel(&[2, 2]);
        let outside = g.ravel(&[30, 30]);
        assert!(phi.data()[inside] > 0.0);
        assert_eq!(phi.data()[outside], 0.0);
    }

    #[test]
    fn too_small_for_resolution() {
        let g = TorusGrid::cube(2, 32).unwrap();
        let region = Region::cube(vec![0.0, 0.0], PI).unwrap();
        assert!(matches!(cutoff_bump(&region, 1e-3, &g), Err(Error::Resolution(_))));
        assert!(cutoff_bump(&region, 20.0, &g).is_err());
    }

    #[test]
    fn full_torus_is_identically_one() {
        let g = TorusGrid::cube(2, 16).unwrap();
        let phi = cutoff_bump(&Region::full(2), 1e-3, &g).unwrap();
        assert!(phi.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn ramp_is_smooth_step() {
        assert_eq!(smooth_ramp(0.5), 0.5);
        assert_eq!(smooth_ramp(-1.0), 0.0);
        assert_eq!(smooth_ramp(2.0), 1.0);
        for i in 1..100 {
            let t = i as f64 / 100.0;
            assert!(smooth_ramp(t) >= smooth_ramp(t - 0.01));
            assert!((smooth_ramp(t) + smooth_ramp(1.0 - t) - 1.0).abs() < 1e-15);
        }
    }
}
