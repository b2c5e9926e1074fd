//! Pointwise state-space geometry.
//!
//! A state is a pair `w = (v, U)` with `v` a velocity in R^d and `U` a
//! symmetric trace-free d x d matrix. The nonlinear constraint set is
//!
//! ```text
//! K_r = { (v, U) : U = v v^T - (r/d) I }
//! ```
//!
//! and its convex hull is `{ v v^T - U <= (r/d) I }`. Distances to the hull
//! boundary are measured by the eigenvalue gap returned from [`hull_margin`].

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lamination::{in_lamination_hull, HullParams};
use crate::linalg;
use crate::spectral::{ScalarField, TorusGrid};

/// Symmetry tolerance for stored `U` matrices.
pub const TAU_SYM: f64 = 1e-12;
/// Trace tolerance for stored `U` matrices.
pub const TAU_TR: f64 = 1e-12;
/// Default tolerance for membership tests.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// One point `(v, U)` of the state space, optionally carrying a pressure-like
/// scalar `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePoint {
    pub v: DVector<f64>,
    pub u: DMatrix<f64>,
    pub q: Option<f64>,
}

impl StatePoint {
    /// Builds a state, checking dimensions, symmetry and trace of `u`.
    pub fn new(v: DVector<f64>, u: DMatrix<f64>) -> Result<Self> {
        let d = v.len();
        if d < 2 {
            return Err(Error::InvalidParameter(format!("dimension {d} < 2")));
        }
        if u.nrows() != d || u.ncols() != d {
            return Err(Error::InvalidParameter(format!(
                "U is {}x{}, expected {d}x{d}",
                u.nrows(),
                u.ncols()
            )));
        }
        if v.iter().chain(u.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("non-finite state entry".into()));
        }
        let scale = u.abs().max().max(1.0);
        if (&u - u.transpose()).abs().max() > TAU_SYM * scale {
            return Err(Error::InvalidParameter("U is not symmetric".into()));
        }
        if u.trace().abs() > TAU_TR * scale {
            return Err(Error::InvalidParameter(format!(
                "U is not trace-free (trace {:e})",
                u.trace()
            )));
        }
        Ok(StatePoint { v, u, q: None })
    }

    /// Builds a state from a velocity and an arbitrary matrix by projecting
    /// the matrix onto the symmetric trace-free subspace.
    pub fn from_projected(v: DVector<f64>, m: &DMatrix<f64>) -> Self {
        StatePoint { u: sym0_project(m), v, q: None }
    }

    pub fn zero(d: usize) -> Self {
        StatePoint { v: DVector::zeros(d), u: DMatrix::zeros(d, d), q: None }
    }

    pub fn from_slices(v: &[f64], u: &[f64]) -> Self {
        let d = v.len();
        StatePoint {
            v: DVector::from_column_slice(v),
            u: DMatrix::from_row_slice(d, d, u),
            q: None,
        }
    }

    pub fn with_q(mut self, q: f64) -> Self {
        self.q = Some(q);
        self
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    /// Dimension of the symmetric trace-free subspace, `d(d+1)/2 - 1`.
    pub fn sym0_dim(&self) -> usize {
        let d = self.dim();
        d * (d + 1) / 2 - 1
    }

    /// Euclidean norm of `(v, U)` with the Frobenius norm on `U`.
    pub fn norm(&self) -> f64 {
        (self.v.norm_squared() + self.u.norm_squared()).sqrt()
    }

    /// Row-major copy of `U`.
    pub fn u_row_major(&self) -> Vec<f64> {
        let d = self.dim();
        (0..d * d).map(|k| self.u[(k / d, k % d)]).collect()
    }
}

impl Add for &StatePoint {
    type Output = StatePoint;
    fn add(self, rhs: &StatePoint) -> StatePoint {
        StatePoint { v: &self.v + &rhs.v, u: &self.u + &rhs.u, q: None }
    }
}

impl Sub for &StatePoint {
    type Output = StatePoint;
    fn sub(self, rhs: &StatePoint) -> StatePoint {
        StatePoint { v: &self.v - &rhs.v, u: &self.u - &rhs.u, q: None }
    }
}

impl Mul<f64> for &StatePoint {
    type Output = StatePoint;
    fn mul(self, s: f64) -> StatePoint {
        StatePoint { v: &self.v * s, u: &self.u * s, q: self.q.map(|q| q * s) }
    }
}

impl Neg for &StatePoint {
    type Output = StatePoint;
    fn neg(self) -> StatePoint {
        self * -1.0
    }
}

/// Constant source matrix `B` in `div(v v) + grad p = B v`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceMatrix(pub DMatrix<f64>);

impl SourceMatrix {
    pub fn new(b: DMatrix<f64>) -> Result<Self> {
        if b.nrows() != b.ncols() {
            return Err(Error::InvalidParameter("source matrix must be square".into()));
        }
        if b.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("source matrix has non-finite entries".into()));
        }
        Ok(SourceMatrix(b))
    }

    pub fn zero(d: usize) -> Self {
        SourceMatrix(DMatrix::zeros(d, d))
    }

    /// Row-major entries.
    pub fn from_row_slice(d: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != d * d {
            return Err(Error::InvalidParameter(format!(
                "expected {} source entries, got {}",
                d * d,
                entries.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(d, d, entries))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }
}

/// Energy profile `e(x)`; the target for `|v|^2`.
#[derive(Debug, Clone, PartialEq)]
pub enum EnergyProfile {
    /// `e(x) = value`.
    Constant(f64),
    /// `e(x) = base + amplitude * cos(k . x)`.
    Cosine { base: f64, amplitude: f64, mode: Vec<i64> },
    /// Compactly supported `peak * exp(1 - 1/(1 - s^2))`, `s = |x - center| / radius`.
    Bump { center: Vec<f64>, radius: f64, peak: f64 },
    /// Values sampled on a grid.
    Grid(ScalarField),
}

impl EnergyProfile {
    /// Evaluates a closed-form profile at a point; grid profiles return `None`.
    pub fn eval(&self, x: &[f64]) -> Option<f64> {
        match self {
            EnergyProfile::Constant(c) => Some(*c),
            EnergyProfile::Cosine { base, amplitude, mode } => {
                let phase: f64 = x.iter().zip(mode).map(|(xi, &k)| xi * k as f64).sum();
                Some(base + amplitude * phase.cos())
            }
            EnergyProfile::Bump { center, radius, peak } => {
                let s2 = x
                    .iter()
                    .zip(center)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    / (radius * radius);
                if s2 >= 1.0 {
                    Some(0.0)
                } else {
                    Some(peak * (1.0 - 1.0 / (1.0 - s2)).exp())
                }
            }
            EnergyProfile::Grid(_) => None,
        }
    }

    /// Samples the profile on `grid`.
    pub fn sample(&self, grid: &TorusGrid) -> Result<ScalarField> {
        if let EnergyProfile::Grid(f) = self {
            if f.grid() != grid {
                return Err(Error::InvalidParameter("energy grid does not match run grid".into()));
            }
            return Ok(f.clone());
        }
        let mut x = vec![0.0; grid.dim()];
        let data = (0..grid.len())
            .map(|n| {
                grid.coords_into(n, &mut x);
                self.eval(&x).unwrap_or(0.0)
            })
            .collect();
        ScalarField::from_vec(grid, data)
    }
}

/// `(M + M^T)/2 - tr(M)/d I`.
pub fn sym0_project(m: &DMatrix<f64>) -> DMatrix<f64> {
    let d = m.nrows();
    let mut s = (m + m.transpose()) * 0.5;
    let t = m.trace() / d as f64;
    for i in 0..d {
        s[(i, i)] -= t;
    }
    s
}

fn check_r(r: f64) -> Result<()> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidParameter(format!("energy level r = {r} must be positive")));
    }
    Ok(())
}

/// The point of `K_r` above `v`: `(v, v v^T - (r/d) I)`.
pub fn lift_to_k(v: &DVector<f64>, r: f64) -> Result<StatePoint> {
    check_r(r)?;
    let d = v.len();
    if d < 2 {
        return Err(Error::InvalidParameter(format!("dimension {d} < 2")));
    }
    let mut u = v * v.transpose();
    for i in 0..d {
        u[(i, i)] -= r / d as f64;
    }
    Ok(StatePoint { v: v.clone(), u, q: None })
}

/// Membership in `K_r` up to `tol`.
pub fn in_k(w: &StatePoint, r: f64, tol: f64) -> Result<bool> {
    check_r(r)?;
    if (w.v.norm_squared() - r).abs() > tol {
        return Ok(false);
    }
    let lifted = lift_to_k(&w.v, r)?;
    Ok((&w.u - &lifted.u).norm() <= tol)
}

/// `r/d - lambda_max(v v^T - U)`: positive in the interior of the convex
/// hull of `K_r`, zero on its boundary, negative outside.
pub fn hull_margin(w: &StatePoint, r: f64) -> f64 {
    linalg::margin_raw(w.v.as_slice(), &w.u_row_major(), r)
}

/// Energy deficit `r - |v|^2`.
pub fn energy_deficit(w: &StatePoint, r: f64) -> f64 {
    r - w.v.norm_squared()
}

/// Wave-cone test: a unit `xi` and scalar `q` with `U xi + q xi = 0` and
/// `v . xi = 0`.
///
/// Returns `Ok(None)` when the direction is not in the cone.
pub fn in_wave_cone(w: &StatePoint, tol: f64) -> Result<Option<(DVector<f64>, f64)>> {
    let d = w.dim();
    let vn = w.v.norm();
    if vn == 0.0 {
        return Err(Error::Precondition("wave-cone directions need a nonzero velocity".into()));
    }
    if d == 2 {
        let xi = DVector::from_vec(vec![-w.v[1] / vn, w.v[0] / vn]);
        let ux = &w.u * &xi;
        let lam = xi.dot(&ux);
        if (&ux - &xi * lam).norm() <= tol {
            return Ok(Some((xi, -lam)));
        }
        return Ok(None);
    }

    let eig = w.u.clone().symmetric_eigen();
    let scale = w.u.abs().max().max(1.0);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut best: Option<(f64, DVector<f64>, f64)> = None;
    let mut start = 0;
    while start < d {
        let mut end = start + 1;
        while end < d
            && (eig.eigenvalues[order[end]] - eig.eigenvalues[order[start]]).abs() <= tol * scale
        {
            end += 1;
        }
        let group: Vec<DVector<f64>> =
            order[start..end].iter().map(|&k| eig.eigenvectors.column(k).into_owned()).collect();
        let lam = order[start..end].iter().map(|&k| eig.eigenvalues[k]).sum::<f64>()
            / (end - start) as f64;
        let xi = if group.len() == 1 {
            group[0].clone()
        } else {
            // Pick the vector of the eigenspace orthogonal to the projection of v.
            let mut p = DVector::zeros(d);
            for e in &group {
                p += e * e.dot(&w.v);
            }
            let pn = p.norm();
            if pn <= f64::EPSILON * vn {
                group[0].clone()
            } else {
                let ph = p / pn;
                group
                    .iter()
                    .map(|e| e - &ph * e.dot(&ph))
                    .max_by(|a, b| a.norm().total_cmp(&b.norm()))
                    .map(|x| x.normalize())
                    .expect("nonempty eigenspace")
            }
        };
        let err = w.v.dot(&xi).abs();
        if best.as_ref().map_or(true, |(e, _, _)| err < *e) {
            best = Some((err, xi, lam));
        }
        start = end;
    }
    let (err, mut xi, lam) = best.expect("d >= 2");
    if err > tol {
        return Ok(None);
    }
    if let Some(k) = xi.iter().position(|x| x.abs() > 1e-12) {
        if xi[k] < 0.0 {
            xi = -xi;
        }
    }
    Ok(Some((xi, -lam)))
}

/// Planar state in complex coordinates: `z = a + ib` from `v = (a, b)` and
/// `zeta = c + id` from `U = [[c, d], [d, -c]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexState {
    pub z: Complex64,
    pub zeta: Complex64,
}

impl ComplexState {
    pub fn new(z: Complex64, zeta: Complex64) -> Self {
        ComplexState { z, zeta }
    }

    pub fn from_state(w: &StatePoint) -> Result<Self> {
        if w.dim() != 2 {
            return Err(Error::InvalidParameter("complex coordinates need d = 2".into()));
        }
        Ok(ComplexState {
            z: Complex64::new(w.v[0], w.v[1]),
            zeta: Complex64::new(w.u[(0, 0)], w.u[(0, 1)]),
        })
    }

    pub fn to_state(&self) -> StatePoint {
        let (c, d) = (self.zeta.re, self.zeta.im);
        StatePoint {
            v: DVector::from_vec(vec![self.z.re, self.z.im]),
            u: DMatrix::from_row_slice(2, 2, &[c, d, d, -c]),
            q: None,
        }
    }

    /// `(z e^{i theta}, zeta e^{2 i theta})`.
    pub fn rotate(&self, theta: f64) -> Self {
        ComplexState {
            z: self.z * Complex64::from_polar(1.0, theta),
            zeta: self.zeta * Complex64::from_polar(1.0, 2.0 * theta),
        }
    }

    pub fn conj(&self) -> Self {
        ComplexState { z: self.z.conj(), zeta: self.zeta.conj() }
    }

    /// `Im(z^2 conj(zeta))`; zero exactly on the planar wave cone.
    pub fn cone_defect(&self) -> f64 {
        (self.z * self.z * self.zeta.conj()).im
    }

    pub fn add_scaled(&self, dir: &ComplexState, t: f64) -> Self {
        ComplexState { z: self.z + dir.z * t, zeta: self.zeta + dir.zeta * t }
    }

    /// Hull margin of the planar state, see [`hull_margin`].
    pub fn hull_margin(&self, r: f64) -> f64 {
        let (a, b, c, d) = (self.z.re, self.z.im, self.zeta.re, self.zeta.im);
        linalg::margin_raw(&[a, b], &[c, d, d, -c], r)
    }
}

/// `sqrt(r)|a| / (r/2 + c) + sqrt(r)|b| / (r/2 - c)` for `|c| < r/2`.
pub fn f_r(z: Complex64, c: f64, r: f64) -> Result<f64> {
    check_r(r)?;
    if c.abs() >= 0.5 * r {
        return Err(Error::Domain(format!("|c| = {} must be below r/2 = {}", c.abs(), 0.5 * r)));
    }
    let sr = r.sqrt();
    Ok(sr * z.re.abs() / (0.5 * r + c) + sr * z.im.abs() / (0.5 * r - c))
}

/// Membership in the relaxed set: the interior of the convex hull for
/// d >= 3, the sampled lamination hull for d = 2.
pub fn in_relaxed(w: &StatePoint, r: f64, params: &HullParams) -> Result<bool> {
    check_r(r)?;
    if w.dim() >= 3 {
        return Ok(hull_margin(w, r) > 0.0);
    }
    in_lamination_hull(w, r, params.depth, params.n_dirs, params.n_samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn dv(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn sym0_project_examples() {
        let eye = DMatrix::<f64>::identity(2, 2);
        assert_abs_diff_eq!(sym0_project(&eye).norm(), 0.0);
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let s = sym0_project(&m);
        assert_eq!(s, DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]));
        assert_eq!(sym0_project(&s), s);
    }

    #[test]
    fn lift_examples() {
        let w = lift_to_k(&dv(&[1.0, 0.0]), 1.0).unwrap();
        assert_eq!(w.u, DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, -0.5]));
        let w = lift_to_k(&dv(&[0.0, 1.0]), 1.0).unwrap();
        assert_eq!(w.u, DMatrix::from_row_slice(2, 2, &[-0.5, 0.0, 0.0, 0.5]));
        let w0 = lift_to_k(&dv(&[0.0, 0.0]), 1.0).unwrap();
        assert_eq!(w0.u, DMatrix::from_row_slice(2, 2, &[-0.5, 0.0, 0.0, -0.5]));
        assert!(!in_k(&w0, 1.0, 1e-9).unwrap());
        assert!(lift_to_k(&dv(&[1.0, 0.0]), 0.0).is_err());
        assert!(lift_to_k(&dv(&[1.0, 0.0]), -1.0).is_err());
    }

    #[test]
    fn in_k_examples() {
        assert!(in_k(&lift_to_k(&dv(&[1.0, 0.0]), 1.0).unwrap(), 1.0, 1e-9).unwrap());
        let bad = StatePoint::new(dv(&[1.0, 0.0]), DMatrix::zeros(2, 2)).unwrap();
        assert!(!in_k(&bad, 1.0, 1e-9).unwrap());
        let s = 0.5f64.sqrt();
        assert!(in_k(&lift_to_k(&dv(&[s, s]), 1.0).unwrap(), 1.0, 1e-9).unwrap());
    }

    #[test]
    fn hull_margin_examples() {
        assert_abs_diff_eq!(hull_margin(&StatePoint::zero(2), 1.0), 0.5);
        let on_k = lift_to_k(&dv(&[1.0, 0.0]), 1.0).unwrap();
        assert_abs_diff_eq!(hull_margin(&on_k, 1.0), 0.0, epsilon = 1e-15);
        let out = StatePoint::new(dv(&[2.0, 0.0]), DMatrix::zeros(2, 2)).unwrap();
        assert_abs_diff_eq!(hull_margin(&out, 1.0), 0.5 - 4.0, epsilon = 1e-14);
    }

    #[test]
    fn energy_deficit_examples() {
        assert_eq!(energy_deficit(&StatePoint::zero(2), 1.0), 1.0);
        let on_k = lift_to_k(&dv(&[0.6, 0.8]), 1.0).unwrap();
        assert_abs_diff_eq!(energy_deficit(&on_k, 1.0), 0.0, epsilon = 1e-15);
        let w = StatePoint::new(dv(&[0.5, 0.0]), DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, -0.1]))
            .unwrap();
        assert_abs_diff_eq!(energy_deficit(&w, 1.0), 0.75);
    }

    #[test]
    fn wave_cone_direction_d3() {
        let a = dv(&[1.0, 0.0, 0.0]);
        let b = dv(&[0.0, 1.0, 0.0]);
        let wa = lift_to_k(&a, 1.0).unwrap();
        let wb = lift_to_k(&b, 1.0).unwrap();
        let (xi, q) = in_wave_cone(&(&wa - &wb), 1e-9).unwrap().expect("in cone");
        assert_abs_diff_eq!(xi[2].abs(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn wave_cone_planar_examples() {
        let w = ComplexState::new(Complex64::new(1.0, 0.0), Complex64::new(0.5, 0.0)).to_state();
        let (xi, _) = in_wave_cone(&w, 1e-9).unwrap().expect("in cone");
        assert_abs_diff_eq!(xi[0], 0.0);
        assert_abs_diff_eq!(xi[1], 1.0);
        let w = ComplexState::new(Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)).to_state();
        assert_abs_diff_eq!(ComplexState::from_state(&w).unwrap().cone_defect(), -1.0);
        assert!(in_wave_cone(&w, 1e-9).unwrap().is_none());
        assert!(in_wave_cone(&StatePoint::zero(2), 1e-9).is_err());
    }

    #[test]
    fn wave_cone_degenerate_eigenspace() {
        // U = 0: every xi orthogonal to v works.
        let w = StatePoint::new(dv(&[1.0, 2.0, 3.0]), DMatrix::zeros(3, 3)).unwrap();
        let (xi, q) = in_wave_cone(&w, 1e-9).unwrap().expect("in cone");
        assert!(w.v.dot(&xi).abs() < 1e-12);
        assert_abs_diff_eq!(q, 0.0);
    }

    #[test]
    fn f_r_examples() {
        assert_eq!(f_r(Complex64::new(0.0, 0.0), 0.25, 1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(f_r(Complex64::new(0.3, 0.0), 0.0, 1.0).unwrap(), 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(f_r(Complex64::new(0.5, 0.0), 0.0, 1.0).unwrap(), 1.0);
        assert!(matches!(f_r(Complex64::new(0.1, 0.0), 0.5, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn in_relaxed_d3() {
        let p = HullParams::default();
        assert!(in_relaxed(&StatePoint::zero(3), 1.0, &p).unwrap());
        let on_k = lift_to_k(&dv(&[1.0, 0.0, 0.0]), 1.0).unwrap();
        assert!(!in_relaxed(&on_k, 1.0, &p).unwrap());
    }

    #[test]
    fn complex_round_trip() {
        let w = StatePoint::new(dv(&[0.3, -0.7]), DMatrix::from_row_slice(2, 2, &[0.2, 0.1, 0.1, -0.2]))
            .unwrap();
        let back = ComplexState::from_state(&w).unwrap().to_state();
        assert_eq!(back, w);
        // K_r in complex form: zeta = z^2 / 2.
        let k = lift_to_k(&dv(&[0.6, 0.8]), 1.0).unwrap();
        let c = ComplexState::from_state(&k).unwrap();
        assert!((c.zeta - c.z * c.z * 0.5).norm() < 1e-15);
    }

    fn arb_state(d: usize) -> impl Strategy<Value = StatePoint> {
        (prop::collection::vec(-1.0..1.0f64, d), prop::collection::vec(-1.0..1.0f64, d * d)).prop_map(
            move |(v, m)| StatePoint::from_projected(DVector::from_vec(v), &DMatrix::from_row_slice(d, d, &m)),
        )
    }

    proptest! {
        #[test]
        fn sym0_idempotent_and_linear(
            a in prop::collection::vec(-3.0..3.0f64, 9),
            b in prop::collection::vec(-3.0..3.0f64, 9),
            s in -2.0..2.0f64,
        ) {
            let ma = DMatrix::from_row_slice(3, 3, &a);
            let mb = DMatrix::from_row_slice(3, 3, &b);
            let pa = sym0_project(&ma);
            prop_assert!((sym0_project(&pa) - &pa).norm() < 1e-14);
            let lhs = sym0_project(&(&ma * s + &mb));
            let rhs = &pa * s + sym0_project(&mb);
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }

        #[test]
        fn lifted_points_sit_on_hull_boundary(v in prop::collection::vec(-1.0..1.0f64, 3), r in 0.1..4.0f64) {
            let v = DVector::from_vec(v);
            prop_assume!(v.norm() > 1e-3);
            let v = v.normalize() * r.sqrt();
            let w = lift_to_k(&v, r).unwrap();
            prop_assert!(hull_margin(&w, r).abs() <= 10.0 * f64::EPSILON * r * 4.0);
            prop_assert!(in_k(&w, r, 1e-9).unwrap());
        }

        #[test]
        fn nonnegative_margin_implies_nonnegative_deficit(w in arb_state(3), r in 0.1..3.0f64) {
            if hull_margin(&w, r) >= 0.0 {
                prop_assert!(energy_deficit(&w, r) >= -1e-12);
            }
        }

        #[test]
        fn planar_cone_tests_agree(w in arb_state(2), sel in 0..3usize) {
            // Push a third of the samples onto the cone so both outcomes are exercised.
            let mut c = ComplexState::from_state(&w).unwrap();
            prop_assume!(c.z.norm() > 1e-3);
            if sel == 0 {
                let s = c.zeta.norm();
                c.zeta = c.z * c.z / c.z.norm_sqr() * s;
            }
            let w = c.to_state();
            let algebraic = c.cone_defect().abs() <= 1e-9;
            let eigen = in_wave_cone(&w, 1e-9).unwrap();
            prop_assert_eq!(algebraic, eigen.is_some());
            if let Some((xi, q)) = eigen {
                prop_assert!((&w.u * &xi + &xi * q).norm() <= 1e-9);
                prop_assert!(w.v.dot(&xi).abs() <= 1e-9);
            }
        }

        #[test]
        fn cone_witness_residuals(w in arb_state(3)) {
            if w.v.norm() > 1e-6 {
                if let Some((xi, q)) = in_wave_cone(&w, 1e-9).unwrap() {
                    prop_assert!((&w.u * &xi + &xi * q).norm() <= 1e-9);
                    prop_assert!(w.v.dot(&xi).abs() <= 1e-9);
                    prop_assert!((xi.norm() - 1.0).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn rotation_equivariance(w in arb_state(2), theta in 0.0..std::f64::consts::TAU, r in 0.2..2.0f64) {
            let c = ComplexState::from_state(&w).unwrap();
            let rc = c.rotate(theta);
            let rw = rc.to_state();
            prop_assert_eq!(in_k(&w, r, 1e-9).unwrap(), in_k(&rw, r, 1e-9).unwrap());
            prop_assert!((hull_margin(&w, r) - hull_margin(&rw, r)).abs() < 1e-12);
            prop_assert!((c.cone_defect() - rc.cone_defect()).abs() < 1e-12);
            // Points of K_r are mapped onto K_r.
            let v = DVector::from_vec(vec![w.v[0] + 0.1, w.v[1]]).normalize() * r.sqrt();
            let k = ComplexState::from_state(&lift_to_k(&v, r).unwrap()).unwrap().rotate(theta);
            prop_assert!(in_k(&k.to_state(), r, 1e-9).unwrap());
            // Cone membership: on-cone directions stay on the cone.
            if c.z.norm() > 1e-3 {
                let on = ComplexState::new(c.z, c.z * c.z / c.z.norm_sqr() * 0.3);
                prop_assert!(in_wave_cone(&on.to_state(), 1e-9).unwrap().is_some());
                prop_assert!(in_wave_cone(&on.rotate(theta).to_state(), 1e-9).unwrap().is_some());
            }
        }
    }
}
