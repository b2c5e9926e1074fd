//! Finite-depth lamination hull of the planar relaxed set.
//!
//! The base set is the rotation orbit of
//!
//! ```text
//! V_r = { (z, c) : f_r(z, c) < 1, 0 < |c| < r/2 }
//! ```
//!
//! and each level adds segments whose endpoints lie in the previous level and
//! differ by a wave-cone direction. Cone directions and segment parameters
//! are drawn from nested low-discrepancy sequences, so enlarging `n_dirs` or
//! `n_samples` only ever adds candidates and membership is monotone in every
//! parameter.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::state::{f_r, ComplexState, StatePoint};

/// Sampling parameters of the lamination hull.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HullParams {
    pub depth: usize,
    pub n_dirs: usize,
    pub n_samples: usize,
}

impl Default for HullParams {
    fn default() -> Self {
        HullParams { depth: 2, n_dirs: 64, n_samples: 32 }
    }
}

/// Radical inverse of `i` in base `b`.
pub(crate) fn radical_inverse(mut i: u64, b: u64) -> f64 {
    let mut inv = 1.0 / b as f64;
    let mut out = 0.0;
    while i > 0 {
        out += (i % b) as f64 * inv;
        i /= b;
        inv /= b as f64;
    }
    out
}

/// The `i`-th sampled planar cone direction, normalised to `|z| = 1`.
///
/// Every direction `(e^{i a}, s e^{2 i a})` with real `s` satisfies
/// `Im(z^2 conj(zeta)) = 0`; pure-`zeta` directions are never produced.
pub fn cone_direction(i: usize) -> ComplexState {
    let alpha = PI * radical_inverse(i as u64 + 1, 2);
    let beta = PI * (radical_inverse(i as u64 + 1, 3) - 0.5);
    let rot = Complex64::from_polar(1.0, alpha);
    ComplexState::new(rot, rot * rot * beta.tan())
}

/// Largest `t` with `p + t dir` still strictly inside the convex hull of
/// `K_r`, found by bisection on the concave hull margin.
pub(crate) fn hull_exit(p: &ComplexState, dir: &ComplexState, r: f64) -> f64 {
    if p.hull_margin(r) <= 0.0 {
        return 0.0;
    }
    let mut hi = 1.0 / dir.z.norm().max(1e-300) * (r.sqrt() + p.z.norm()) + 1e-12;
    while p.add_scaled(dir, hi).hull_margin(r) > 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..48 {
        let mid = 0.5 * (lo + hi);
        if p.add_scaled(dir, mid).hull_margin(r) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Membership in the rotation orbit of `V_r`.
pub fn in_base_set(p: &ComplexState, r: f64) -> bool {
    let m = p.zeta.norm();
    if !(m > 0.0) || m >= 0.5 * r {
        return false;
    }
    let arg = p.zeta.arg();
    // zeta = c e^{2 i theta} with c = +|zeta| or c = -|zeta|.
    for (c, theta) in [(m, 0.5 * arg), (-m, 0.5 * (arg + PI))] {
        let z = p.z * Complex64::from_polar(1.0, -theta);
        if let Ok(f) = f_r(z, c, r) {
            if f < 1.0 {
                return true;
            }
        }
    }
    false
}

fn member(p: &ComplexState, r: f64, depth: usize, params: &HullParams) -> bool {
    if p.hull_margin(r) <= 0.0 {
        return false;
    }
    if in_base_set(p, r) {
        return true;
    }
    if depth == 0 {
        return false;
    }
    if member(p, r, depth - 1, params) {
        return true;
    }
    let samples: Vec<f64> =
        (0..params.n_samples).map(|j| radical_inverse(j as u64 + 1, 2)).collect();
    for i in 0..params.n_dirs {
        let dir = cone_direction(i);
        let neg = ComplexState::new(-dir.z, -dir.zeta);
        let t_plus = hull_exit(p, &dir, r);
        if t_plus <= 0.0 {
            continue;
        }
        let hit = |d: &ComplexState, tmax: f64| {
            samples.iter().any(|s| member(&p.add_scaled(d, s * tmax), r, depth - 1, params))
        };
        if !hit(&dir, t_plus) {
            continue;
        }
        let t_minus = hull_exit(p, &neg, r);
        if t_minus > 0.0 && hit(&neg, t_minus) {
            return true;
        }
    }
    false
}

/// Planar state membership in the level-`depth` lamination hull.
pub fn in_lamination_hull_c(p: &ComplexState, r: f64, params: &HullParams) -> bool {
    member(p, r, params.depth, params)
}

/// Membership of a d = 2 state in the sampled lamination hull of level
/// `depth`.
pub fn in_lamination_hull(
    w: &StatePoint,
    r: f64,
    depth: usize,
    n_dirs: usize,
    n_samples: usize,
) -> Result<bool> {
    if w.dim() != 2 {
        return Err(Error::InvalidParameter(format!(
            "lamination hull is only defined for d = 2, got d = {}",
            w.dim()
        )));
    }
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("energy level r = {r} must be positive")));
    }
    let p = ComplexState::from_state(w)?;
    Ok(in_lamination_hull_c(&p, r, &HullParams { depth, n_dirs, n_samples }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::state::{hull_margin, lift_to_k};

    fn c(z: (f64, f64), zeta: (f64, f64)) -> ComplexState {
        ComplexState::new(Complex64::new(z.0, z.1), Complex64::new(zeta.0, zeta.1))
    }

    #[test]
    fn sampled_directions_lie_on_the_cone() {
        for i in 0..256 {
            let d = cone_direction(i);
            assert!(d.cone_defect().abs() < 1e-12);
            assert!(d.z.norm() > 0.5);
        }
    }

    #[test]
    fn base_set_points_at_depth_zero() {
        let p = c((0.3, 0.0), (0.2, 0.0));
        assert!(in_base_set(&p, 1.0));
        for theta in [0.3, 1.1, 2.9] {
            let q = p.rotate(theta);
            assert!(in_lamination_hull(&q.to_state(), 1.0, 0, 64, 32).unwrap());
        }
        // c = 0 is excluded from the base set.
        assert!(!in_base_set(&c((0.1, 0.0), (0.0, 0.0)), 1.0));
    }

    #[test]
    fn origin_needs_one_level() {
        let w = StatePoint::zero(2);
        assert!(!in_lamination_hull(&w, 1.0, 0, 64, 32).unwrap());
        assert!(in_lamination_hull(&w, 1.0, 1, 64, 32).unwrap());
        assert!(in_lamination_hull(&w, 1.0, 2, 64, 32).unwrap());
    }

    #[test]
    fn explicit_segment_through_origin() {
        // (eps, 1/4) and (-eps, -1/4) are both in V_1 and differ by a cone direction.
        let eps = 0.1;
        let a = c((eps, 0.0), (0.25, 0.0));
        let b = c((-eps, 0.0), (-0.25, 0.0));
        assert!(in_base_set(&a, 1.0) && in_base_set(&b, 1.0));
        let diff = c((2.0 * eps, 0.0), (0.5, 0.0));
        assert!(diff.cone_defect().abs() < 1e-15);
    }

    #[test]
    fn outside_convex_hull_is_never_in() {
        let w = c((1.2, 0.0), (0.0, 0.0)).to_state();
        for depth in 0..3 {
            assert!(!in_lamination_hull(&w, 1.0, depth, 16, 8).unwrap());
        }
    }

    #[test]
    fn wrong_dimension_rejected() {
        assert!(in_lamination_hull(&StatePoint::zero(3), 1.0, 1, 8, 8).is_err());
    }

    #[test]
    fn base_set_inside_convex_hull() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut hits = 0;
        for _ in 0..5000 {
            let p = c((rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)), (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)));
            if in_base_set(&p, 1.0) {
                hits += 1;
                assert!(p.hull_margin(1.0) > 0.0, "{p:?}");
            }
        }
        assert!(hits > 100);
    }

    #[test]
    fn k_points_are_not_members() {
        let w = lift_to_k(&DVector::from_vec(vec![0.6, 0.8]), 1.0).unwrap();
        assert!(hull_margin(&w, 1.0).abs() < 1e-12);
        assert!(!in_lamination_hull(&w, 1.0, 2, 16, 8).unwrap());
    }

    #[test]
    fn monotone_in_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let p = c((rng.gen_range(-0.7..0.7), rng.gen_range(-0.7..0.7)), (rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)));
            let at = |depth, n_dirs, n_samples| in_lamination_hull_c(&p, 1.0, &HullParams { depth, n_dirs, n_samples });
            let base = at(1, 8, 4);
            if base {
                assert!(at(2, 8, 4));
                assert!(at(1, 16, 4));
                assert!(at(1, 8, 8));
            }
        }
    }
}
