//! Admissible wave-cone segments through interior states.
//!
//! For `d >= 3` a state with positive hull margin is written as a convex
//! combination of points of `K_r` (Carathéodory), and the segment runs along
//! the difference of the heaviest point and the point that maximises
//! `lambda_i |v_i - v_1|`; its wave vector is orthogonal to both velocities.
//! For `d = 2` the sampled cone directions of the lamination hull are
//! searched directly.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lamination::{cone_direction, in_lamination_hull_c, HullParams};
use crate::state::{hull_margin, in_k, lift_to_k, ComplexState, StatePoint, MEMBERSHIP_TOL};

/// Tuning knobs shared by both segment searches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentConfig {
    /// Candidate points on the sphere `|v|^2 = r`.
    pub sphere_resolution: usize,
    /// Times the sphere resolution is doubled after an infeasible solve.
    pub max_refinements: usize,
    pub rng_seed: u64,
    /// Sampling of the planar hull the center must belong to.
    pub hull: HullParams,
    /// Cheaper nested sampling used to certify candidate planar segments.
    /// Membership under a subset of the samples implies membership under
    /// `hull`, so certificates stay sound.
    pub certify: HullParams,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        SegmentConfig {
            sphere_resolution: 256,
            max_refinements: 3,
            rng_seed: 0,
            hull: HullParams::default(),
            certify: HullParams { depth: 2, n_dirs: 16, n_samples: 8 },
        }
    }
}

#[derive(Debug, Clone)]
pub struct CaratheodoryDecomposition {
    pub points: Vec<StatePoint>,
    pub weights: Vec<f64>,
}

impl CaratheodoryDecomposition {
    pub fn reconstruct(&self) -> StatePoint {
        let d = self.points[0].dim();
        self.points
            .iter()
            .zip(&self.weights)
            .fold(StatePoint::zero(d), |acc, (p, &l)| &acc + &(p * l))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Largest support size of a decomposition in dimension `d`: `d(d+3)/2`.
pub fn max_support(d: usize) -> usize {
    d * (d + 3) / 2
}

#[derive(Debug, Clone)]
pub struct AdmissibleSegment {
    pub center: StatePoint,
    /// Half-segment `w̄ = (v̄, Ū)`: the segment is `center ± direction`.
    pub direction: StatePoint,
    pub wave_vector: DVector<f64>,
    pub q_bar: f64,
    /// Hull margin of the center.
    pub margin: f64,
    /// `|v̄| / (r - |v|^2)`, the measured ratio of direction length to deficit.
    pub deficit_ratio: f64,
}

impl AdmissibleSegment {
    pub fn endpoints(&self) -> (StatePoint, StatePoint) {
        (&self.center - &self.direction, &self.center + &self.direction)
    }

    /// Residuals `(|Ū xi + q̄ xi|, |v̄ . xi|)` of the wave-cone conditions.
    pub fn cone_residuals(&self) -> (f64, f64) {
        let xi = &self.wave_vector;
        let ux = &self.direction.u * xi + xi * self.q_bar;
        (ux.norm(), self.direction.v.dot(xi).abs())
    }

    /// Checks the type invariants: cone residuals, unit wave vector and
    /// endpoint margins of at least half the center margin.
    pub fn validate(&self, r: f64, tol: f64) -> Result<()> {
        let (a, b) = self.cone_residuals();
        let scale = self.direction.norm().max(1.0);
        if a > tol * scale || b > tol * scale || (self.wave_vector.norm() - 1.0).abs() > tol {
            return Err(Error::Numerical(format!("segment leaves the wave cone ({a:e}, {b:e})")));
        }
        if self.direction.v.norm() == 0.0 {
            return Err(Error::Numerical("segment has zero velocity component".into()));
        }
        let (w1, w2) = self.endpoints();
        let floor = 0.5 * self.margin - MARGIN_SLACK * r.max(1.0);
        for w in [w1, w2] {
            let m = hull_margin(&w, r);
            if m < floor {
                return Err(Error::Numerical(format!("endpoint margin {m:e} below {floor:e}")));
            }
        }
        Ok(())
    }
}

/// Absolute slack used when comparing margins computed along a segment.
const MARGIN_SLACK: f64 = 1e-12;

/// Endpoint margin a segment search aims for. Interior states aim just above
/// half their margin so rounding cannot push an endpoint below it; states on
/// the hull boundary allow the slack the other way.
fn endpoint_floor(margin: f64, r: f64) -> f64 {
    let slack = MARGIN_SLACK * r.max(1.0);
    if margin > 4.0 * slack {
        0.5 * margin + slack
    } else {
        0.5 * margin.max(0.0) - slack
    }
}

/// Coordinates of a state in `R^{N+1}`: a leading 1, `v`, the strict upper
/// triangle of `U` and all but the last diagonal entry.
fn coords(w: &StatePoint) -> Vec<f64> {
    let d = w.dim();
    let mut c = Vec::with_capacity(max_support(d));
    c.push(1.0);
    c.extend(w.v.iter());
    for i in 0..d {
        for j in i + 1..d {
            c.push(w.u[(i, j)]);
        }
    }
    for i in 0..d - 1 {
        c.push(w.u[(i, i)]);
    }
    c
}

/// Phase-one simplex with Bland's rule: a basic `x >= 0` with `A x = b`, or
/// `None` when the system is infeasible. `a` is given column-wise.
fn feasible_basic(cols: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let m = b.len();
    let n = cols.len();
    let width = n + m + 1;
    let mut t = vec![vec![0.0; width]; m];
    for i in 0..m {
        let s = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = s * cols[j][i];
        }
        t[i][n + i] = 1.0;
        t[i][width - 1] = s * b[i];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    let eps = 1e-12;
    for _ in 0..50 * (n + m) {
        // Reduced cost of column j for minimising the sum of artificials.
        let entering = (0..n + m).find(|&j| {
            if basis.contains(&j) {
                return false;
            }
            let artificial = if j >= n { 1.0 } else { 0.0 };
            let rc = artificial
                - (0..m).filter(|&i| basis[i] >= n).map(|i| t[i][j]).sum::<f64>();
            // Columns without a usable pivot would stall the ratio test.
            rc < -eps && (0..m).any(|i| t[i][j] > eps)
        });
        let Some(e) = entering else { break };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            if t[i][e] > eps {
                let ratio = t[i][width - 1] / t[i][e];
                let better = match leave {
                    None => true,
                    Some((li, lr)) => ratio < lr - 1e-15 || (ratio <= lr + 1e-15 && basis[i] < basis[li]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let (p, _) = leave?;
        let piv = t[p][e];
        t[p].iter_mut().for_each(|x| *x /= piv);
        let prow = t[p].clone();
        for (i, row) in t.iter_mut().enumerate() {
            if i != p && row[e] != 0.0 {
                let f = row[e];
                row.iter_mut().zip(&prow).for_each(|(x, y)| *x -= f * y);
            }
        }
        basis[p] = e;
        // Basic values are nonnegative; rounding in degenerate pivots can
        // leave them slightly below zero, which would corrupt later ratio
        // tests.
        for row in t.iter_mut() {
            if row[width - 1] < 0.0 && row[width - 1] > -1e-12 {
                row[width - 1] = 0.0;
            }
        }
    }
    let scale = b.iter().fold(1.0f64, |s, x| s.max(x.abs()));
    let infeasibility: f64 =
        (0..m).filter(|&i| basis[i] >= n).map(|i| t[i][width - 1].abs()).sum();
    if infeasibility > 1e-10 * scale {
        return None;
    }
    let mut x = vec![0.0; n];
    for i in 0..m {
        if basis[i] < n {
            x[basis[i]] = t[i][width - 1].max(0.0);
        }
    }
    Some(x)
}

/// Quasi-uniform jittered points on the sphere `|v|^2 = r`.
pub fn sphere_points(d: usize, n: usize, r: f64, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rad = r.sqrt();
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let mut v: DVector<f64> = match d {
                2 => {
                    let a = TAU * i as f64 / n as f64;
                    DVector::from_vec(vec![a.cos(), a.sin()])
                }
                3 => {
                    let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                    let s = (1.0 - y * y).sqrt();
                    let a = golden * i as f64;
                    DVector::from_vec(vec![s * a.cos(), y, s * a.sin()])
                }
                _ => {
                    // Box-Muller normals give uniform directions.
                    DVector::from_fn(d, |_, _| {
                        let (u1, u2): (f64, f64) = (rng.gen_range(1e-300..1.0), rng.gen());
                        (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
                    })
                }
            };
            v.normalize_mut();
            let jitter = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0) * 1e-3);
            v += jitter;
            v.normalize_mut();
            v * rad
        })
        .collect()
}

/// Convex decomposition of `w` over the given points.
pub fn decompose_over(w: &StatePoint, points: &[StatePoint]) -> Result<CaratheodoryDecomposition> {
    if points.is_empty() {
        return Err(Error::InvalidParameter("no candidate points".into()));
    }
    let cols: Vec<Vec<f64>> = points.iter().map(coords).collect();
    let b = coords(w);
    let x = feasible_basic(&cols, &b).ok_or(Error::ResolutionTooCoarse { points: points.len() })?;
    let support: Vec<usize> = (0..x.len()).filter(|&i| x[i] > 1e-14).collect();
    let mut weights: Vec<f64> = support.iter().map(|&i| x[i]).collect();
    // Polish the weights on the support by least squares.
    let a = DMatrix::from_fn(b.len(), support.len(), |i, j| cols[support[j]][i]);
    if let Ok(sol) = a.clone().svd(true, true).solve(&DVector::from_column_slice(&b), 1e-14) {
        if sol.iter().all(|&l| l > 0.0) {
            weights = sol.iter().cloned().collect();
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|l| *l /= total);
    Ok(CaratheodoryDecomposition {
        points: support.iter().map(|&i| points[i].clone()).collect(),
        weights,
    })
}

/// Carathéodory decomposition of `w` over jittered sphere points of `K_r`.
pub fn decompose(w: &StatePoint, r: f64, sphere_resolution: usize, rng_seed: u64) -> Result<CaratheodoryDecomposition> {
    if in_k(w, r, MEMBERSHIP_TOL)? {
        return Ok(CaratheodoryDecomposition { points: vec![w.clone()], weights: vec![1.0] });
    }
    let m = hull_margin(w, r);
    if !(m > 0.0) {
        return Err(Error::Precondition(format!("hull margin {m:e} is not positive")));
    }
    let points = sphere_points(w.dim(), sphere_resolution, r, rng_seed)
        .iter()
        .map(|v| lift_to_k(v, r))
        .collect::<Result<Vec<_>>>()?;
    decompose_over(w, &points)
}

/// Unit vector orthogonal to `a` and `b` (`d >= 3`).
pub fn wave_vector_d3(a: &DVector<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let d = a.len();
    if d < 3 || b.len() != d {
        return Err(Error::InvalidParameter(format!("wave_vector_d3 needs d >= 3, got {d}")));
    }
    // Gram-Schmidt of the standard basis against span{a, b}.
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for v in [a, b] {
        let mut u = v.clone();
        for e in &basis {
            u -= e * e.dot(&u);
        }
        if u.norm() > 1e-12 * v.norm().max(1.0) {
            basis.push(u.normalize());
        }
    }
    let mut best: Option<DVector<f64>> = None;
    for k in 0..d {
        let mut u = DVector::zeros(d);
        u[k] = 1.0;
        for e in &basis {
            u -= e * e.dot(&u);
        }
        if best.as_ref().map_or(true, |b| u.norm() > b.norm()) {
            best = Some(u);
        }
    }
    let mut xi = best.expect("d >= 3").normalize();
    // Fix the sign: first nonzero entry positive.
    if let Some(x) = xi.iter().find(|x| x.abs() > 1e-12) {
        if *x < 0.0 {
            xi = -xi;
        }
    }
    Ok(xi)
}

fn shrink_factor(center: &StatePoint, dir: &StatePoint, r: f64, floor: f64) -> f64 {
    let ok = |s: f64| {
        let step = dir * s;
        hull_margin(&(center + &step), r) >= floor && hull_margin(&(center - &step), r) >= floor
    };
    if ok(1.0) {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..32 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Segment selection from a given decomposition of `w` (`d >= 3`).
pub fn segment_from_decomposition(
    w: &StatePoint,
    r: f64,
    dec: &CaratheodoryDecomposition,
) -> Result<AdmissibleSegment> {
    if dec.len() < 2 {
        return Err(Error::Precondition("state lies on K_r: no segment through it".into()));
    }
    let i1 = (0..dec.len()).max_by(|&a, &b| dec.weights[a].total_cmp(&dec.weights[b])).expect("nonempty");
    let v1 = &dec.points[i1].v;
    let j = (0..dec.len())
        .filter(|&i| i != i1)
        .max_by(|&a, &b| {
            let fa = dec.weights[a] * (&dec.points[a].v - v1).norm();
            let fb = dec.weights[b] * (&dec.points[b].v - v1).norm();
            fa.total_cmp(&fb)
        })
        .expect("two points");
    let raw = &(&dec.points[j] - &dec.points[i1]) * (0.5 * dec.weights[j]);
    let xi = wave_vector_d3(v1, &dec.points[j].v)?;
    let margin = hull_margin(w, r);
    let floor = endpoint_floor(margin, r);
    let s = shrink_factor(w, &raw, r, floor);
    let direction = &raw * s;
    let deficit = r - w.v.norm_squared();
    Ok(AdmissibleSegment {
        center: w.clone(),
        deficit_ratio: direction.v.norm() / deficit,
        direction,
        wave_vector: xi,
        q_bar: 0.0,
        margin,
    })
}

/// Admissible segment through an interior state for `d >= 3`.
pub fn admissible_segment(w: &StatePoint, r: f64, cfg: &SegmentConfig) -> Result<AdmissibleSegment> {
    if w.dim() < 3 {
        return Err(Error::InvalidParameter("admissible_segment needs d >= 3; use the planar search".into()));
    }
    let m = hull_margin(w, r);
    if !(m > 0.0) {
        return Err(Error::Precondition(format!("hull margin {m:e} is not positive")));
    }
    let mut res = cfg.sphere_resolution;
    let mut last = None;
    for attempt in 0..=cfg.max_refinements {
        match decompose(w, r, res, cfg.rng_seed.wrapping_add(attempt as u64)) {
            Ok(dec) => return segment_from_decomposition(w, r, &dec),
            Err(e @ Error::ResolutionTooCoarse { .. }) => {
                last = Some(e);
                res *= 2;
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Largest `t` with both `p ± t dir` keeping margin at least `floor`.
fn half_margin_extent(p: &ComplexState, dir: &ComplexState, r: f64, floor: f64) -> f64 {
    let ok = |t: f64| p.add_scaled(dir, t).hull_margin(r) >= floor && p.add_scaled(dir, -t).hull_margin(r) >= floor;
    let mut hi = r.sqrt().max(1e-12);
    while ok(hi) {
        hi *= 2.0;
        if hi > 1e6 * r.sqrt().max(1.0) {
            return hi;
        }
    }
    let mut lo = 0.0;
    for _ in 0..48 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Number of times a planar candidate length is halved before the direction
/// is abandoned.
const PLANAR_HALVINGS: usize = 24;

/// Admissible segment through a planar state in the sampled lamination hull.
pub fn admissible_segment_2d(w: &StatePoint, r: f64, cfg: &SegmentConfig) -> Result<AdmissibleSegment> {
    if w.dim() != 2 {
        return Err(Error::InvalidParameter(format!("admissible_segment_2d needs d = 2, got {}", w.dim())));
    }
    let p = ComplexState::from_state(w)?;
    if !in_lamination_hull_c(&p, r, &cfg.hull) {
        return Err(Error::Precondition("state is not in the relaxed set".into()));
    }
    let margin = p.hull_margin(r);
    let floor = endpoint_floor(margin, r);
    let mut best: Option<(f64, ComplexState)> = None;
    // Longest candidates first, so later directions are mostly pruned.
    let mut cands: Vec<(f64, ComplexState)> = (0..cfg.hull.n_dirs)
        .map(|i| {
            let dir = cone_direction(i);
            (half_margin_extent(&p, &dir, r, floor), dir)
        })
        .collect();
    cands.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (t_half, dir) in cands {
        let mut t = t_half;
        for _ in 0..PLANAR_HALVINGS {
            if best.as_ref().map_or(false, |(b, _)| t <= *b) || t <= 0.0 {
                break;
            }
            let certified = [1.0, -1.0, 0.5, -0.5]
                .iter()
                .all(|s| in_lamination_hull_c(&p.add_scaled(&dir, s * t), r, &cfg.certify));
            if certified {
                best = Some((t, dir));
                break;
            }
            t *= 0.5;
        }
    }
    let (t, dir) = best.ok_or(Error::HullTooThin)?;
    let direction = ComplexState::new(dir.z * t, dir.zeta * t).to_state();
    let vb = &direction.v;
    let xi = DVector::from_vec(vec![-vb[1], vb[0]]) / vb.norm();
    let q_bar = -(xi.transpose() * &direction.u * &xi)[(0, 0)];
    Ok(AdmissibleSegment {
        center: w.clone(),
        deficit_ratio: vb.norm() / (r - w.v.norm_squared()),
        direction,
        wave_vector: xi,
        q_bar,
        margin,
    })
}

/// Dispatches to the planar or higher-dimensional search.
pub fn find_segment(w: &StatePoint, r: f64, cfg: &SegmentConfig) -> Result<AdmissibleSegment> {
    if w.dim() == 2 {
        admissible_segment_2d(w, r, cfg)
    } else {
        admissible_segment(w, r, cfg)
    }
}
