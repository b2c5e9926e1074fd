//! Localized plane-wave subsolutions and their tiling.
//!
//! A wave with endpoints `w1, w2` (`w̄ = w2 - w1` in the wave cone with wave
//! vector `xi` and pressure coefficient `q̄`) has primary part
//!
//! ```text
//! (v', U', q') = (λ/2π)^{-6} Δ³[(v̄, Ū, q̄) h6(λ xi·x / 2π) φ(x)]
//! ```
//!
//! and correctors `v'' = -∇Δ⁻¹ div v'`, `U'' = R[B(v' + v'') - ∇q' - div U']`.
//! Since `(λ/2π)^{-6} Δ³ h6(λ xi·x/2π) = h0(λ xi·x/2π)` for a unit `xi`, the
//! primary part equals `w̄ h0 φ` up to terms carrying derivatives of `φ`,
//! which are `O(1/λ)`.
//!
//! Several waves sharing `λ` and the profile ladder can be superposed in one
//! pass when their boxes are disjoint: the carriers are summed in physical
//! space and every operator above is applied once to the sum.

use std::f64::consts::TAU;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::segment::AdmissibleSegment;
use crate::spectral::{
    build_profiles, for_each_in_box, MatrixField, ProfileLadder, Region,
    ScalarField, Spectral, TorusGrid, VectorField, DEFAULT_M,
};
use crate::state::{SourceMatrix, StatePoint};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Fewest grid points per oscillation accepted by the builder.
pub const MIN_POINTS_PER_OSCILLATION: f64 = 8.0;

/// Relative tolerance for the wave-cone conditions on `w̄`.
pub const CONE_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct WaveSpec {
    pub w1: StatePoint,
    pub w2: StatePoint,
    pub mu1: f64,
    /// Unit wave vector of `w̄ = w2 - w1`.
    pub wave_vector: DVector<f64>,
    /// Pressure coefficient of `w̄`: `Ū xi + q̄ xi = 0`.
    pub q_bar: f64,
    pub lambda: f64,
    pub region: Region,
    /// Mollification parameter of the profile `h0`.
    pub delta: f64,
    /// Plateau-violation budget of the cutoff; defaults to `delta`.
    pub cutoff_delta: Option<f64>,
    pub b: SourceMatrix,
    pub profile_resolution: usize,
}

impl WaveSpec {
    /// Symmetric split of an admissible segment: `w1, w2 = center ∓ direction`.
    pub fn from_segment(seg: &AdmissibleSegment, lambda: f64, region: Region, delta: f64, b: SourceMatrix) -> Self {
        let (w1, w2) = seg.endpoints();
        WaveSpec {
            w1,
            w2,
            mu1: 0.5,
            wave_vector: seg.wave_vector.clone(),
            q_bar: 2.0 * seg.q_bar,
            lambda,
            region,
            delta,
            cutoff_delta: None,
            b,
            profile_resolution: DEFAULT_M,
        }
    }

    pub fn mu2(&self) -> f64 {
        1.0 - self.mu1
    }

    pub fn w_bar(&self) -> StatePoint {
        &self.w2 - &self.w1
    }

    /// `mu1 w1 + mu2 w2`.
    pub fn center(&self) -> StatePoint {
        &(&self.w1 * self.mu1) + &(&self.w2 * self.mu2())
    }

    pub fn cutoff_delta(&self) -> f64 {
        self.cutoff_delta.unwrap_or(self.delta)
    }

    pub fn validate(&self, grid: &TorusGrid) -> Result<()> {
        let d = grid.dim();
        if self.w1.dim() != d || self.w2.dim() != d || self.wave_vector.len() != d || self.b.dim() != d {
            return Err(Error::InvalidParameter("wave spec dimension does not match the grid".into()));
        }
        if !(self.mu1 > 0.0 && self.mu1 < 1.0) {
            return Err(Error::InvalidParameter(format!("mu1 = {} must lie in (0, 1)", self.mu1)));
        }
        let wb = self.w_bar();
        let scale = wb.norm();
        if scale == 0.0 || wb.v.norm() == 0.0 {
            return Err(Error::Precondition("degenerate segment: w2 - w1 has zero velocity part".into()));
        }
        if (self.wave_vector.norm() - 1.0).abs() > CONE_TOL {
            return Err(Error::Precondition("wave vector is not a unit vector".into()));
        }
        let res_u = (&wb.u * &self.wave_vector + &self.wave_vector * self.q_bar).norm();
        let res_v = wb.v.dot(&self.wave_vector).abs();
        if res_u > CONE_TOL * scale || res_v > CONE_TOL * scale {
            return Err(Error::Precondition(format!(
                "w2 - w1 is not in the wave cone (residuals {res_u:e}, {res_v:e})"
            )));
        }
        check_lambda(grid, self.lambda, &self.wave_vector)?;
        // A plane wave only closes up along an axis the box wraps fully if it
        // oscillates an integer number of times along it.
        for a in 0..d {
            let osc = self.lambda * self.wave_vector[a];
            if self.region.len[a] >= TAU && (osc - osc.round()).abs() > 1e-9 {
                return Err(Error::InvalidParameter(format!(
                    "region covers axis {a} but lambda * xi = {osc} is not an integer"
                )));
            }
        }
        Ok(())
    }
}

fn check_lambda(grid: &TorusGrid, lambda: f64, xi: &DVector<f64>) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("frequency lambda = {lambda} must be positive")));
    }
    for a in 0..grid.dim() {
        let osc = lambda * xi[a].abs();
        if osc > 0.0 && (grid.dims()[a] as f64) < MIN_POINTS_PER_OSCILLATION * osc * (1.0 - 1e-12) {
            return Err(Error::Resolution(format!(
                "lambda = {lambda} under-resolved: axis {a} has {} points for {osc:.3} oscillations, \
                 need at least {MIN_POINTS_PER_OSCILLATION} points per oscillation",
                grid.dims()[a]
            )));
        }
    }
    Ok(())
}

/// One cell of a superposed wave.
#[derive(Debug, Clone)]
pub struct WaveCell {
    pub region: Region,
    pub w_bar: StatePoint,
    pub wave_vector: DVector<f64>,
    pub q_bar: f64,
    /// Phase shift (in periods) added to `λ xi·x / 2π`.
    pub phase: f64,
}

/// Fields of a built (possibly superposed) wave.
#[derive(Debug, Clone)]
pub struct WaveFields {
    pub v: VectorField,
    pub u: MatrixField,
    pub q: ScalarField,
    /// Primary parts `(v', U')`, when requested.
    pub primary: Option<(VectorField, MatrixField)>,
}

/// Builds the superposition of waves on disjoint cells with common `λ`.
pub fn build_cells(
    grid: &TorusGrid,
    cells: &[WaveCell],
    ladder: &ProfileLadder,
    lambda: f64,
    cutoff_delta: f64,
    b: &SourceMatrix,
    keep_primary: bool,
) -> Result<WaveFields> {
    let d = grid.dim();
    let npairs = d * (d + 1) / 2;
    let len = grid.len();
    let mut carrier_v = vec![vec![0.0; len]; d];
    let mut carrier_u = vec![vec![0.0; len]; npairs];
    let mut carrier_q = vec![0.0; len];
    let mut touched = vec![false; len];
    let mut overlap = false;
    for cell in cells {
        check_lambda(grid, lambda, &cell.wave_vector)?;
        let rho = cell.region.ramp_width(cutoff_delta)?;
        cell.region.check_resolution(grid, rho)?;
        // Per-axis phase contribution λ xi_a (lo_a + t_a) / 2π.
        let axes: Vec<Vec<(usize, f64, f64)>> = (0..d)
            .map(|a| {
                let c = lambda * cell.wave_vector[a] / TAU;
                cell.region
                    .axis_profile(grid, a, rho)
                    .into_iter()
                    .map(|(i, f, t)| (i, f, c * (cell.region.lo[a] + t)))
                    .collect()
            })
            .collect();
        let ubar: Vec<f64> = (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).map(|(i, j)| cell.w_bar.u[(i, j)]).collect();
        let vbar: Vec<f64> = cell.w_bar.v.iter().cloned().collect();
        for_each_in_box(grid, &axes, |n, phi, s| {
            if touched[n] {
                overlap = true;
            }
            touched[n] = true;
            let c = phi * ladder.eval(6, s + cell.phase);
            for a in 0..d {
                carrier_v[a][n] += vbar[a] * c;
            }
            for p in 0..npairs {
                carrier_u[p][n] += ubar[p] * c;
            }
            carrier_q[n] += cell.q_bar * c;
        });
    }
    if overlap {
        return Err(Error::InvalidParameter("wave cells overlap".into()));
    }
    drop(touched);

    let sp = Spectral::new(grid);
    // Spectra of v, the upper triangle of U, and q, in that order.
    let carriers: Vec<&[f64]> = carrier_v.iter().chain(&carrier_u).chain([&carrier_q]).map(|c| c.as_slice()).collect();
    let mut hat = sp.forward_many(&carriers);
    drop((carrier_v, carrier_u, carrier_q));
    let iq = d + npairs;
    let scale = (lambda / TAU).powi(-6);
    // Primary spectra.
    for n in 0..len {
        let kk: f64 = sp.kvec(n).iter().map(|x| x * x).sum();
        let m = -scale * kk * kk * kk;
        for c in hat.iter_mut() {
            c[n] *= m;
        }
    }
    let primary = if keep_primary {
        let mut fields = sp.inverse_many(&hat[..iq]);
        let upper = fields.split_off(d);
        Some((
            VectorField::from_components(grid, fields)?,
            MatrixField::from_components(grid, crate::spectral::expand_sym(d, upper))?,
        ))
    } else {
        None
    };
    // Correctors, fused mode by mode.
    let mut vk = vec![ZERO; d];
    let mut uk = vec![ZERO; d * d];
    let mut fk = vec![ZERO; d];
    let mut sk = vec![ZERO; npairs];
    for n in 0..len {
        let k = sp.kvec(n);
        let kk: f64 = k.iter().map(|x| x * x).sum();
        if kk == 0.0 {
            for c in hat.iter_mut() {
                c[n] = ZERO;
            }
            continue;
        }
        let kv: Complex64 = (0..d).map(|a| k[a] * hat[a][n]).sum();
        for a in 0..d {
            vk[a] = hat[a][n] - k[a] * kv / kk;
            hat[a][n] = vk[a];
        }
        let mut p = d;
        for i in 0..d {
            for j in i..d {
                uk[i * d + j] = hat[p][n];
                uk[j * d + i] = hat[p][n];
                p += 1;
            }
        }
        for i in 0..d {
            let mut f = -I * k[i] * hat[iq][n];
            for j in 0..d {
                f += b.entry(i, j) * vk[j] - I * uk[i * d + j] * k[j];
            }
            fk[i] = f;
        }
        crate::spectral::anti_div_mode(k, &fk, &mut sk);
        for p in 0..npairs {
            hat[d + p][n] += sk[p];
        }
    }
    let mut fields = sp.inverse_many(&hat);
    drop(hat);
    let q = ScalarField::from_vec(grid, fields.pop().expect("q field"))?;
    let upper = fields.split_off(d);
    let u = MatrixField::from_components(grid, crate::spectral::expand_sym(d, upper))?;
    let v = VectorField::from_components(grid, fields)?;
    Ok(WaveFields { v, u, q, primary })
}

#[derive(Debug, Clone, Serialize)]
pub struct WaveDiagnostics {
    /// Sup over the box of the distance from `w + w̃(x)` to `[w1, w2]`.
    pub sup_segment_dist: f64,
    /// Volumes of `{|w + w̃ - w_i| < |w2 - w1|/4}` inside the box.
    pub region_volumes: (f64, f64),
    /// `‖div v‖₂ / ‖v‖₂`.
    pub residual_div_v: f64,
    /// `‖div U + ∇q - B v‖₂ / |w2 - w1|`.
    pub residual_relaxed: f64,
    pub mean_v: f64,
    pub mean_u: f64,
    /// Fraction of the L² mass of `(v', U')` outside the box.
    pub primary_mass_outside: f64,
    /// Sup over nodes outside the box of `|(v'', U'')|`.
    pub tail_sup_outside: f64,
}

#[derive(Debug, Clone)]
pub struct LocalizedWave {
    pub v: VectorField,
    pub u: MatrixField,
    pub q: ScalarField,
    pub primary_v: VectorField,
    pub primary_u: MatrixField,
    pub diagnostics: WaveDiagnostics,
}

/// Distance from `p` to the segment `[a, b]` in the `(v, U)` Euclidean norm.
pub fn segment_distance(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let (mut ab2, mut apab) = (0.0, 0.0);
    for i in 0..p.len() {
        ab2 += (b[i] - a[i]).powi(2);
        apab += (p[i] - a[i]) * (b[i] - a[i]);
    }
    let t = if ab2 > 0.0 { (apab / ab2).clamp(0.0, 1.0) } else { 0.0 };
    (0..p.len()).map(|i| (p[i] - a[i] - t * (b[i] - a[i])).powi(2)).sum::<f64>().sqrt()
}

fn flat(w: &StatePoint) -> Vec<f64> {
    w.v.iter().cloned().chain(w.u_row_major()).collect()
}

/// `(v, U)` at node `n` flattened as `v` then row-major `U`.
/// RMS norms of `div v` and `div U + ∇q - Bv`, by Parseval from one batch
/// of forward transforms.
fn identity_residuals(f: &WaveFields, b: &SourceMatrix) -> (f64, f64) {
    let grid = f.v.grid();
    let d = grid.dim();
    let len = grid.len();
    let sp = Spectral::new(grid);
    let comps: Vec<&[f64]> = f
        .v
        .components()
        .iter()
        .chain(f.u.components())
        .map(|c| c.as_slice())
        .chain([f.q.data()])
        .collect();
    // Spectra of div v and of the relaxed residual, accumulated term by term.
    let mut dv = vec![ZERO; len];
    let mut rel = vec![vec![ZERO; len]; d];
    sp.forward_each(&comps, |c, hat| {
        for n in 0..len {
            let k = sp.kvec(n);
            let h = hat[n];
            if c < d {
                dv[n] += I * k[c] * h;
                for (i, r) in rel.iter_mut().enumerate() {
                    r[n] -= b.entry(i, c) * h;
                }
            } else if c < d + d * d {
                let (i, j) = ((c - d) / d, (c - d) % d);
                rel[i][n] += I * k[j] * h;
            } else {
                for (i, r) in rel.iter_mut().enumerate() {
                    r[n] += I * k[i] * h;
                }
            }
        }
    });
    let nn = len as f64;
    let sv: f64 = dv.iter().map(|z| z.norm_sqr()).sum();
    let sr: f64 = rel.iter().flatten().map(|z| z.norm_sqr()).sum();
    (sv.sqrt() / nn, sr.sqrt() / nn)
}

fn node_state(v: &VectorField, u: &MatrixField, n: usize, out: &mut [f64]) {
    let d = v.grid().dim();
    v.at(n, &mut out[..d]);
    u.at(n, &mut out[d..]);
}

fn in_box_mask(grid: &TorusGrid, region: &Region) -> Vec<bool> {
    let mut x = vec![0.0; grid.dim()];
    (0..grid.len())
        .map(|n| {
            grid.coords_into(n, &mut x);
            region.contains(&x)
        })
        .collect()
}

/// Region statistics of a built wave.
#[derive(Debug, Clone, Serialize)]
pub struct RegionStats {
    /// Volumes at threshold `min(ε/2, |w2 - w1|/4)`.
    pub vol1: f64,
    pub vol2: f64,
    /// Volumes at threshold `min(ε, |w2 - w1|/2)`.
    pub vol1_eps: f64,
    pub vol2_eps: f64,
    pub sup_dist: f64,
    pub region_volume: f64,
}

pub fn region_stats(v: &VectorField, u: &MatrixField, spec: &WaveSpec, eps: f64) -> RegionStats {
    let grid = v.grid();
    let d = grid.dim();
    let w = flat(&spec.center());
    let a = flat(&spec.w1);
    let b = flat(&spec.w2);
    let len = spec.w_bar().norm();
    let t_proof = (0.5 * eps).min(0.25 * len);
    let t_eps = eps.min(0.5 * len);
    let mask = in_box_mask(grid, &spec.region);
    let mut p = vec![0.0; d + d * d];
    let (mut n1, mut n2, mut e1, mut e2) = (0usize, 0usize, 0usize, 0usize);
    let mut sup: f64 = 0.0;
    for n in 0..grid.len() {
        if !mask[n] {
            continue;
        }
        node_state(v, u, n, &mut p);
        for (x, c) in p.iter_mut().zip(&w) {
            *x += c;
        }
        let dist = |q: &[f64]| p.iter().zip(q).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let (d1, d2) = (dist(&a), dist(&b));
        n1 += (d1 < t_proof) as usize;
        n2 += (d2 < t_proof) as usize;
        e1 += (d1 < t_eps) as usize;
        e2 += (d2 < t_eps) as usize;
        sup = sup.max(segment_distance(&p, &a, &b));
    }
    let cv = grid.cell_volume();
    RegionStats {
        vol1: n1 as f64 * cv,
        vol2: n2 as f64 * cv,
        vol1_eps: e1 as f64 * cv,
        vol2_eps: e2 as f64 * cv,
        sup_dist: sup,
        region_volume: spec.region.volume(),
    }
}

/// Builds one localized wave and fills its diagnostics.
pub fn build_localized_wave(spec: &WaveSpec, grid: &TorusGrid) -> Result<LocalizedWave> {
    spec.validate(grid)?;
    let ladder = build_profiles(spec.mu1, spec.mu2(), spec.delta, spec.profile_resolution)?;
    let cell = WaveCell {
        region: spec.region.clone(),
        w_bar: spec.w_bar(),
        wave_vector: spec.wave_vector.clone(),
        q_bar: spec.q_bar,
        phase: 0.0,
    };
    let mut fields = build_cells(grid, &[cell], &ladder, spec.lambda, spec.cutoff_delta(), &spec.b, true)?;
    let (pv, pu) = fields.primary.take().expect("requested");
    let d = grid.dim();

    // Identities, recomputed from the physical fields.
    let (div_v, relaxed) = identity_residuals(&fields, &spec.b);
    let wbar_norm = spec.w_bar().norm();

    let mask = in_box_mask(grid, &spec.region);
    let (mut inside, mut outside, mut tail) = (0.0, 0.0, 0.0f64);
    let mut p = vec![0.0; d + d * d];
    let mut full = vec![0.0; d + d * d];
    for n in 0..grid.len() {
        node_state(&pv, &pu, n, &mut p);
        let m: f64 = p.iter().map(|x| x * x).sum();
        if mask[n] {
            inside += m;
        } else {
            outside += m;
            node_state(&fields.v, &fields.u, n, &mut full);
            let t: f64 = full.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            tail = tail.max(t);
        }
    }
    let wave = LocalizedWave {
        diagnostics: WaveDiagnostics {
            sup_segment_dist: 0.0,
            region_volumes: (0.0, 0.0),
            residual_div_v: div_v / fields.v.l2().max(f64::MIN_POSITIVE),
            residual_relaxed: relaxed / wbar_norm,
            mean_v: fields.v.mean().iter().fold(0.0, |m, x| m.max(x.abs())),
            mean_u: fields.u.mean().iter().fold(0.0, |m, x| m.max(x.abs())),
            primary_mass_outside: outside / (inside + outside).max(f64::MIN_POSITIVE),
            tail_sup_outside: tail,
        },
        v: fields.v,
        u: fields.u,
        q: fields.q,
        primary_v: pv,
        primary_u: pu,
    };
    let stats = region_stats(&wave.v, &wave.u, spec, f64::INFINITY);
    let mut wave = wave;
    wave.diagnostics.sup_segment_dist = stats.sup_dist;
    wave.diagnostics.region_volumes = (stats.vol1, stats.vol2);
    Ok(wave)
}

/// Sup over the torus of `|w̃(x) - w̄ h0(λ xi·x/2π) φ(x)|`.
pub fn leading_order_deviation(wave: &LocalizedWave, spec: &WaveSpec) -> Result<f64> {
    let grid = wave.v.grid();
    let d = grid.dim();
    let ladder = build_profiles(spec.mu1, spec.mu2(), spec.delta, spec.profile_resolution)?;
    let rho = spec.region.ramp_width(spec.cutoff_delta())?;
    let wb = flat(&spec.w_bar());
    let mut lead = vec![0.0; grid.len()];
    let axes: Vec<Vec<(usize, f64, f64)>> = (0..d)
        .map(|a| {
            let c = spec.lambda * spec.wave_vector[a] / TAU;
            spec.region
                .axis_profile(grid, a, rho)
                .into_iter()
                .map(|(i, f, t)| (i, f, c * (spec.region.lo[a] + t)))
                .collect()
        })
        .collect();
    for_each_in_box(grid, &axes, |n, phi, s| lead[n] = phi * ladder.eval(0, s));
    let mut p = vec![0.0; d + d * d];
    let mut worst: f64 = 0.0;
    for n in 0..grid.len() {
        node_state(&wave.v, &wave.u, n, &mut p);
        let e: f64 = p.iter().zip(&wb).map(|(x, w)| (x - w * lead[n]).powi(2)).sum::<f64>().sqrt();
        worst = worst.max(e);
    }
    Ok(worst)
}

/// Parameters shared by all cells of a tiling.
#[derive(Debug, Clone)]
pub struct TileTemplate {
    pub grid: TorusGrid,
    pub wave_vector: DVector<f64>,
    pub q_bar: f64,
    /// Oscillations per cell side: `λ_k = lambda_per_cell · 2^k`.
    pub lambda_per_cell: f64,
    pub delta: f64,
    /// Cutoff budget as a fraction of the cell volume.
    pub cutoff_fraction: f64,
    pub b: SourceMatrix,
}

#[derive(Debug, Clone)]
pub struct TileResult {
    pub v: VectorField,
    pub u: MatrixField,
    pub q: ScalarField,
    /// Largest absolute torus mean over all components of `(v, U)`.
    pub mean: f64,
    /// Torus average of `|w_k|²`.
    pub l2_mass: f64,
    /// Sup distance of `w_k(x)` to `[-w̄, w̄]`.
    pub sup_dist: f64,
    /// `|<w_k, g_j>|` for the fixed low-mode test functions.
    pub pairings: Vec<f64>,
    /// `2^{-kd} / k`, the nominal accuracy of the cell construction.
    pub eps: f64,
    pub lambda: f64,
}

/// Poisson kernel `1 + 2 Σ r^m cos(mθ)`.
fn poisson(r: f64, theta: f64) -> f64 {
    (1.0 - r * r) / (1.0 - 2.0 * r * theta.cos() + r * r)
}

/// Five fixed smooth test functions on the torus, dominated by low modes.
///
/// A tiling at level `k` is `2π/2^k`-periodic, so it is orthogonal to every
/// trigonometric polynomial of degree below `2^k`; these functions instead
/// carry all modes with weight `0.9^|m|`, which keeps the weak decay of the
/// tilings visible above rounding.
pub fn low_mode_tests(x: &[f64]) -> [f64; 5] {
    const R: f64 = 0.9;
    let (x0, x1) = (x[0], x[1]);
    // Phase offsets keep each function from being even or odd in x1.
    [
        poisson(R, x1 + 0.7),
        poisson(R, x0 + x1 + 1.9),
        x0.cos() * poisson(R, x1 - 0.4),
        poisson(R, x0 + 2.0 * x1 + 2.3),
        (1.0 + 0.3 * x0.sin()) * poisson(R, x1 - x0 + 1.1),
    ]
}

/// Tiles `2^{kd}` translated copies of one localized wave with
/// `w1 = -w̄, w2 = w̄, mu = 1/2` (so the base state is 0).
pub fn tile_unit_cube(w_bar: &StatePoint, k: u32, template: &TileTemplate) -> Result<TileResult> {
    if k < 1 {
        return Err(Error::InvalidParameter("tiling level k must be at least 1".into()));
    }
    let grid = &template.grid;
    let d = grid.dim();
    let per_axis = 1usize << k;
    if grid.dims().iter().any(|&n| n % per_axis != 0) {
        return Err(Error::Resolution(format!(
            "grid {:?} does not split into {per_axis} cells per axis",
            grid.dims()
        )));
    }
    let side = TAU / per_axis as f64;
    let lambda = template.lambda_per_cell * per_axis as f64;
    let ladder = build_profiles(0.5, 0.5, template.delta, DEFAULT_M)?;
    let w_full = w_bar * 2.0;
    let cutoff_delta = template.cutoff_fraction * side.powi(d as i32);
    let n_cells = per_axis.pow(d as u32);
    let mut cells = Vec::with_capacity(n_cells);
    for c in 0..n_cells {
        let mut rem = c;
        let lo: Vec<f64> = (0..d)
            .map(|_| {
                let j = rem % per_axis;
                rem /= per_axis;
                j as f64 * side
            })
            .collect();
        let phase = -lambda * lo.iter().zip(template.wave_vector.iter()).map(|(a, b)| a * b).sum::<f64>() / TAU;
        cells.push(WaveCell {
            region: Region::cube(lo, side)?,
            w_bar: w_full.clone(),
            wave_vector: template.wave_vector.clone(),
            q_bar: 2.0 * template.q_bar,
            phase,
        });
    }
    let f = build_cells(grid, &cells, &ladder, lambda, cutoff_delta, &template.b, false)?;
    let mean = f.v.mean().into_iter().chain(f.u.mean()).fold(0.0f64, |m, x| m.max(x.abs()));
    let l2_mass = f.v.l2().powi(2) + f.u.l2().powi(2);
    let a = flat(&-w_bar);
    let b = flat(w_bar);
    let mut p = vec![0.0; d + d * d];
    let mut sup: f64 = 0.0;
    let mut pair = [0.0f64; 5];
    let mut pair_comp = vec![[0.0f64; 5]; d + d * d];
    let mut x = vec![0.0; d];
    for n in 0..grid.len() {
        node_state(&f.v, &f.u, n, &mut p);
        sup = sup.max(segment_distance(&p, &a, &b));
        grid.coords_into(n, &mut x);
        let g = low_mode_tests(&x);
        for (c, pc) in pair_comp.iter_mut().enumerate() {
            for j in 0..5 {
                pc[j] += p[c] * g[j];
            }
        }
    }
    let inv = 1.0 / grid.len() as f64;
    for j in 0..5 {
        pair[j] = pair_comp.iter().map(|pc| (pc[j] * inv).powi(2)).sum::<f64>().sqrt();
    }
    Ok(TileResult {
        v: f.v,
        u: f.u,
        q: f.q,
        mean,
        l2_mass,
        sup_dist: sup,
        pairings: pair.to_vec(),
        eps: (2f64).powi(-((k as i32) * d as i32)) / k as f64,
        lambda,
    })
}
