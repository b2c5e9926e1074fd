//! The convex-integration iteration: initial subsolutions, sweeps of
//! localized waves over a cube cover, and diagnostics of the result.

mod config;
mod sweep;
mod weak;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lamination::in_lamination_hull;
use crate::linalg::{lambda_max_sym, margin_raw};
use crate::spectral::{
    div, div_matrix, grad, hminus1_distance, inv_laplacian, MatrixField, ScalarField, Spectral, TorusGrid, VectorField,
};
use crate::state::{SourceMatrix, StatePoint};

pub use config::{geometric_schedule, BaseFlow, Mode, RunConfig, SweepSpec, Tolerances};
pub use sweep::{sweep, SweepReport};
pub use weak::weak_residual;

/// One line of the per-sweep diagnostics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    /// 0 for the initial state.
    pub sweep: usize,
    /// Torus average of `e - |v|^2`.
    pub total_deficit: f64,
    pub sup_deficit: f64,
    pub residual_div_v: f64,
    pub residual_relaxed: f64,
    pub weak_residual: f64,
    pub hminus1_to_v0: f64,
    pub l2_to_v0: f64,
    /// Smallest hull margin over nodes whose deficit exceeds the floor.
    pub min_hull_margin: f64,
    /// `max |v|^2 - max e`; positive values break the a priori bound.
    pub speed_excess: f64,
    /// `max(-lambda_min(U)) - max e / d`; positive values break the bound.
    pub u_eig_excess: f64,
    pub cells_total: usize,
    pub cells_waved: usize,
    pub cells_skipped: usize,
    pub backoffs: usize,
    pub lambda: f64,
    pub wall_time: f64,
}

/// State of the iteration: the subsolution `(v, U, q)` and its history.
#[derive(Debug, Clone)]
pub struct IterationState {
    pub v: VectorField,
    pub u: MatrixField,
    pub q: ScalarField,
    /// Energy profile sampled on the grid.
    pub e: ScalarField,
    /// Base flow the H⁻¹ distance is measured against.
    pub v0: VectorField,
    pub sweep: usize,
    pub history: Vec<DiagnosticsRecord>,
}

impl IterationState {
    pub fn last(&self) -> Option<&DiagnosticsRecord> {
        self.history.last()
    }
}

fn rms(f: &VectorField) -> f64 {
    f.l2()
}

/// `B v` as a vector field.
pub(crate) fn apply_b(b: &SourceMatrix, v: &VectorField) -> VectorField {
    let d = v.grid().dim();
    let mut out = VectorField::zeros(v.grid());
    for i in 0..d {
        for j in 0..d {
            let bij = b.entry(i, j);
            if bij != 0.0 {
                let (src, dst) = (v.comp(j).to_vec(), out.comp_mut(i));
                dst.iter_mut().zip(&src).for_each(|(o, s)| *o += bij * s);
            }
        }
    }
    out
}

/// `v ⊗ v` as a matrix field.
pub(crate) fn outer(v: &VectorField) -> MatrixField {
    let d = v.grid().dim();
    let mut m = MatrixField::zeros(v.grid());
    for i in 0..d {
        for j in 0..d {
            let prod: Vec<f64> = v.comp(i).iter().zip(v.comp(j)).map(|(a, b)| a * b).collect();
            m.comp_mut(i, j).copy_from_slice(&prod);
        }
    }
    m
}

/// Relative residual `|div v| / |∇v|` (absolute for constant fields).
/// Torus RMS of the full gradient of the given components, by Parseval.
fn grad_rms(comps: &[&[f64]], grid: &TorusGrid) -> f64 {
    let sp = Spectral::new(grid);
    let nn = grid.len() as f64;
    let mut sum = 0.0;
    for c in comps {
        let hat = sp.forward(c);
        for (n, z) in hat.iter().enumerate() {
            let kk: f64 = sp.kvec(n).iter().map(|k| k * k).sum();
            sum += kk * z.norm_sqr();
        }
    }
    (sum / (nn * nn)).sqrt()
}

/// `|div v|` relative to `|∇v|`.
fn div_residual(v: &VectorField) -> f64 {
    let d = v.grid().dim();
    let dv = div(v).l2();
    let comps: Vec<&[f64]> = (0..d).map(|a| v.comp(a)).collect();
    let scale = grad_rms(&comps, v.grid());
    if scale == 0.0 {
        dv
    } else {
        dv / scale
    }
}

/// Residual of `div U + grad q = B v` relative to `|∇U| + |∇q| + |B v|`.
/// Full gradients rather than `div U` keep the scale meaningful when the
/// divergence vanishes identically, as it does for `q̄ = 0` plane waves.
fn relaxed_residual(v: &VectorField, u: &MatrixField, q: &ScalarField, b: &SourceMatrix) -> f64 {
    let d = v.grid().dim();
    let gq = grad(q);
    let bv = apply_b(b, v);
    let comps: Vec<&[f64]> = (0..d * d).map(|k| u.comp(k / d, k % d)).collect();
    let scale = grad_rms(&comps, v.grid()) + rms(&gq) + rms(&bv);
    let mut res = div_matrix(u);
    res.axpy(1.0, &gq);
    res.axpy(-1.0, &bv);
    if scale == 0.0 {
        res.l2()
    } else {
        res.l2() / scale
    }
}

/// Pressure from `Δq = div(B v) - div div U`.
pub(crate) fn pressure(v: &VectorField, u: &MatrixField, b: &SourceMatrix) -> Result<ScalarField> {
    let mut rhs = div(&apply_b(b, v));
    rhs.axpy(-1.0, &div(&div_matrix(u)));
    // The right-hand side is a divergence; clear the rounding in its mean.
    let m = rhs.mean();
    rhs.data_mut().iter_mut().for_each(|x| *x -= m);
    inv_laplacian(&rhs)
}

/// Pointwise statistics of a state: (total deficit, sup deficit, min margin
/// over active nodes, speed excess, U eigenvalue excess).
fn pointwise_stats(v: &VectorField, u: &MatrixField, e: &ScalarField, floor: f64) -> (f64, f64, f64, f64, f64) {
    let grid = v.grid();
    let d = grid.dim();
    let (mut vn, mut un, mut neg) = (vec![0.0; d], vec![0.0; d * d], vec![0.0; d * d]);
    let (mut tot, mut sup, mut minm) = (0.0, f64::NEG_INFINITY, f64::INFINITY);
    let (mut vmax, mut umin) = (0.0f64, 0.0f64);
    let emax = e.sup();
    for n in 0..grid.len() {
        v.at(n, &mut vn);
        u.at(n, &mut un);
        let en = e.data()[n];
        let s2: f64 = vn.iter().map(|x| x * x).sum();
        let def = en - s2;
        tot += def;
        sup = sup.max(def);
        vmax = vmax.max(s2);
        if def > floor {
            minm = minm.min(margin_raw(&vn, &un, en));
        }
        neg.iter_mut().zip(&un).for_each(|(a, b)| *a = -b);
        umin = umin.max(lambda_max_sym(&neg, d));
    }
    if minm == f64::INFINITY {
        minm = 0.0;
    }
    (tot / grid.len() as f64, sup, minm, vmax - emax, umin - emax / d as f64)
}

/// Diagnostics of a state; cell counters and timing are left at zero.
pub fn diagnose(state: &IterationState, cfg: &RunConfig, sweep: usize, lambda: f64) -> Result<DiagnosticsRecord> {
    let (tot, sup, minm, sx, ux) = pointwise_stats(&state.v, &state.u, &state.e, cfg.deficit_floor);
    let mut diff = state.v.clone();
    diff.axpy(-1.0, &state.v0);
    Ok(DiagnosticsRecord {
        sweep,
        total_deficit: tot,
        sup_deficit: sup,
        residual_div_v: div_residual(&state.v),
        residual_relaxed: relaxed_residual(&state.v, &state.u, &state.q, &cfg.b),
        weak_residual: weak_residual(&state.v, &cfg.b, cfg.weak_tests, cfg.rng_seed ^ 0x5eed),
        hminus1_to_v0: hminus1_distance(&state.v, &state.v0)?,
        l2_to_v0: diff.l2(),
        min_hull_margin: minm,
        speed_excess: sx,
        u_eig_excess: ux,
        cells_total: 0,
        cells_waved: 0,
        cells_skipped: 0,
        backoffs: 0,
        lambda,
        wall_time: 0.0,
    })
}

/// Residual of `(v, p)` in the steady equations `div(v ⊗ v) + grad p = B v`,
/// `div v = 0`, as an RMS value scaled by `max(1, |v|^2)`.
pub fn flow_residual(v: &VectorField, p: &ScalarField, b: &SourceMatrix) -> f64 {
    let mut r = div_matrix(&outer(v));
    r.axpy(1.0, &grad(p));
    r.axpy(-1.0, &apply_b(b, v));
    (r.l2() + div(v).l2()) / v.l2().powi(2).max(1.0)
}

/// Subsolution `(v0, v0 ⊗ v0 - |v0|^2/d I, p0 + |v0|^2/d)` of a base flow.
pub fn init_from_flow(v0: &VectorField, p0: &ScalarField, e: &ScalarField, cfg: &RunConfig) -> Result<IterationState> {
    let grid = v0.grid();
    let d = grid.dim();
    if p0.grid() != grid || e.grid() != grid {
        return Err(Error::InvalidParameter("base flow, pressure and energy live on different grids".into()));
    }
    let res = flow_residual(v0, p0, &cfg.b);
    if !(res <= cfg.tolerances.init_residual) {
        return Err(Error::Precondition(format!(
            "base flow is not a solution: residual {res:e} exceeds {:e}",
            cfg.tolerances.init_residual
        )));
    }
    let mut u = outer(v0);
    let mut q = p0.clone();
    let mut vn = vec![0.0; d];
    let mut un = vec![0.0; d * d];
    for n in 0..grid.len() {
        v0.at(n, &mut vn);
        let s2: f64 = vn.iter().map(|x| x * x).sum::<f64>() / d as f64;
        for i in 0..d {
            u.comp_mut(i, i)[n] -= s2;
        }
        q.data_mut()[n] += s2;
        if !(e.data()[n] > d as f64 * s2) {
            return Err(Error::Precondition(format!("e <= |v0|^2 at node {n}")));
        }
        u.at(n, &mut un);
        if !(margin_raw(&vn, &un, e.data()[n]) > 0.0) {
            return Err(Error::Numerical(format!("initial state leaves the relaxed set at node {n}")));
        }
    }
    Ok(IterationState { v: v0.clone(), u, q, e: e.clone(), v0: v0.clone(), sweep: 0, history: Vec::new() })
}

/// The zero subsolution; for d = 2 the origin is certified to lie in the
/// sampled lamination hull at the extreme positive energy levels.
pub fn init_zero(e: &ScalarField, cfg: &RunConfig) -> Result<IterationState> {
    let grid = e.grid();
    let d = grid.dim();
    if d == 2 {
        let active: Vec<f64> = e.data().iter().cloned().filter(|&x| x > cfg.deficit_floor).collect();
        let lo = active.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = active.iter().cloned().fold(0.0, f64::max);
        let h = cfg.segment.hull;
        for r in [lo, hi] {
            if r.is_finite() && r > 0.0 && !in_lamination_hull(&StatePoint::zero(2), r, h.depth, h.n_dirs, h.n_samples)? {
                return Err(Error::Precondition(format!(
                    "the zero state is not certified in the lamination hull at e = {r}"
                )));
            }
        }
    }
    Ok(IterationState {
        v: VectorField::zeros(grid),
        u: MatrixField::zeros(grid),
        q: ScalarField::zeros(grid),
        e: e.clone(),
        v0: VectorField::zeros(grid),
        sweep: 0,
        history: Vec::new(),
    })
}

/// Runs the configured schedule, handing each diagnostics record to
/// `on_record` as soon as it is available.
pub fn run_with(cfg: &RunConfig, mut on_record: impl FnMut(&DiagnosticsRecord)) -> Result<IterationState> {
    let e = cfg.validate()?;
    let mut state = match (&cfg.mode, &cfg.base_flow) {
        (Mode::Periodic, Some(bf)) => init_from_flow(&bf.v, &bf.p, &e, cfg)?,
        (Mode::Periodic, None) => {
            let z = init_zero(&e, cfg)?;
            init_from_flow(&z.v, &z.q, &e, cfg)?
        }
        (Mode::Compact { .. }, _) => init_zero(&e, cfg)?,
    };
    let t0 = Instant::now();
    let mut rec = diagnose(&state, cfg, 0, 0.0)?;
    rec.wall_time = t0.elapsed().as_secs_f64();
    on_record(&rec);
    state.history.push(rec);
    for (s, spec) in cfg.schedule.iter().enumerate() {
        let t = Instant::now();
        let report = sweep(&mut state, cfg, spec, s)?;
        let mut rec = diagnose(&state, cfg, s + 1, spec.lambda)?;
        rec.cells_total = report.cells_total;
        rec.cells_waved = report.cells_waved;
        rec.cells_skipped = report.cells_skipped;
        rec.backoffs = report.backoffs;
        rec.wall_time = t.elapsed().as_secs_f64();
        on_record(&rec);
        let prev = state.history.last().map(|r| r.total_deficit).unwrap_or(f64::INFINITY);
        let blown = rec.residual_div_v > cfg.tolerances.residual_gate
            || rec.residual_relaxed > cfg.tolerances.residual_gate
            || !rec.total_deficit.is_finite();
        state.history.push(rec);
        if blown {
            return Err(Error::Numerical(format!("subsolution residuals blew up in sweep {}", s + 1)));
        }
        if state.history.last().unwrap().total_deficit > prev + cfg.tolerances.deficit_slack {
            return Err(Error::Numerical(format!("total deficit increased in sweep {}", s + 1)));
        }
    }
    Ok(state)
}

pub fn run(cfg: &RunConfig) -> Result<IterationState> {
    run_with(cfg, |_| {})
}

/// A weak-solution candidate `(v, p = q - e/d)` with the pointwise
/// violation `|U - (v ⊗ v - e/d I)|` of the nonlinear constraint.
#[derive(Debug, Clone)]
pub struct AssembledSolution {
    pub v: VectorField,
    pub p: ScalarField,
    pub violation: ScalarField,
    /// Torus average of the violation.
    pub violation_l1: f64,
}

pub fn assemble_solution(state: &IterationState) -> AssembledSolution {
    let grid = state.v.grid();
    let d = grid.dim();
    let mut p = state.q.clone();
    let mut viol = ScalarField::zeros(grid);
    let (mut vn, mut un) = (vec![0.0; d], vec![0.0; d * d]);
    for n in 0..grid.len() {
        let en = state.e.data()[n];
        p.data_mut()[n] -= en / d as f64;
        state.v.at(n, &mut vn);
        state.u.at(n, &mut un);
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                let target = vn[i] * vn[j] - if i == j { en / d as f64 } else { 0.0 };
                s += (un[i * d + j] - target).powi(2);
            }
        }
        viol.data_mut()[n] = s.sqrt();
    }
    let violation_l1 = viol.mean();
    AssembledSolution { v: state.v.clone(), p, violation: viol, violation_l1 }
}
