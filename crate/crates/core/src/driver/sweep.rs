use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::linalg::margin_raw;
use crate::segment::{find_segment, AdmissibleSegment};
use crate::spectral::{build_profiles, Region, DEFAULT_M};
use crate::state::{energy_deficit, hull_margin, StatePoint};
use crate::wave::{build_cells, WaveCell, WaveFields};

use super::{pressure, IterationState, Mode, RunConfig, SweepSpec};

/// Fraction of a node's margin a wave may use up.
const NODE_MARGIN_KEEP: f64 = 0.5;
/// Bisection steps for a cell's safe amplitude.
const AMPLITUDE_STEPS: usize = 14;
const NO_CELL: u32 = u32::MAX;

/// What happened to the cells of one sweep.
#[derive(Debug, Clone, Default)]
pub struct SweepReport {
    pub cells_total: usize,
    pub cells_waved: usize,
    pub cells_skipped: usize,
    /// Amplitude halvings over all cells.
    pub backoffs: usize,
    /// `(cell, reason)` for every skipped cell.
    pub skipped: Vec<(usize, String)>,
}

/// Lattice of cells for one sweep: corner, side lengths, cells per axis.
struct Lattice {
    base: Vec<f64>,
    side: Vec<f64>,
    per_axis: usize,
}

impl Lattice {
    fn new(cfg: &RunConfig, k: u32, rng: &mut ChaCha8Rng) -> Self {
        let d = cfg.dim();
        let per_axis = 1usize << k;
        match &cfg.mode {
            Mode::Periodic => {
                let side = vec![TAU / per_axis as f64; d];
                let base = side.iter().map(|s| rng.gen::<f64>() * s).collect();
                Lattice { base, side, per_axis }
            }
            Mode::Compact { omega } => Lattice {
                base: omega.lo.clone(),
                side: omega.len.iter().map(|l| l / per_axis as f64).collect(),
                per_axis,
            },
        }
    }

    fn n_cells(&self) -> usize {
        self.per_axis.pow(self.base.len() as u32)
    }

    fn cell_of(&self, x: &[f64]) -> u32 {
        let mut c = 0usize;
        for a in (0..x.len()).rev() {
            let j = ((x[a] - self.base[a]).rem_euclid(TAU) / self.side[a]).floor() as usize;
            if j >= self.per_axis {
                return NO_CELL;
            }
            c = c * self.per_axis + j;
        }
        c as u32
    }

    fn region(&self, c: usize) -> Result<Region> {
        let mut rem = c;
        let lo = (0..self.base.len())
            .map(|a| {
                let j = rem % self.per_axis;
                rem /= self.per_axis;
                self.base[a] + j as f64 * self.side[a]
            })
            .collect();
        Region::new(lo, self.side.clone())
    }
}

/// Per-node views of the state as flat rows.
struct Nodes {
    d: usize,
    v: Vec<f64>,
    u: Vec<f64>,
}

impl Nodes {
    fn gather(state: &IterationState) -> Self {
        let d = state.v.grid().dim();
        let len = state.v.grid().len();
        let mut v = vec![0.0; len * d];
        let mut u = vec![0.0; len * d * d];
        for n in 0..len {
            state.v.at(n, &mut v[n * d..(n + 1) * d]);
            state.u.at(n, &mut u[n * d * d..(n + 1) * d * d]);
        }
        Nodes { d, v, u }
    }

    fn v(&self, n: usize) -> &[f64] {
        &self.v[n * self.d..(n + 1) * self.d]
    }

    fn u(&self, n: usize) -> &[f64] {
        let dd = self.d * self.d;
        &self.u[n * dd..(n + 1) * dd]
    }
}

/// A wave planned on one cell at unit amplitude.
struct Plan {
    cell: usize,
    region: Region,
    /// Half-segment scaled to the safe amplitude.
    dir: StatePoint,
    q_bar: f64,
    xi: DVector<f64>,
    phase: f64,
    /// Current amplitude factor relative to `dir`.
    amp: f64,
}

impl Plan {
    fn wave_cell(&self, factor: f64) -> WaveCell {
        // w2 - w1 = 2 amp dir with mu = 1/2.
        let s = 2.0 * self.amp * factor;
        WaveCell {
            region: self.region.clone(),
            w_bar: &self.dir * s,
            wave_vector: self.xi.clone(),
            q_bar: self.q_bar * s,
            phase: self.phase,
        }
    }
}

/// Largest `a` in `[0, 1]` with `margin(w(x) ± a dir) >= keep * margin(w(x))`
/// at every active node of the cell. The margin is concave along the
/// segment, so the two endpoints suffice.
fn safe_amplitude(nodes: &Nodes, members: &[usize], e: &[f64], dir: &StatePoint, floor: f64) -> f64 {
    let d = nodes.d;
    let dv: Vec<f64> = dir.v.iter().cloned().collect();
    let du = dir.u_row_major();
    let base: Vec<(usize, f64)> = members
        .iter()
        .filter(|&&n| e[n] > floor)
        .map(|&n| (n, margin_raw(nodes.v(n), nodes.u(n), e[n])))
        .collect();
    let (mut pv, mut pu) = (vec![0.0; d], vec![0.0; d * d]);
    let mut ok = |a: f64| {
        base.iter().all(|&(n, m0)| {
            [a, -a].iter().all(|&t| {
                pv.iter_mut().zip(nodes.v(n)).zip(&dv).for_each(|((p, x), y)| *p = x + t * y);
                pu.iter_mut().zip(nodes.u(n)).zip(&du).for_each(|((p, x), y)| *p = x + t * y);
                margin_raw(&pv, &pu, e[n]) >= NODE_MARGIN_KEEP * m0
            })
        })
    };
    if base.iter().any(|&(_, m0)| !(m0 > 0.0)) {
        return 0.0;
    }
    if ok(1.0) {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..AMPLITUDE_STEPS {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// A state whose velocity and stress vanish is fixed by every orthogonal
/// map, so segments through it may be rotated freely. The tolerance absorbs
/// the rounding in cell averages of earlier waves; node checks still apply.
fn is_isotropic(w: &StatePoint) -> bool {
    w.v.norm() <= 1e-10 && w.u.norm() <= 1e-10
}

/// Unit vectors `m/|m|` for nonzero integer `m` with entries in `{-1, 0, 1}`
/// and a positive leading nonzero entry.
fn lattice_directions(d: usize) -> Vec<DVector<f64>> {
    let mut out = Vec::new();
    for code in 1..3usize.pow(d as u32) {
        let mut rem = code;
        let m: Vec<f64> = (0..d)
            .map(|_| {
                let t = rem % 3;
                rem /= 3;
                t as f64 - 1.0
            })
            .collect();
        let lead = m.iter().rev().find(|&&x| x != 0.0).cloned().unwrap_or(0.0);
        if lead > 0.0 {
            let v = DVector::from_vec(m);
            out.push(&v / v.norm());
        }
    }
    out
}

/// Reflects a segment so its wave vector becomes `target`. Orthogonal maps
/// preserve `K_r`, its hulls and the wave cone.
fn reflect_onto(seg: &AdmissibleSegment, target: &DVector<f64>) -> AdmissibleSegment {
    let d = target.len();
    let h = target - &seg.wave_vector;
    let hn = h.norm_squared();
    let mut out = seg.clone();
    if hn < 1e-24 {
        return out;
    }
    // Householder reflection I - 2 h h^T / |h|^2 maps xi to the target.
    let hm = DMatrix::identity(d, d) - (&h * h.transpose()) * (2.0 / hn);
    let dir = &seg.direction;
    out.direction = StatePoint::from_projected(&hm * &dir.v, &(&hm * &dir.u * &hm));
    out.wave_vector = target.clone();
    out
}

/// Adds `s` times a built wave to the running perturbation.
fn accumulate(acc: &mut Option<WaveFields>, f: WaveFields, s: f64) {
    match acc {
        None => {
            let mut f = f;
            if s != 1.0 {
                f.v = f.v.scaled(s);
                f.u = f.u.scaled(s);
            }
            *acc = Some(f);
        }
        Some(a) => {
            a.v.axpy(s, &f.v);
            a.u.axpy(s, &f.u);
        }
    }
}

/// One pass over a cube cover of the active region: a localized wave per
/// cell along an admissible segment at the cell mean, with amplitudes
/// certified node by node and halved on failure. The pressure is then
/// recomputed from the elliptic identity.
pub fn sweep(state: &mut IterationState, cfg: &RunConfig, spec: &SweepSpec, index: usize) -> Result<SweepReport> {
    let grid = state.v.grid().clone();
    let d = grid.dim();
    let len = grid.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed ^ (index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let lattice = Lattice::new(cfg, spec.k_cells, &mut rng);
    let n_cells = lattice.n_cells();
    let mut report = SweepReport { cells_total: n_cells, ..Default::default() };

    let nodes = Nodes::gather(state);
    let e = state.e.data().to_vec();
    let mut x = vec![0.0; d];
    let mut cell_of = vec![NO_CELL; len];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_cells];
    for n in 0..len {
        grid.coords_into(n, &mut x);
        let c = lattice.cell_of(&x);
        cell_of[n] = c;
        if c != NO_CELL {
            members[c as usize].push(n);
        }
    }

    // Plan a wave on every cell with room left.
    let mut plans: Vec<Plan> = Vec::new();
    for (c, mem) in members.iter().enumerate() {
        let phase: f64 = rng.gen();
        if cfg.gamma == 0.0 || mem.is_empty() {
            continue;
        }
        let mut vm = vec![0.0; d];
        let mut um = vec![0.0; d * d];
        let mut r = f64::INFINITY;
        for &n in mem {
            vm.iter_mut().zip(nodes.v(n)).for_each(|(a, b)| *a += b);
            um.iter_mut().zip(nodes.u(n)).for_each(|(a, b)| *a += b);
            r = r.min(e[n]);
        }
        let inv = 1.0 / mem.len() as f64;
        vm.iter_mut().for_each(|a| *a *= inv);
        um.iter_mut().for_each(|a| *a *= inv);
        let w = StatePoint::from_slices(&vm, &um);
        let mut skip = |reason: String| report.skipped.push((c, reason));
        if !(r > cfg.deficit_floor) || energy_deficit(&w, r) <= cfg.deficit_floor {
            skip("deficit at floor".into());
            continue;
        }
        if hull_margin(&w, r) <= cfg.margin_floor {
            skip("hull margin too thin".into());
            continue;
        }
        let seg = match find_segment(&w, r, &cfg.segment) {
            Ok(s) => s,
            Err(err) => {
                skip(err.to_string());
                continue;
            }
        };
        let region = lattice.region(c)?;
        let closes = |xi: &DVector<f64>| {
            (0..d).all(|a| {
                let osc = spec.lambda * xi[a];
                region.len[a] < TAU || (osc - osc.round()).abs() <= 1e-9
            })
        };
        // Orientations to try: the segment itself, and at an isotropic mean
        // its reflections onto short lattice directions.
        let mut candidates = vec![seg.clone()];
        if is_isotropic(&w) {
            candidates.extend(lattice_directions(d).into_iter().map(|t| reflect_onto(&seg, &t)));
        }
        let best = candidates
            .into_iter()
            .filter(|s| closes(&s.wave_vector))
            .map(|s| (safe_amplitude(&nodes, mem, &e, &s.direction, cfg.deficit_floor), s))
            .fold(None, |acc: Option<(f64, AdmissibleSegment)>, (a, s)| match acc {
                Some((b, _)) if b >= a => acc,
                _ => Some((a, s)),
            });
        let Some((a, seg)) = best else {
            skip("plane wave does not close up on a full-axis cell".into());
            continue;
        };
        if !(a > 0.0) {
            skip("no safe amplitude".into());
            continue;
        }
        plans.push(Plan {
            cell: c,
            region,
            dir: seg.direction.clone(),
            q_bar: seg.q_bar,
            xi: seg.wave_vector.clone(),
            phase,
            amp: cfg.gamma * a,
        });
    }

    let ladder = build_profiles(0.5, 0.5, spec.delta, DEFAULT_M)?;
    let cell_volume: f64 = lattice.side.iter().product();
    let cutoff_delta = cfg.cutoff_fraction * cell_volume;
    let build = |plans: &[&Plan], factor: f64| -> Result<WaveFields> {
        let cells: Vec<WaveCell> = plans.iter().map(|p| p.wave_cell(factor)).collect();
        build_cells(&grid, &cells, &ladder, spec.lambda, cutoff_delta, &cfg.b, false)
    };

    let mut acc: Option<WaveFields> = None;
    if !plans.is_empty() {
        accumulate(&mut acc, build(&plans.iter().collect::<Vec<_>>(), 1.0)?, 1.0);
    }
    let mut halvings = vec![0usize; plans.len()];
    let mut alive = vec![true; plans.len()];
    let plan_of_cell: std::collections::HashMap<usize, usize> =
        plans.iter().enumerate().map(|(i, p)| (p.cell, i)).collect();
    let (mut pv, mut pu) = (vec![0.0; d], vec![0.0; d * d]);
    loop {
        let Some(w) = acc.as_ref() else { break };
        // Node checks: margin stays positive, and the deficit of each cell
        // does not grow.
        let mut bad = vec![false; plans.len()];
        let mut gain = vec![0.0; plans.len()];
        let mut total_gain = 0.0;
        for n in 0..len {
            w.v.at(n, &mut pv);
            w.u.at(n, &mut pu);
            let old = nodes.v(n);
            let g: f64 = pv.iter().zip(old).map(|(t, v)| 2.0 * v * t + t * t).sum();
            total_gain += g;
            let owner = (cell_of[n] != NO_CELL).then(|| plan_of_cell.get(&(cell_of[n] as usize))).flatten();
            if let Some(&i) = owner {
                gain[i] += g;
            }
            if e[n] > cfg.deficit_floor {
                pv.iter_mut().zip(old).for_each(|(t, v)| *t += v);
                pu.iter_mut().zip(nodes.u(n)).for_each(|(t, u)| *t += u);
                if !(margin_raw(&pv, &pu, e[n]) > 0.0) {
                    match owner {
                        Some(&i) => bad[i] = true,
                        // A tail left the hull far from any wave: back off everywhere.
                        None => bad.iter_mut().for_each(|b| *b = true),
                    }
                }
            }
        }
        for i in 0..plans.len() {
            if gain[i] < 0.0 {
                bad[i] = true;
            }
        }
        if total_gain < 0.0 {
            bad.iter_mut().for_each(|b| *b = true);
        }
        let bad_idx: Vec<usize> = (0..plans.len()).filter(|&i| bad[i] && alive[i]).collect();
        if bad_idx.is_empty() {
            break;
        }
        // Halve, or drop cells that have been halved too often.
        let (halve, drop): (Vec<usize>, Vec<usize>) =
            bad_idx.into_iter().partition(|&i| halvings[i] < cfg.max_backoff);
        if !halve.is_empty() {
            let ps: Vec<&Plan> = halve.iter().map(|&i| &plans[i]).collect();
            accumulate(&mut acc, build(&ps, 1.0)?, -0.5);
            for &i in &halve {
                plans[i].amp *= 0.5;
                halvings[i] += 1;
                report.backoffs += 1;
            }
        }
        if !drop.is_empty() {
            let ps: Vec<&Plan> = drop.iter().map(|&i| &plans[i]).collect();
            accumulate(&mut acc, build(&ps, 1.0)?, -1.0);
            for &i in &drop {
                alive[i] = false;
                plans[i].amp = 0.0;
                report.skipped.push((plans[i].cell, "amplitude backoff exhausted".into()));
            }
        }
        if alive.iter().all(|a| !a) {
            acc = None;
        }
    }

    report.cells_waved = alive.iter().filter(|&&a| a).count();
    report.cells_skipped = n_cells - report.cells_waved;
    if let Some(w) = acc {
        state.v.axpy(1.0, &w.v);
        state.u.axpy(1.0, &w.u);
        state.q = pressure(&state.v, &state.u, &cfg.b)?;
    }
    state.sweep += 1;
    Ok(report)
}
