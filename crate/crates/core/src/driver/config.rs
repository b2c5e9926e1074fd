use crate::error::{Error, Result};
use crate::segment::SegmentConfig;
use crate::spectral::{Region, ScalarField, TorusGrid, VectorField};
use crate::state::{EnergyProfile, SourceMatrix};

/// Where waves may be placed.
#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    /// The whole torus, starting from a base flow (or rest).
    Periodic,
    /// Only inside the box `omega`; the energy profile must vanish near its
    /// boundary.
    Compact { omega: Region },
}

/// Parameters of one sweep.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// The active region is split into `2^k_cells` cubes per axis.
    pub k_cells: u32,
    pub lambda: f64,
    /// Profile mollification width.
    pub delta: f64,
}

/// `λ(s) = λ0 2^s`, `k(s) = k0 + s`, `δ(s) = δ0 2^{-s}`.
pub fn geometric_schedule(k0: u32, lambda0: f64, delta0: f64, sweeps: usize) -> Vec<SweepSpec> {
    (0..sweeps)
        .map(|s| SweepSpec {
            k_cells: k0 + s as u32,
            lambda: lambda0 * (1u64 << s) as f64,
            delta: delta0 / (1u64 << s) as f64,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Residual gate for a base flow handed to `init_from_flow`.
    pub init_residual: f64,
    /// Relative subsolution residual above which a run aborts.
    pub residual_gate: f64,
    /// Slack allowed in the monotonicity of the total deficit.
    pub deficit_slack: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { init_residual: 1e-6, residual_gate: 1e-6, deficit_slack: 1e-9 }
    }
}

/// Base flow `(v0, p0)` for the periodic mode.
#[derive(Debug, Clone)]
pub struct BaseFlow {
    pub v: VectorField,
    pub p: ScalarField,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub grid: TorusGrid,
    pub mode: Mode,
    pub energy: EnergyProfile,
    pub b: SourceMatrix,
    pub base_flow: Option<BaseFlow>,
    pub schedule: Vec<SweepSpec>,
    /// Fraction of the certified safe amplitude actually used.
    pub gamma: f64,
    /// Cutoff budget of each cell as a fraction of its volume.
    pub cutoff_fraction: f64,
    /// Cells whose deficit is at most this are left alone.
    pub deficit_floor: f64,
    /// Cells whose center margin is at most this are left alone.
    pub margin_floor: f64,
    /// Halvings of a cell amplitude before the cell is skipped.
    pub max_backoff: usize,
    pub tolerances: Tolerances,
    pub rng_seed: u64,
    pub segment: SegmentConfig,
    /// Test fields drawn by the weak residual.
    pub weak_tests: usize,
    /// Reporting target for the H⁻¹ distance to the base flow.
    pub sigma: Option<f64>,
}

impl RunConfig {
    /// Periodic run from rest with default knobs and an empty schedule.
    pub fn new(grid: TorusGrid, energy: EnergyProfile) -> Self {
        let d = grid.dim();
        RunConfig {
            grid,
            mode: Mode::Periodic,
            energy,
            b: SourceMatrix::zero(d),
            base_flow: None,
            schedule: Vec::new(),
            gamma: 0.9,
            cutoff_fraction: 0.5,
            deficit_floor: 1e-6,
            margin_floor: 1e-6,
            max_backoff: 5,
            tolerances: Tolerances::default(),
            rng_seed: 0,
            segment: SegmentConfig::default(),
            weak_tests: 8,
            sigma: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// Checks the parameter ranges and the hypotheses on `e`, returning `e`
    /// sampled on the grid.
    pub fn validate(&self) -> Result<ScalarField> {
        let d = self.dim();
        if self.b.dim() != d {
            return Err(Error::Config(format!("source matrix is {0}x{0}, grid has d = {d}", self.b.dim())));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) && self.gamma != 0.0 {
            return Err(Error::Config(format!("gain fraction gamma = {} must lie in [0, 1)", self.gamma)));
        }
        if !(self.cutoff_fraction > 0.0 && self.cutoff_fraction < 1.0) {
            return Err(Error::Config(format!("cutoff_fraction = {} must lie in (0, 1)", self.cutoff_fraction)));
        }
        if !(self.deficit_floor >= 0.0 && self.margin_floor >= 0.0) {
            return Err(Error::Config("floors must be non-negative".into()));
        }
        for (s, sw) in self.schedule.iter().enumerate() {
            if !(sw.lambda > 0.0 && sw.delta > 0.0 && sw.delta < 0.25) {
                return Err(Error::Config(format!(
                    "sweep {s}: need lambda > 0 and 0 < delta < 1/4, got {sw:?}"
                )));
            }
            let per_axis = 1usize << sw.k_cells;
            if self.grid.dims().iter().any(|&n| n < 2 * per_axis) {
                return Err(Error::Config(format!("sweep {s}: 2^{} cells per axis exceed the grid", sw.k_cells)));
            }
        }
        let e = self.energy.sample(&self.grid)?;
        if e.data().iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Config("energy profile must be finite and non-negative".into()));
        }
        match &self.mode {
            Mode::Periodic => {
                let v2 = |n: usize| match &self.base_flow {
                    Some(bf) => (0..d).map(|a| bf.v.comp(a)[n].powi(2)).sum::<f64>(),
                    None => 0.0,
                };
                if let Some(n) = (0..self.grid.len()).find(|&n| e.data()[n] <= v2(n)) {
                    return Err(Error::Config(format!(
                        "periodic mode needs e > |v0|^2 everywhere; fails at node {n} (e = {}, |v0|^2 = {})",
                        e.data()[n],
                        v2(n)
                    )));
                }
            }
            Mode::Compact { omega } => {
                if self.base_flow.is_some() {
                    return Err(Error::Config("compact mode starts from rest; remove the base flow".into()));
                }
                if omega.dim() != d {
                    return Err(Error::Config("active region dimension does not match the grid".into()));
                }
                // e must vanish outside omega shrunk by two grid cells.
                let inner = Region::new(
                    (0..d).map(|a| omega.lo[a] + 2.0 * self.grid.spacing(a)).collect(),
                    (0..d).map(|a| omega.len[a] - 4.0 * self.grid.spacing(a)).collect(),
                )
                .map_err(|_| Error::Config("active region is thinner than four grid cells".into()))?;
                let mut x = vec![0.0; d];
                for n in 0..self.grid.len() {
                    self.grid.coords_into(n, &mut x);
                    if e.data()[n] > 0.0 && !inner.contains(&x) {
                        return Err(Error::Config(format!(
                            "energy support reaches within two grid cells of the active region boundary at {x:?}"
                        )));
                    }
                }
            }
        }
        Ok(e)
    }
}
