//! TOML configuration documents for `run` and `gen-wave`.
//!
//! ```toml
//! mode = "periodic"            # or "compact" (needs [omega])
//! grid = [128, 128]            # points per axis; d = grid.len()
//! seed = 0
//! output_dir = "out"
//! b = [0.0, 1.0, -1.0, 0.0]    # source matrix, row-major, default 0
//!
//! [energy]                     # kind = constant | cosine | bump | file
//! kind = "constant"
//! value = 1.0
//!
//! [[schedule]]                 # or [geometric] k0, lambda0, delta0, sweeps
//! k_cells = 0
//! lambda = 16.0
//! delta = 0.05
//! ```
//!
//! Optional tables: `[omega]` (`lo`, `len`), `[base_flow]` (`v`, `p`: field
//! files), `[driver]` knobs, `[tolerances]`, `[segment]` and, for
//! `gen-wave`, `[wave]`. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::driver::{geometric_schedule, BaseFlow, Mode, RunConfig, SweepSpec, Tolerances};
use crate::error::{Error, Result};
use crate::segment::SegmentConfig;
use crate::spectral::{Region, TorusGrid, DEFAULT_M};
use crate::state::{EnergyProfile, SourceMatrix};

use super::field_file::{read_field, Field};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    Periodic,
    Compact,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EnergyDoc {
    Constant { value: f64 },
    Cosine { base: f64, amplitude: f64, mode: Vec<i64> },
    Bump { center: Vec<f64>, radius: f64, peak: f64 },
    /// A scalar field file on the run grid.
    File { path: PathBuf },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionDoc {
    pub lo: Vec<f64>,
    pub len: Vec<f64>,
}

impl RegionDoc {
    pub fn region(&self) -> Result<Region> {
        Region::new(self.lo.clone(), self.len.clone()).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometricDoc {
    pub k0: u32,
    pub lambda0: f64,
    pub delta0: f64,
    pub sweeps: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseFlowDoc {
    pub v: PathBuf,
    pub p: PathBuf,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverDoc {
    pub gamma: Option<f64>,
    pub cutoff_fraction: Option<f64>,
    pub deficit_floor: Option<f64>,
    pub margin_floor: Option<f64>,
    pub max_backoff: Option<usize>,
    pub weak_tests: Option<usize>,
    pub sigma: Option<f64>,
}

/// One localized wave. Either `center_v`/`center_u` with `r` (the segment is
/// searched at that state) or an explicit segment `w1_*`, `w2_*`, `xi`,
/// `q_bar` with weight `mu1` on `w1`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveDoc {
    pub lambda: f64,
    pub delta: f64,
    /// Box; the whole torus when absent.
    pub region: Option<RegionDoc>,
    pub cutoff_delta: Option<f64>,
    pub profile_resolution: Option<usize>,
    pub center_v: Option<Vec<f64>>,
    pub center_u: Option<Vec<f64>>,
    pub r: Option<f64>,
    pub w1_v: Option<Vec<f64>>,
    pub w1_u: Option<Vec<f64>>,
    pub w2_v: Option<Vec<f64>>,
    pub w2_u: Option<Vec<f64>>,
    pub mu1: Option<f64>,
    pub xi: Option<Vec<f64>>,
    pub q_bar: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub mode: Option<ModeName>,
    pub grid: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub b: Option<Vec<f64>>,
    pub energy: Option<EnergyDoc>,
    pub omega: Option<RegionDoc>,
    #[serde(default)]
    pub schedule: Vec<SweepSpec>,
    pub geometric: Option<GeometricDoc>,
    pub base_flow: Option<BaseFlowDoc>,
    #[serde(default)]
    pub driver: DriverDoc,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub segment: SegmentConfig,
    pub wave: Option<WaveDoc>,
}

impl ConfigDocument {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a document; relative paths inside it resolve against its
    /// directory.
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((Self::parse(&text)?, base))
    }

    pub fn grid(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.grid.clone()).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn source_matrix(&self) -> Result<SourceMatrix> {
        let d = self.grid.len();
        match &self.b {
            None => Ok(SourceMatrix::zero(d)),
            Some(b) if b.len() == d * d => SourceMatrix::new(DMatrix::from_row_slice(d, d, b)),
            Some(b) => Err(Error::Config(format!("b has {} entries, expected {}", b.len(), d * d))),
        }
    }

    /// Builds and validates the run configuration.
    pub fn run_config(&self, base: &Path) -> Result<RunConfig> {
        let grid = self.grid()?;
        let d = grid.dim();
        let energy = match self.energy.as_ref().ok_or_else(|| Error::Config("missing [energy]".into()))? {
            EnergyDoc::Constant { value } => EnergyProfile::Constant(*value),
            EnergyDoc::Cosine { base, amplitude, mode } => {
                EnergyProfile::Cosine { base: *base, amplitude: *amplitude, mode: mode.clone() }
            }
            EnergyDoc::Bump { center, radius, peak } => {
                EnergyProfile::Bump { center: center.clone(), radius: *radius, peak: *peak }
            }
            EnergyDoc::File { path } => match read_field(&base.join(path))? {
                Field::Scalar(f) if f.grid() == &grid => EnergyProfile::Grid(f),
                _ => return Err(Error::Config("energy file must be a scalar field on the run grid".into())),
            },
        };
        let mut cfg = RunConfig::new(grid.clone(), energy);
        cfg.b = self.source_matrix()?;
        cfg.mode = match (self.mode.unwrap_or(ModeName::Periodic), &self.omega) {
            (ModeName::Periodic, None) => Mode::Periodic,
            (ModeName::Periodic, Some(_)) => return Err(Error::Config("[omega] is only used in compact mode".into())),
            (ModeName::Compact, Some(o)) => Mode::Compact { omega: o.region()? },
            (ModeName::Compact, None) => return Err(Error::Config("compact mode needs [omega]".into())),
        };
        if let Some(bf) = &self.base_flow {
            let v = match read_field(&base.join(&bf.v))? {
                Field::Vector(v) if v.grid() == &grid => v,
                _ => return Err(Error::Config("base flow v must be a vector field on the run grid".into())),
            };
            let p = match read_field(&base.join(&bf.p))? {
                Field::Scalar(p) if p.grid() == &grid => p,
                _ => return Err(Error::Config("base flow p must be a scalar field on the run grid".into())),
            };
            cfg.base_flow = Some(BaseFlow { v, p });
        }
        cfg.schedule = match (&self.geometric, self.schedule.is_empty()) {
            (Some(g), true) => geometric_schedule(g.k0, g.lambda0, g.delta0, g.sweeps),
            (None, _) => self.schedule.clone(),
            (Some(_), false) => return Err(Error::Config("give either [[schedule]] or [geometric], not both".into())),
        };
        let dr = &self.driver;
        cfg.gamma = dr.gamma.unwrap_or(cfg.gamma);
        cfg.cutoff_fraction = dr.cutoff_fraction.unwrap_or(cfg.cutoff_fraction);
        cfg.deficit_floor = dr.deficit_floor.unwrap_or(cfg.deficit_floor);
        cfg.margin_floor = dr.margin_floor.unwrap_or(cfg.margin_floor);
        cfg.max_backoff = dr.max_backoff.unwrap_or(cfg.max_backoff);
        cfg.weak_tests = dr.weak_tests.unwrap_or(cfg.weak_tests);
        cfg.sigma = dr.sigma;
        cfg.tolerances = self.tolerances;
        cfg.segment = self.segment;
        cfg.rng_seed = self.seed;
        debug_assert_eq!(cfg.dim(), d);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn output_dir(&self, base: &Path) -> PathBuf {
        base.join(self.output_dir.clone().unwrap_or_else(|| PathBuf::from("out")))
    }
}

impl WaveDoc {
    pub fn region(&self, d: usize) -> Result<Region> {
        match &self.region {
            Some(r) => r.region(),
            None => Ok(Region::full(d)),
        }
    }

    pub fn profile_resolution(&self) -> usize {
        self.profile_resolution.unwrap_or(DEFAULT_M)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RUN: &str = r#"
grid = [32, 32]
b = [0.0, 1.0, -1.0, 0.0]
[energy]
kind = "constant"
value = 1.0
[[schedule]]
k_cells = 0
lambda = 4.0
delta = 0.05
[driver]
gamma = 0.8
"#;

    #[test]
    fn run_document_loads() {
        let doc = ConfigDocument::parse(RUN).unwrap();
        let cfg = doc.run_config(Path::new(".")).unwrap();
        assert_eq!(cfg.schedule.len(), 1);
        assert_eq!(cfg.gamma, 0.8);
        assert_eq!(cfg.b.entry(0, 1), 1.0);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = RUN.replace("gamma = 0.8", "gama = 0.8");
        assert!(matches!(ConfigDocument::parse(&text), Err(Error::Config(_))));
        let text = format!("colour = 1\n{RUN}");
        assert!(ConfigDocument::parse(&text).is_err());
    }

    #[test]
    fn physical_parameters_validated_at_load() {
        let text = RUN.replace("value = 1.0", "value = -1.0");
        let doc = ConfigDocument::parse(&text).unwrap();
        assert!(matches!(doc.run_config(Path::new(".")), Err(Error::Config(_))));
        let text = RUN.replace("delta = 0.05", "delta = 0.5");
        assert!(ConfigDocument::parse(&text).unwrap().run_config(Path::new(".")).is_err());
    }
}
