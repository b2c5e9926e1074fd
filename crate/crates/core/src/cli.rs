//! Command-line entry points. Every command prints one JSON summary line on
//! stdout and exits with 0 (success), 2 (configuration or precondition),
//! 3 (I/O or file format) or 4 (numerical invariant failure).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use crate::driver::{assemble_solution, diagnose, run_with, weak_residual, IterationState};
use crate::error::{Error, Result};
use crate::io::config::{ConfigDocument, WaveDoc};
use crate::io::{csv_columns, read_field, write_csv, write_field, write_record, Field};
use crate::segment::find_segment;
use crate::spectral::{div, MatrixField, ScalarField, VectorField};
use crate::state::{SourceMatrix, StatePoint};
use crate::wave::{build_localized_wave, leading_order_deviation, region_stats, WaveSpec};

#[derive(Debug, Parser)]
#[command(name = "euler-ci", version, about = "Convex-integration subsolutions of the steady Euler equations on the torus")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build one localized plane wave from the [wave] table and write v, U, q.
    GenWave {
        config: PathBuf,
        /// Overrides wave.lambda.
        #[arg(long)]
        lambda: Option<f64>,
        /// Overrides output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the sweep schedule; writes diagnostics.jsonl and the final fields.
    Run {
        config: PathBuf,
        /// Overrides seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Weak residual and subsolution diagnostics of stored fields.
    Check {
        /// Supplies the grid, energy and source matrix.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        v: PathBuf,
        #[arg(long, requires = "q")]
        u: Option<PathBuf>,
        #[arg(long, requires = "u")]
        q: Option<PathBuf>,
    },
    /// Convert a field file to CSV: one row per node, coordinates then
    /// components.
    ExportCsv {
        field: PathBuf,
        /// Defaults to the field path with a `.csv` extension.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

/// Runs a parsed command, returning the summary to print.
pub fn execute(cmd: &Command) -> Result<Value> {
    match cmd {
        Command::GenWave { config, lambda, out } => gen_wave(config, *lambda, out.as_deref()),
        Command::Run { config, seed, out } => run_cmd(config, *seed, out.as_deref()),
        Command::Check { config, v, u, q } => check(config, v, u.as_deref(), q.as_deref()),
        Command::ExportCsv { field, out } => export_csv(field, out.as_deref()),
    }
}

/// Parses `args`, executes, prints the summary and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(err) => {
            let code = err.exit_code();
            println!("{}", json!({ "status": "error", "exit_code": code, "message": err.to_string() }));
            eprintln!("error: {err}");
            code
        }
    }
}

fn vector(x: &[f64], d: usize, what: &str) -> Result<DVector<f64>> {
    if x.len() != d {
        return Err(Error::Config(format!("{what} needs {d} entries, got {}", x.len())));
    }
    Ok(DVector::from_column_slice(x))
}

fn state(v: &Option<Vec<f64>>, u: &Option<Vec<f64>>, d: usize, what: &str) -> Result<StatePoint> {
    let v = vector(v.as_deref().ok_or_else(|| Error::Config(format!("missing {what}_v")))?, d, what)?;
    let u = match u {
        Some(u) if u.len() == d * d => DMatrix::from_row_slice(d, d, u),
        Some(u) => return Err(Error::Config(format!("{what}_u needs {} entries, got {}", d * d, u.len()))),
        None => DMatrix::zeros(d, d),
    };
    StatePoint::new(v, u)
}

fn wave_spec(doc: &ConfigDocument, w: &WaveDoc, lambda: f64, b: SourceMatrix) -> Result<WaveSpec> {
    let d = doc.grid.len();
    let region = w.region(d)?;
    let mut spec = if w.center_v.is_some() {
        let c = state(&w.center_v, &w.center_u, d, "center")?;
        let r = w.r.ok_or_else(|| Error::Config("wave.r is required with center_v".into()))?;
        let seg = find_segment(&c, r, &doc.segment)?;
        WaveSpec::from_segment(&seg, lambda, region, w.delta, b)
    } else {
        WaveSpec {
            w1: state(&w.w1_v, &w.w1_u, d, "w1")?,
            w2: state(&w.w2_v, &w.w2_u, d, "w2")?,
            mu1: w.mu1.unwrap_or(0.5),
            wave_vector: vector(w.xi.as_deref().ok_or_else(|| Error::Config("missing wave.xi".into()))?, d, "xi")?,
            q_bar: w.q_bar.unwrap_or(0.0),
            lambda,
            region,
            delta: w.delta,
            cutoff_delta: None,
            b,
            profile_resolution: 0,
        }
    };
    spec.cutoff_delta = w.cutoff_delta;
    spec.profile_resolution = w.profile_resolution();
    Ok(spec)
}

fn gen_wave(config: &Path, lambda: Option<f64>, out: Option<&Path>) -> Result<Value> {
    let (doc, base) = ConfigDocument::load(config)?;
    let grid = doc.grid()?;
    let w = doc.wave.as_ref().ok_or_else(|| Error::Config("gen-wave needs a [wave] table".into()))?;
    let lambda = lambda.unwrap_or(w.lambda);
    let spec = wave_spec(&doc, w, lambda, doc.source_matrix()?)?;
    let wave = build_localized_wave(&spec, &grid)?;
    let dev = leading_order_deviation(&wave, &spec)?;
    // State-space threshold 0.05 times the region volume in unit-torus measure.
    let eps = 0.05 * spec.region.volume() / grid.volume();
    let stats = region_stats(&wave.v, &wave.u, &spec, eps);
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| doc.output_dir(&base));
    std::fs::create_dir_all(&dir)?;
    let files = write_state(&dir, wave.v.clone(), wave.u.clone(), wave.q.clone())?;
    let dg = &wave.diagnostics;
    Ok(json!({
        "status": "ok",
        "command": "gen-wave",
        "lambda": lambda,
        "sup_dist": dev,
        "sup_segment_dist": dg.sup_segment_dist,
        "residual_div_v": dg.residual_div_v,
        "residual_relaxed": dg.residual_relaxed,
        "mean_v": dg.mean_v,
        "mean_u": dg.mean_u,
        "vol1": stats.vol1,
        "vol2": stats.vol2,
        "region_volume": stats.region_volume,
        "files": files,
    }))
}

fn write_state(dir: &Path, v: VectorField, u: MatrixField, q: ScalarField) -> Result<Vec<String>> {
    let mut files = Vec::new();
    for (name, f) in [("v.pwfg", Field::Vector(v)), ("u.pwfg", Field::Matrix(u)), ("q.pwfg", Field::Scalar(q))] {
        let p = dir.join(name);
        write_field(&p, &f)?;
        files.push(p.display().to_string());
    }
    Ok(files)
}

fn run_cmd(config: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<Value> {
    let (mut doc, base) = ConfigDocument::load(config)?;
    if let Some(s) = seed {
        doc.seed = s;
    }
    let cfg = doc.run_config(&base)?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| doc.output_dir(&base));
    std::fs::create_dir_all(&dir)?;
    let diag_path = dir.join("diagnostics.jsonl");
    let mut diag = BufWriter::new(File::create(&diag_path)?);
    let mut initial = None;
    let mut io_err = None;
    // Sweep records stream to the file as they arrive; the initial state is
    // reported in the summary.
    let result = run_with(&cfg, |rec| {
        if rec.sweep == 0 {
            initial = Some(rec.total_deficit);
        } else if let Err(e) = write_record(&mut diag, rec) {
            io_err.get_or_insert(e);
        }
    });
    if let Some(e) = io_err {
        return Err(e);
    }
    let state = result?;
    let sol = assemble_solution(&state);
    let mut files = write_state(&dir, state.v.clone(), state.u.clone(), state.q.clone())?;
    let p = dir.join("p.pwfg");
    write_field(&p, &Field::Scalar(sol.p))?;
    files.push(p.display().to_string());
    let last = state.last().expect("initial record");
    Ok(json!({
        "status": "ok",
        "command": "run",
        "seed": doc.seed,
        "sweeps": state.history.len() - 1,
        "initial_deficit": initial,
        "final_deficit": last.total_deficit,
        "weak_residual": last.weak_residual,
        "hminus1_to_v0": last.hminus1_to_v0,
        "l2_to_v0": last.l2_to_v0,
        "sigma_met": cfg.sigma.map(|s| last.hminus1_to_v0 <= s),
        "constraint_violation_l1": sol.violation_l1,
        "diagnostics": diag_path.display().to_string(),
        "files": files,
    }))
}

fn check(config: &Path, v: &Path, u: Option<&Path>, q: Option<&Path>) -> Result<Value> {
    let (doc, base) = ConfigDocument::load(config)?;
    let cfg = doc.run_config(&base)?;
    let grid = &cfg.grid;
    let on_grid = |f: Field| if f.grid() == grid { Ok(f) } else { Err(Error::Format("field grid differs from the config grid".into())) };
    let Field::Vector(v) = on_grid(read_field(v)?)? else {
        return Err(Error::Format("--v must hold a vector field".into()));
    };
    let weak = weak_residual(&v, &cfg.b, cfg.weak_tests, cfg.rng_seed ^ 0x5eed);
    let mut summary = json!({
        "status": "ok",
        "command": "check",
        "weak_residual": weak,
        "div_v_l2": div(&v).l2(),
    });
    if let (Some(u), Some(q)) = (u, q) {
        let (Field::Matrix(u), Field::Scalar(q)) = (on_grid(read_field(u)?)?, on_grid(read_field(q)?)?) else {
            return Err(Error::Format("--u must hold a matrix field and --q a scalar field".into()));
        };
        let v0 = cfg.base_flow.as_ref().map(|b| b.v.clone()).unwrap_or_else(|| VectorField::zeros(grid));
        let state = IterationState { v, u, q, e: cfg.validate()?, v0, sweep: 0, history: Vec::new() };
        let rec = diagnose(&state, &cfg, 0, 0.0)?;
        summary["subsolution"] = serde_json::to_value(&rec).map_err(|e| Error::Format(e.to_string()))?;
    }
    Ok(summary)
}

fn export_csv(field: &Path, out: Option<&Path>) -> Result<Value> {
    let f = read_field(field)?;
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| field.with_extension("csv"));
    let mut w = BufWriter::new(File::create(&path)?);
    write_csv(&f, &mut w)?;
    w.flush()?;
    Ok(json!({
        "status": "ok",
        "command": "export-csv",
        "rows": f.grid().len(),
        "kind": f.kind(),
        "columns": csv_columns(&f),
        "file": path.display().to_string(),
    }))
}
