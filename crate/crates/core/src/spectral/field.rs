use crate::error::{Error, Result};

use super::grid::TorusGrid;

fn check_len(grid: &TorusGrid, len: usize) -> Result<()> {
    if len != grid.len() {
        return Err(Error::InvalidParameter(format!(
            "field has {len} samples, grid has {}",
            grid.len()
        )));
    }
    Ok(())
}

fn mean_of(a: &[f64]) -> f64 {
    a.iter().sum::<f64>() / a.len() as f64
}

fn sup_of(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Real scalar samples on a torus grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: TorusGrid,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &TorusGrid) -> Self {
        ScalarField { grid: grid.clone(), data: vec![0.0; grid.len()] }
    }

    pub fn from_vec(grid: &TorusGrid, data: Vec<f64>) -> Result<Self> {
        check_len(grid, data.len())?;
        Ok(ScalarField { grid: grid.clone(), data })
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: &TorusGrid, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let mut x = vec![0.0; grid.dim()];
        let data = (0..grid.len())
            .map(|n| {
                grid.coords_into(n, &mut x);
                f(&x)
            })
            .collect();
        ScalarField { grid: grid.clone(), data }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Torus average.
    pub fn mean(&self) -> f64 {
        mean_of(&self.data)
    }

    /// Root-mean-square norm (L² norm of the normalised torus measure).
    pub fn l2(&self) -> f64 {
        (self.data.iter().map(|x| x * x).sum::<f64>() / self.data.len() as f64).sqrt()
    }

    pub fn sup(&self) -> f64 {
        sup_of(&self.data)
    }

    pub fn scaled(&self, s: f64) -> Self {
        ScalarField { grid: self.grid.clone(), data: self.data.iter().map(|x| x * s).collect() }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &ScalarField) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }
}

/// `d`-vector samples stored component-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: TorusGrid,
    comps: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn zeros(grid: &TorusGrid) -> Self {
        VectorField { grid: grid.clone(), comps: vec![vec![0.0; grid.len()]; grid.dim()] }
    }

    pub fn from_components(grid: &TorusGrid, comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.len() != grid.dim() {
            return Err(Error::InvalidParameter(format!(
                "vector field needs {} components, got {}",
                grid.dim(),
                comps.len()
            )));
        }
        for c in &comps {
            check_len(grid, c.len())?;
        }
        Ok(VectorField { grid: grid.clone(), comps })
    }

    pub fn from_fn(grid: &TorusGrid, mut f: impl FnMut(&[f64], &mut [f64])) -> Self {
        let d = grid.dim();
        let mut out = Self::zeros(grid);
        let mut x = vec![0.0; d];
        let mut val = vec![0.0; d];
        for n in 0..grid.len() {
            grid.coords_into(n, &mut x);
            val.iter_mut().for_each(|v| *v = 0.0);
            f(&x, &mut val);
            for i in 0..d {
                out.comps[i][n] = val[i];
            }
        }
        out
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn comp(&self, i: usize) -> &[f64] {
        &self.comps[i]
    }

    pub fn comp_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.comps[i]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.comps
    }

    pub fn into_components(self) -> Vec<Vec<f64>> {
        self.comps
    }

    pub fn at(&self, n: usize, out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.comps) {
            *o = c[n];
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        self.comps.iter().map(|c| mean_of(c)).collect()
    }

    /// RMS of the pointwise Euclidean norm.
    pub fn l2(&self) -> f64 {
        let s: f64 = self.comps.iter().flat_map(|c| c.iter()).map(|x| x * x).sum();
        (s / self.grid.len() as f64).sqrt()
    }

    /// Largest pointwise Euclidean norm.
    pub fn sup(&self) -> f64 {
        (0..self.grid.len())
            .map(|n| self.comps.iter().map(|c| c[n] * c[n]).sum::<f64>())
            .fold(0.0, f64::max)
            .sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        VectorField {
            grid: self.grid.clone(),
            comps: self.comps.iter().map(|c| c.iter().map(|x| x * s).collect()).collect(),
        }
    }

    pub fn axpy(&mut self, s: f64, other: &VectorField) {
        for (a, b) in self.comps.iter_mut().zip(&other.comps) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += s * y;
            }
        }
    }
}

/// `d x d` matrix samples stored as `d²` row-major component arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixField {
    grid: TorusGrid,
    comps: Vec<Vec<f64>>,
}

impl MatrixField {
    pub fn zeros(grid: &TorusGrid) -> Self {
        let d = grid.dim();
        MatrixField { grid: grid.clone(), comps: vec![vec![0.0; grid.len()]; d * d] }
    }

    pub fn from_components(grid: &TorusGrid, comps: Vec<Vec<f64>>) -> Result<Self> {
        let d = grid.dim();
        if comps.len() != d * d {
            return Err(Error::InvalidParameter(format!(
                "matrix field needs {} components, got {}",
                d * d,
                comps.len()
            )));
        }
        for c in &comps {
            check_len(grid, c.len())?;
        }
        Ok(MatrixField { grid: grid.clone(), comps })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn comp(&self, i: usize, j: usize) -> &[f64] {
        &self.comps[i * self.dim() + j]
    }

    pub fn comp_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let d = self.dim();
        &mut self.comps[i * d + j]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.comps
    }

    pub fn into_components(self) -> Vec<Vec<f64>> {
        self.comps
    }

    /// Row-major matrix at node `n`.
    pub fn at(&self, n: usize, out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.comps) {
            *o = c[n];
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        self.comps.iter().map(|c| mean_of(c)).collect()
    }

    /// RMS of the pointwise Frobenius norm.
    pub fn l2(&self) -> f64 {
        let s: f64 = self.comps.iter().flat_map(|c| c.iter()).map(|x| x * x).sum();
        (s / self.grid.len() as f64).sqrt()
    }

    pub fn sup(&self) -> f64 {
        (0..self.grid.len())
            .map(|n| self.comps.iter().map(|c| c[n] * c[n]).sum::<f64>())
            .fold(0.0, f64::max)
            .sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        MatrixField {
            grid: self.grid.clone(),
            comps: self.comps.iter().map(|c| c.iter().map(|x| x * s).collect()).collect(),
        }
    }

    pub fn axpy(&mut self, s: f64, other: &MatrixField) {
        for (a, b) in self.comps.iter_mut().zip(&other.comps) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += s * y;
            }
        }
    }

    /// Largest pointwise deviation from symmetric trace-free form.
    pub fn sym0_defect(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for n in 0..self.grid.len() {
            let mut tr = 0.0;
            for i in 0..d {
                tr += self.comps[i * d + i][n];
                for j in i + 1..d {
                    worst = worst.max((self.comps[i * d + j][n] - self.comps[j * d + i][n]).abs());
                }
            }
            worst = worst.max(tr.abs());
        }
        worst
    }
}
