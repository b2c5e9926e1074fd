//! Fourier-multiplier calculus on the torus.
//!
//! Derivatives use the wavenumber table of [`TorusGrid::deriv_wavenumber`],
//! in which the Nyquist index of every axis is mapped to zero. With that
//! convention `div ∘ grad = laplacian`, `div ∘ leray = 0` and
//! `div ∘ anti_divergence = id` hold exactly mode by mode, so the discrete
//! identities are limited only by rounding.

use num_complex::Complex64;

use crate::error::{Error, Result};

use super::field::{MatrixField, ScalarField, VectorField};
use super::grid::{FftEngine, TorusGrid};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Relative tolerance on the mean of inputs that must be mean-free.
pub const MEAN_TOL: f64 = 1e-10;

/// FFT plans plus per-mode wavevectors for one grid.
pub(crate) struct Spectral {
    grid: TorusGrid,
    fft: FftEngine,
    /// Derivative wavevectors, `d` entries per mode.
    k: Vec<f64>,
    /// Index of the mode `-k` for each mode `k`.
    mirror: Vec<usize>,
}

impl Spectral {
    pub fn new(grid: &TorusGrid) -> Self {
        let d = grid.dim();
        let mut k = vec![0.0; grid.len() * d];
        grid.for_each_mode(|n, kv| k[n * d..(n + 1) * d].copy_from_slice(kv));
        let mut idx = vec![0; d];
        let mirror = (0..grid.len())
            .map(|n| {
                grid.unravel(n, &mut idx);
                for (i, &m) in idx.iter_mut().zip(grid.dims()) {
                    *i = (m - *i) % m;
                }
                grid.ravel(&idx)
            })
            .collect();
        Spectral { grid: grid.clone(), fft: grid.fft(), k, mirror }
    }

    #[inline]
    pub fn kvec(&self, n: usize) -> &[f64] {
        let d = self.grid.dim();
        &self.k[n * d..(n + 1) * d]
    }

    pub fn forward(&self, data: &[f64]) -> Vec<Complex64> {
        self.fft.forward_real(data)
    }

    pub fn inverse(&self, spec: Vec<Complex64>) -> Vec<f64> {
        self.fft.inverse_real(spec)
    }

    /// `forward` of several real arrays, two per complex transform.
    pub fn forward_many(&self, data: &[&[f64]]) -> Vec<Vec<Complex64>> {
        let mut out = Vec::with_capacity(data.len());
        self.forward_each(data, |_, hat| out.push(hat));
        out
    }

    /// Hands the spectrum of each array to `f` in order, so callers can
    /// reduce spectra without holding all of them.
    pub fn forward_each(&self, data: &[&[f64]], mut f: impl FnMut(usize, Vec<Complex64>)) {
        for (p, pair) in data.chunks(2).enumerate() {
            if pair.len() == 1 {
                f(2 * p, self.forward(pair[0]));
                continue;
            }
            let mut z: Vec<Complex64> = pair[0].iter().zip(pair[1]).map(|(&a, &b)| Complex64::new(a, b)).collect();
            self.fft.forward_complex(&mut z);
            // a and b are real, so their spectra are the Hermitian and
            // anti-Hermitian parts of z; split in place, mode pair by pair.
            let mut fb = vec![ZERO; z.len()];
            for n in 0..z.len() {
                let m = self.mirror[n];
                if m < n {
                    continue;
                }
                let (zn, zm) = (z[n], z[m].conj());
                z[n] = 0.5 * (zn + zm);
                fb[n] = -0.5 * I * (zn - zm);
                z[m] = z[n].conj();
                fb[m] = fb[n].conj();
            }
            f(2 * p, z);
            f(2 * p + 1, fb);
        }
    }

    /// `inverse` of several spectra, two per complex transform. Like
    /// `inverse`, keeps only the real part, i.e. the Hermitian part of each
    /// spectrum.
    pub fn inverse_many(&self, spectra: &[Vec<Complex64>]) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(spectra.len());
        let mut z = vec![ZERO; self.grid.len()];
        let scale = 1.0 / self.grid.len() as f64;
        for pair in spectra.chunks(2) {
            let (a, b) = (&pair[0], pair.get(1));
            for n in 0..z.len() {
                let m = self.mirror[n];
                z[n] = 0.5 * (a[n] + a[m].conj());
                if let Some(b) = b {
                    z[n] += 0.5 * I * (b[n] + b[m].conj());
                }
            }
            self.fft.inverse_complex(&mut z);
            out.push(z.iter().map(|c| c.re * scale).collect());
            if b.is_some() {
                out.push(z.iter().map(|c| c.im * scale).collect());
            }
        }
        out
    }

    /// `inverse(m(k) * forward(data))`.
    pub fn apply(&self, data: &[f64], m: impl Fn(&[f64]) -> Complex64) -> Vec<f64> {
        let mut s = self.forward(data);
        for (n, c) in s.iter_mut().enumerate() {
            *c *= m(self.kvec(n));
        }
        self.inverse(s)
    }

    /// Divergence of a vector given by its spectra.
    pub fn div_hat(&self, comps: &[Vec<Complex64>]) -> Vec<Complex64> {
        let d = self.grid.dim();
        (0..self.grid.len())
            .map(|n| {
                let k = self.kvec(n);
                (0..d).map(|a| I * k[a] * comps[a][n]).sum()
            })
            .collect()
    }

    /// Per-mode minimal-norm symmetric trace-free `S` with `i S k = f`,
    /// returned as the upper triangle `(i, j), i <= j` in row order.
    pub fn anti_divergence_hat(&self, f: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
        let d = self.grid.dim();
        let npairs = d * (d + 1) / 2;
        let mut out = vec![vec![ZERO; self.grid.len()]; npairs];
        let mut fk = vec![ZERO; d];
        let mut sk = vec![ZERO; npairs];
        for n in 0..self.grid.len() {
            for a in 0..d {
                fk[a] = f[a][n];
            }
            anti_div_mode(self.kvec(n), &fk, &mut sk);
            for p in 0..npairs {
                out[p][n] = sk[p];
            }
        }
        out
    }
}

/// Minimal-Frobenius-norm symmetric trace-free `S` with `i S k = f` for one
/// mode, written as the upper triangle into `out`; zero when `k = 0`.
///
/// With `k̂ = k/|k|`, `g = -i f/|k|`, `alpha = g·k̂` and `g⊥ = g - alpha k̂`:
/// `S = k̂⊗g⊥ + g⊥⊗k̂ + alpha (d/(d-1) k̂⊗k̂ - I/(d-1))`.
#[inline]
pub(crate) fn anti_div_mode(k: &[f64], f: &[Complex64], out: &mut [Complex64]) {
    let d = k.len();
    let kk: f64 = k.iter().map(|x| x * x).sum();
    if kk == 0.0 {
        out.iter_mut().for_each(|c| *c = ZERO);
        return;
    }
    let kn = kk.sqrt();
    let mut kh = [0.0f64; 8];
    let mut g = [ZERO; 8];
    for a in 0..d {
        kh[a] = k[a] / kn;
        g[a] = -I * f[a] / kn;
    }
    let alpha: Complex64 = (0..d).map(|a| g[a] * kh[a]).sum();
    for a in 0..d {
        g[a] -= alpha * kh[a];
    }
    let dm1 = (d - 1) as f64;
    let mut p = 0;
    for i in 0..d {
        for j in i..d {
            let mut s = kh[i] * g[j] + g[i] * kh[j] + alpha * (d as f64 / dm1) * kh[i] * kh[j];
            if i == j {
                s -= alpha / dm1;
            }
            out[p] = s;
            p += 1;
        }
    }
}

fn check_mean(data: &[f64], what: &str) -> Result<()> {
    let mean = data.iter().sum::<f64>() / data.len() as f64;
    let sup = data.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if mean.abs() > MEAN_TOL * sup {
        return Err(match what {
            "anti_divergence" => Error::MeanObstruction { mean: mean.abs() },
            _ => Error::Precondition(format!("{what}: input mean {mean:e} is not zero")),
        });
    }
    Ok(())
}

/// Expands the upper triangle of a trace-free symmetric field into `d²`
/// row-major components.
pub(crate) fn expand_sym(d: usize, upper: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut full: Vec<Option<Vec<f64>>> = vec![None; d * d];
    let mut p = 0;
    let mut it = upper.into_iter();
    for i in 0..d {
        for j in i..d {
            let c = it.next().expect("upper triangle length");
            if i != j {
                full[j * d + i] = Some(c.clone());
            }
            full[i * d + j] = Some(c);
            p += 1;
        }
    }
    debug_assert_eq!(p, d * (d + 1) / 2);
    let mut full: Vec<Vec<f64>> = full.into_iter().map(|c| c.expect("filled")).collect();
    // The spectra are trace-free; fixing the last diagonal entry keeps the
    // physical trace exactly zero rather than zero up to transform rounding.
    let last = d * d - 1;
    for n in 0..full[last].len() {
        full[last][n] = -(0..d - 1).map(|i| full[i * d + i][n]).sum::<f64>();
    }
    full
}

pub fn grad(f: &ScalarField) -> VectorField {
    let sp = Spectral::new(f.grid());
    let s = sp.forward(f.data());
    let comps = (0..f.grid().dim())
        .map(|a| {
            let h = s.iter().enumerate().map(|(n, c)| I * sp.kvec(n)[a] * c).collect();
            sp.inverse(h)
        })
        .collect();
    VectorField::from_components(f.grid(), comps).expect("shape")
}

pub fn div(v: &VectorField) -> ScalarField {
    let sp = Spectral::new(v.grid());
    let hats: Vec<_> = v.components().iter().map(|c| sp.forward(c)).collect();
    ScalarField::from_vec(v.grid(), sp.inverse(sp.div_hat(&hats))).expect("shape")
}

/// Row-wise divergence `(div U)_i = sum_j d_j U_ij`.
pub fn div_matrix(u: &MatrixField) -> VectorField {
    let sp = Spectral::new(u.grid());
    let d = u.dim();
    let comps = (0..d)
        .map(|i| {
            let row: Vec<_> = (0..d).map(|j| sp.forward(u.comp(i, j))).collect();
            sp.inverse(sp.div_hat(&row))
        })
        .collect();
    VectorField::from_components(u.grid(), comps).expect("shape")
}

fn lap_mult(k: &[f64]) -> Complex64 {
    Complex64::new(-k.iter().map(|x| x * x).sum::<f64>(), 0.0)
}

fn inv_lap_mult(k: &[f64]) -> Complex64 {
    let kk: f64 = k.iter().map(|x| x * x).sum();
    if kk == 0.0 {
        ZERO
    } else {
        Complex64::new(-1.0 / kk, 0.0)
    }
}

pub fn laplacian(f: &ScalarField) -> ScalarField {
    let sp = Spectral::new(f.grid());
    ScalarField::from_vec(f.grid(), sp.apply(f.data(), lap_mult)).expect("shape")
}

pub fn laplacian_vec(v: &VectorField) -> VectorField {
    let sp = Spectral::new(v.grid());
    let comps = v.components().iter().map(|c| sp.apply(c, lap_mult)).collect();
    VectorField::from_components(v.grid(), comps).expect("shape")
}

/// Zero-mean solution of `laplacian(u) = f`.
pub fn inv_laplacian(f: &ScalarField) -> Result<ScalarField> {
    check_mean(f.data(), "inv_laplacian")?;
    let sp = Spectral::new(f.grid());
    ScalarField::from_vec(f.grid(), sp.apply(f.data(), inv_lap_mult))
}

/// Component-wise [`inv_laplacian`].
pub fn inv_laplacian_vec(v: &VectorField) -> Result<VectorField> {
    for c in v.components() {
        check_mean(c, "inv_laplacian")?;
    }
    let sp = Spectral::new(v.grid());
    let comps = v.components().iter().map(|c| sp.apply(c, inv_lap_mult)).collect();
    VectorField::from_components(v.grid(), comps)
}

/// Correction `v'' = -grad inv_laplacian div v'`, so that `v' + v''` is
/// divergence free.
pub fn leray_correct(v: &VectorField) -> VectorField {
    let sp = Spectral::new(v.grid());
    let hats: Vec<_> = v.components().iter().map(|c| sp.forward(c)).collect();
    let dv = sp.div_hat(&hats);
    let comps = (0..v.grid().dim())
        .map(|a| {
            let h = dv
                .iter()
                .enumerate()
                .map(|(n, &c)| {
                    let k = sp.kvec(n);
                    let kk: f64 = k.iter().map(|x| x * x).sum();
                    if kk == 0.0 {
                        ZERO
                    } else {
                        // -grad Δ⁻¹ (i k·v) = -(i k)(-1/|k|²)(i k·v) = -k (k·v)/|k|²
                        I * k[a] * c / kk
                    }
                })
                .collect();
            sp.inverse(h)
        })
        .collect();
    VectorField::from_components(v.grid(), comps).expect("shape")
}

/// Symmetric trace-free zero-mean `R[f]` with `div R[f] = f`.
pub fn anti_divergence(f: &VectorField) -> Result<MatrixField> {
    for c in f.components() {
        check_mean(c, "anti_divergence")?;
    }
    let sp = Spectral::new(f.grid());
    let hats: Vec<_> = f.components().iter().map(|c| sp.forward(c)).collect();
    let upper: Vec<Vec<f64>> =
        sp.anti_divergence_hat(&hats).into_iter().map(|h| sp.inverse(h)).collect();
    MatrixField::from_components(f.grid(), expand_sym(f.grid().dim(), upper))
}

/// `sqrt(sum_k |v̂ - v̂₀|² / (1 + |k|²))` with mean-normalised coefficients.
pub fn hminus1_distance(v: &VectorField, v0: &VectorField) -> Result<f64> {
    if v.grid() != v0.grid() {
        return Err(Error::InvalidParameter("fields live on different grids".into()));
    }
    let grid = v.grid();
    let d = grid.dim();
    let fft = grid.fft();
    // Weights from the true (signed, Nyquist kept) wavenumbers.
    let tables: Vec<Vec<f64>> =
        (0..d).map(|a| (0..grid.dims()[a]).map(|j| grid.wavenumber(a, j)).collect()).collect();
    let mut weight = vec![0.0; grid.len()];
    let mut idx = vec![0usize; d];
    for (n, w) in weight.iter_mut().enumerate() {
        grid.unravel(n, &mut idx);
        let kk: f64 = (0..d).map(|a| tables[a][idx[a]].powi(2)).sum();
        *w = 1.0 / (1.0 + kk);
    }
    let norm = grid.len() as f64;
    let mut total = 0.0;
    for a in 0..d {
        let diff: Vec<f64> = v.comp(a).iter().zip(v0.comp(a)).map(|(x, y)| x - y).collect();
        let s = fft.forward_real(&diff);
        total += s.iter().zip(&weight).map(|(c, w)| c.norm_sqr() * w).sum::<f64>();
    }
    Ok((total).sqrt() / norm)
}
