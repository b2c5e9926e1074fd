use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::spectral::{Spectral, VectorField};
use crate::state::SourceMatrix;

use super::apply_b;

/// Largest integer frequency per axis of the random test fields.
const TEST_BAND: i64 = 4;
/// Fourier modes per test field.
const TEST_MODES: usize = 3;

/// Torus averages `<f cos(k.x)>` and `<f sin(k.x)>` read off a spectrum.
fn cos_sin(hat: &[Complex64], idx: usize, n: f64) -> (f64, f64) {
    (hat[idx].re / n, -hat[idx].im / n)
}

/// Largest normalized weak residual of the steady equations over random
/// band-limited tests: divergence-free `φ` for the momentum balance
/// `<v ⊗ v : ∇φ + φ · B v>` and scalars `ψ` for `<v · ∇ψ>`.
///
/// Momentum terms are divided by `|φ|_{C¹} (|v|² + |B| |v|)` and mass terms
/// by `|ψ|_{C¹} |v|`, with `L²` torus averages for `v` and the Fourier
/// coefficient sum bounding the `C¹` norms. Returns 0 for `v = 0`.
pub fn weak_residual(v: &VectorField, b: &SourceMatrix, n_tests: usize, seed: u64) -> f64 {
    let grid = v.grid();
    let d = grid.dim();
    let vl2 = v.l2();
    if vl2 == 0.0 || n_tests == 0 {
        return 0.0;
    }
    let sp = Spectral::new(grid);
    let nn = grid.len() as f64;
    let vhat: Vec<Vec<Complex64>> = (0..d).map(|a| sp.forward(v.comp(a))).collect();
    let bv = apply_b(b, v);
    let bhat: Vec<Vec<Complex64>> = (0..d).map(|a| sp.forward(bv.comp(a))).collect();
    let mut mhat = vec![Vec::new(); d * d];
    for i in 0..d {
        for j in i..d {
            let prod: Vec<f64> = v.comp(i).iter().zip(v.comp(j)).map(|(x, y)| x * y).collect();
            mhat[i * d + j] = sp.forward(&prod);
        }
    }
    let band = TEST_BAND.min(grid.dims().iter().map(|&n| n as i64 / 2 - 1).min().unwrap_or(1));
    let mom_scale = vl2 * vl2 + b.0.norm() * vl2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n_tests {
        let (mut mom, mut c1_phi, mut mass, mut c1_psi) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..TEST_MODES {
            let k: Vec<i64> = loop {
                let k: Vec<i64> = (0..d).map(|_| rng.gen_range(-band..=band)).collect();
                if k.iter().any(|&x| x != 0) {
                    break k;
                }
            };
            let kf: Vec<f64> = k.iter().map(|&x| x as f64).collect();
            let kk: f64 = kf.iter().map(|x| x * x).sum();
            let idx: Vec<usize> =
                k.iter().zip(grid.dims()).map(|(&x, &n)| x.rem_euclid(n as i64) as usize).collect();
            let idx = grid.ravel(&idx);
            // Amplitudes orthogonal to k keep φ divergence-free.
            let coef = |rng: &mut ChaCha8Rng| {
                let mut c: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let kc: f64 = c.iter().zip(&kf).map(|(x, y)| x * y).sum();
                c.iter_mut().zip(&kf).for_each(|(x, y)| *x -= kc * y / kk);
                c
            };
            let a = coef(&mut rng);
            let bb = coef(&mut rng);
            let (alpha, beta): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let knorm = kk.sqrt();
            let norm = |c: &[f64]| c.iter().map(|x| x * x).sum::<f64>().sqrt();
            c1_phi += (norm(&a) + norm(&bb)) * (1.0 + knorm);
            c1_psi += (alpha.abs() + beta.abs()) * (1.0 + knorm);
            for i in 0..d {
                for j in 0..d {
                    let h = if i <= j { &mhat[i * d + j] } else { &mhat[j * d + i] };
                    let (c, s) = cos_sin(h, idx, nn);
                    // ∂_j φ_i = k_j (b_i cos - a_i sin).
                    mom += kf[j] * (bb[i] * c - a[i] * s);
                }
                let (c, s) = cos_sin(&bhat[i], idx, nn);
                mom += a[i] * c + bb[i] * s;
                let (c, s) = cos_sin(&vhat[i], idx, nn);
                mass += kf[i] * (beta * c - alpha * s);
            }
        }
        let r = mom.abs() / (c1_phi * mom_scale).max(f64::MIN_POSITIVE)
            + mass.abs() / (c1_psi * vl2).max(f64::MIN_POSITIVE);
        worst = worst.max(r);
    }
    worst
}
