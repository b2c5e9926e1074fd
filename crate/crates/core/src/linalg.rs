//! Small dense kernels used on hot per-node paths.

use nalgebra::DMatrix;

/// Largest eigenvalue of a symmetric `d x d` matrix stored row-major.
///
/// Closed forms for d = 2 and d = 3; falls back to a symmetric eigensolver
/// otherwise. Only the upper triangle is read.
pub fn lambda_max_sym(m: &[f64], d: usize) -> f64 {
    debug_assert_eq!(m.len(), d * d);
    match d {
        2 => {
            let (p, s, t) = (m[0], m[1], m[3]);
            0.5 * (p + t) + (0.25 * (p - t) * (p - t) + s * s).sqrt()
        }
        3 => lambda_max_sym3(m),
        _ => {
            let mat = DMatrix::from_fn(d, d, |i, j| if i <= j { m[i * d + j] } else { m[j * d + i] });
            mat.symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max)
        }
    }
}

fn lambda_max_sym3(m: &[f64]) -> f64 {
    let (a00, a01, a02, a11, a12, a22) = (m[0], m[1], m[2], m[4], m[5], m[8]);
    let p1 = a01 * a01 + a02 * a02 + a12 * a12;
    let q = (a00 + a11 + a22) / 3.0;
    let (b00, b11, b22) = (a00 - q, a11 - q, a22 - q);
    let p2 = b00 * b00 + b11 * b11 + b22 * b22 + 2.0 * p1;
    if p2 <= f64::MIN_POSITIVE {
        return q;
    }
    let p = (p2 / 6.0).sqrt();
    let det = b00 * (b11 * b22 - a12 * a12) - a01 * (a01 * b22 - a12 * a02)
        + a02 * (a01 * a12 - b11 * a02);
    let r = (det / (2.0 * p * p * p)).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    q + 2.0 * p * phi.cos()
}

/// `v v^T - U` for row-major `U`, written into `out`.
pub fn outer_minus(v: &[f64], u: &[f64], out: &mut [f64]) {
    let d = v.len();
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = v[i] * v[j] - u[i * d + j];
        }
    }
}

/// Margin `r/d - lambda_max(v v^T - U)` on raw slices.
pub fn margin_raw(v: &[f64], u: &[f64], r: f64) -> f64 {
    let d = v.len();
    let mut buf = [0.0f64; 16];
    if d * d <= buf.len() {
        outer_minus(v, u, &mut buf[..d * d]);
        r / d as f64 - lambda_max_sym(&buf[..d * d], d)
    } else {
        let mut m = vec![0.0; d * d];
        outer_minus(v, u, &mut m);
        r / d as f64 - lambda_max_sym(&m, d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn closed_forms_match_eigensolver() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in [2usize, 3] {
            for _ in 0..200 {
                let a = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-2.0..2.0));
                let s = &a + a.transpose();
                let flat: Vec<f64> = (0..d * d).map(|k| s[(k / d, k % d)]).collect();
                let want = s
                    .clone()
                    .symmetric_eigen()
                    .eigenvalues
                    .iter()
                    .cloned()
                    .fold(f64::NEG_INFINITY, f64::max);
                assert!((lambda_max_sym(&flat, d) - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn repeated_eigenvalues() {
        let eye = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        assert!((lambda_max_sym(&eye, 3) - 1.0).abs() < 1e-15);
        let m = [2.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0];
        assert!((lambda_max_sym(&m, 3) - 2.0).abs() < 1e-12);
    }
}
