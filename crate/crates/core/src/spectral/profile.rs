//! Periodic profile ladder `h_0, ..., h_6` on `[0, 1)`.
//!
//! `h_0` is the two-valued step (`-mu2` on `(0, mu1]`, `mu1` on `(mu1, 1]`)
//! convolved with a compact bump of width `delta / 4`; each further profile is
//! the zero-mean primitive of the previous one. The primitives are taken in
//! Fourier space on the `m`-point table, so every table has mean exactly zero
//! up to rounding and `h_k' = h_{k-1}` holds to interpolation accuracy.

use std::f64::consts::TAU;
use std::sync::OnceLock;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Number of profiles in the ladder.
pub const LADDER_LEN: usize = 7;

/// Default table resolution.
pub const DEFAULT_M: usize = 8192;

#[derive(Debug, Clone)]
pub struct ProfileLadder {
    pub mu1: f64,
    pub mu2: f64,
    pub delta: f64,
    m: usize,
    tables: Vec<Vec<f64>>,
}

fn bump(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - u * u)).exp()
    }
}

const CDF_INTERVALS: usize = 2048;

/// Cumulative integral of the normalised bump on `[-1, 1]` at
/// `CDF_INTERVALS + 1` nodes, plus the normalisation constant.
fn bump_cdf() -> &'static (Vec<f64>, f64) {
    static CDF: OnceLock<(Vec<f64>, f64)> = OnceLock::new();
    CDF.get_or_init(|| {
        // 5-point Gauss-Legendre on each subinterval.
        let nodes = [
            (0.0, 128.0 / 225.0),
            (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
            (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
            (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
            (0.906_179_845_938_664, 0.236_926_885_056_189_1),
        ];
        let h = 2.0 / CDF_INTERVALS as f64;
        let mut acc = vec![0.0; CDF_INTERVALS + 1];
        for i in 0..CDF_INTERVALS {
            let mid = -1.0 + (i as f64 + 0.5) * h;
            let s: f64 = nodes.iter().map(|(x, w)| w * bump(mid + 0.5 * h * x)).sum();
            acc[i + 1] = acc[i] + 0.5 * h * s;
        }
        let z = acc[CDF_INTERVALS];
        acc.iter_mut().for_each(|a| *a /= z);
        (acc, z)
    })
}

/// Smoothed Heaviside: the CDF of the bump rescaled to `[-w/2, w/2]`.
fn smooth_step(t: f64, w: f64) -> f64 {
    let u = 2.0 * t / w;
    if u <= -1.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return 1.0;
    }
    let (cdf, z) = bump_cdf();
    let h = 2.0 / CDF_INTERVALS as f64;
    let pos = (u + 1.0) / h;
    let i = (pos.floor() as usize).min(CDF_INTERVALS - 1);
    let s = pos - i as f64;
    // Cubic Hermite with the exact derivative bump / z.
    let (y0, y1) = (cdf[i], cdf[i + 1]);
    let u0 = -1.0 + i as f64 * h;
    let (d0, d1) = (bump(u0) / z * h, bump(u0 + h) / z * h);
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * y0
        + (s3 - 2.0 * s2 + s) * d0
        + (-2.0 * s3 + 3.0 * s2) * y1
        + (s3 - s2) * d1
}

fn mean(a: &[f64]) -> f64 {
    a.iter().sum::<f64>() / a.len() as f64
}

fn sup(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Zero-mean periodic primitive of a zero-mean table on `[0, 1)`.
fn spectral_primitive(h: &[f64], planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let m = h.len();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let mut buf: Vec<Complex64> = h.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fwd.process(&mut buf);
    for (j, c) in buf.iter_mut().enumerate() {
        if j == 0 || j == m / 2 {
            *c = Complex64::new(0.0, 0.0);
        } else {
            let k = if j < m / 2 { j as f64 } else { j as f64 - m as f64 };
            *c /= Complex64::new(0.0, TAU * k);
        }
    }
    inv.process(&mut buf);
    let mut out: Vec<f64> = buf.iter().map(|c| c.re / m as f64).collect();
    let mu = mean(&out);
    out.iter_mut().for_each(|x| *x -= mu);
    out
}

/// Builds the ladder for the split `mu1 + mu2 = 1`.
pub fn build_profiles(mu1: f64, mu2: f64, delta: f64, m: usize) -> Result<ProfileLadder> {
    if !(mu1 > 0.0 && mu2 > 0.0) || (mu1 + mu2 - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "profile weights must be positive with mu1 + mu2 = 1, got ({mu1}, {mu2})"
        )));
    }
    if !(delta > 0.0 && delta < 0.5 * mu1.min(mu2)) {
        return Err(Error::InvalidParameter(format!(
            "mollification delta = {delta} must lie in (0, min(mu1, mu2)/2)"
        )));
    }
    if m < 256 {
        return Err(Error::InvalidParameter(format!("profile resolution m = {m} < 256")));
    }
    let w = 0.25 * delta;
    let sample = |jump: f64| -> Vec<f64> {
        (0..m)
            .map(|i| {
                let s = i as f64 / m as f64;
                let ind = smooth_step(s - jump, w) - smooth_step(s - 1.0, w)
                    + smooth_step(s + 1.0 - jump, w)
                    - smooth_step(s, w);
                (-mu2 + ind).clamp(-mu2, mu1)
            })
            .collect()
    };
    // The discrete mean decreases with unit slope in the position of the
    // upward jump; a few Newton steps on that position zero it without
    // touching the plateau values or the bounds.
    let mut jump = mu1;
    let mut h0 = sample(jump);
    for _ in 0..5 {
        let mu = mean(&h0);
        if mu.abs() <= 1e-16 {
            break;
        }
        jump += mu;
        h0 = sample(jump);
    }
    let mut planner = FftPlanner::new();
    let mut tables = vec![h0];
    for k in 1..LADDER_LEN {
        let next = spectral_primitive(&tables[k - 1], &mut planner);
        tables.push(next);
    }
    Ok(ProfileLadder { mu1, mu2, delta, m, tables })
}

impl ProfileLadder {
    pub fn resolution(&self) -> usize {
        self.m
    }

    pub fn table(&self, k: usize) -> &[f64] {
        &self.tables[k]
    }

    /// `h_k(s)` for any real `s` (period 1), by periodic cubic Lagrange
    /// interpolation of the table.
    pub fn eval(&self, k: usize, s: f64) -> f64 {
        let t = &self.tables[k];
        let m = self.m;
        let pos = s.rem_euclid(1.0) * m as f64;
        let i = pos.floor() as isize;
        let f = pos - i as f64;
        let at = |j: isize| t[j.rem_euclid(m as isize) as usize];
        let (ym, y0, y1, y2) = (at(i - 1), at(i), at(i + 1), at(i + 2));
        let c_m = -f * (f - 1.0) * (f - 2.0) / 6.0;
        let c_0 = (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0;
        let c_1 = -(f + 1.0) * f * (f - 2.0) / 2.0;
        let c_2 = (f + 1.0) * f * (f - 1.0) / 6.0;
        c_m * ym + c_0 * y0 + c_1 * y1 + c_2 * y2
    }

    pub fn sup(&self, k: usize) -> f64 {
        sup(&self.tables[k])
    }

    pub fn mean(&self, k: usize) -> f64 {
        mean(&self.tables[k])
    }
}
