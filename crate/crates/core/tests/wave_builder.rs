use std::f64::consts::{PI, TAU};

use euler_ci::segment::{find_segment, SegmentConfig};
use euler_ci::spectral::{Region, TorusGrid};
use euler_ci::state::{SourceMatrix, StatePoint};
use euler_ci::wave::*;
use euler_ci::Error;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn shear_wave() -> StatePoint {
    // v̄ = e1, Ū = diag(1/2, -1/2), xi = e2, q̄ = 1/2.
    StatePoint::from_slices(&[1.0, 0.0], &[0.5, 0.0, 0.0, -0.5])
}

fn shear_spec(lambda: f64, region: Region, delta: f64, cutoff: Option<f64>) -> WaveSpec {
    let wb = shear_wave();
    WaveSpec {
        w1: &wb * -0.5,
        w2: &wb * 0.5,
        mu1: 0.5,
        wave_vector: DVector::from_vec(vec![0.0, 1.0]),
        q_bar: 0.5,
        lambda,
        region,
        delta,
        cutoff_delta: cutoff,
        b: SourceMatrix::zero(2),
        profile_resolution: euler_ci::spectral::DEFAULT_M,
    }
}

fn random_b(rng: &mut ChaCha8Rng, d: usize) -> SourceMatrix {
    let m = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    let m = &m / m.norm();
    SourceMatrix::new(m).unwrap()
}

#[test]
fn identities_hold_for_random_segments() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let grid = TorusGrid::cube(2, 64).unwrap();
    let cfg = SegmentConfig::default();
    for trial in 0..4 {
        let v: Vec<f64> = (0..2).map(|_| rng.gen_range(-0.4..0.4)).collect();
        let w = StatePoint::from_slices(&v, &[0.0; 4]);
        let seg = find_segment(&w, 1.0, &cfg).unwrap();
        let b = if trial % 2 == 0 { SourceMatrix::zero(2) } else { random_b(&mut rng, 2) };
        let region = Region::cube(vec![1.0, 1.5], 3.0).unwrap();
        let spec = { let mut s = WaveSpec::from_segment(&seg, 4.0, region, 0.1, b); s.cutoff_delta = Some(0.5 * s.region.volume()); s };
        let wave = build_localized_wave(&spec, &grid).unwrap();
        assert!(wave.diagnostics.residual_div_v <= 1e-9, "{:?}", wave.diagnostics);
        assert!(wave.diagnostics.residual_relaxed <= 1e-8, "{:?}", wave.diagnostics);
        assert!(wave.u.sym0_defect() < 1e-12, "{}", wave.u.sym0_defect());
        assert!(wave.diagnostics.mean_v < 1e-12 && wave.diagnostics.mean_u < 1e-12);
    }
}

#[test]
fn identities_hold_in_three_dimensions() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let grid = TorusGrid::cube(3, 32).unwrap();
    let w = StatePoint::from_slices(&[0.1, -0.2, 0.15], &[0.0; 9]);
    let seg = find_segment(&w, 1.0, &SegmentConfig::default()).unwrap();
    let region = Region::cube(vec![0.5, 0.5, 0.5], 4.0).unwrap();
    let spec = { let mut s = WaveSpec::from_segment(&seg, 2.0, region, 0.1, random_b(&mut rng, 3)); s.cutoff_delta = Some(0.5 * s.region.volume()); s };
    let wave = build_localized_wave(&spec, &grid).unwrap();
    assert!(wave.diagnostics.residual_div_v <= 1e-9);
    assert!(wave.diagnostics.residual_relaxed <= 1e-8);
}

#[test]
fn full_torus_wave_is_the_profile() {
    // With φ ≡ 1 and xi on a grid axis, the wave is exactly w̄ h0 up to
    // the aliasing of the sampled profile.
    let grid = TorusGrid::new(vec![8, 512]).unwrap();
    let spec = shear_spec(8.0, Region::full(2), 0.1, None);
    let wave = build_localized_wave(&spec, &grid).unwrap();
    let dev = leading_order_deviation(&wave, &spec).unwrap();
    assert!(dev < 0.1, "deviation {dev}");
    let stats = region_stats(&wave.v, &wave.u, &spec, 1.0);
    let half = 0.5 * stats.region_volume;
    assert!((stats.vol1 - half).abs() < 0.05 * stats.region_volume);
    assert!((stats.vol2 - half).abs() < 0.05 * stats.region_volume);
}

#[test]
fn deviation_decays_with_frequency() {
    let grid = TorusGrid::new(vec![64, 1024]).unwrap();
    let region = Region::new(vec![0.05, 0.05], vec![TAU - 0.1, TAU - 0.1]).unwrap();
    let cutoff = 0.97 * region.volume();
    let devs: Vec<f64> = [16.0, 32.0]
        .iter()
        .map(|&l| {
            let spec = shear_spec(l, region.clone(), 0.2, Some(cutoff));
            leading_order_deviation(&build_localized_wave(&spec, &grid).unwrap(), &spec).unwrap()
        })
        .collect();
    let ratio = devs[1] / devs[0];
    assert!((0.35..=0.65).contains(&ratio), "{devs:?}");
}

#[test]
fn wave_vanishes_far_outside_region() {
    let grid = TorusGrid::cube(2, 128).unwrap();
    let spec = shear_spec(8.0, Region::cube(vec![PI / 2.0, PI / 2.0], PI).unwrap(), 0.2, Some(0.9 * PI * PI));
    let wave = build_localized_wave(&spec, &grid).unwrap();
    // The primary part is supported in the box up to the aliasing of the
    // sharp profile at 16 points per oscillation.
    assert!(wave.diagnostics.primary_mass_outside < 1e-2, "{:?}", wave.diagnostics);
    assert!(wave.diagnostics.tail_sup_outside.is_finite());
}

#[test]
fn degenerate_and_off_cone_segments_rejected() {
    let grid = TorusGrid::cube(2, 32).unwrap();
    let mut spec = shear_spec(2.0, Region::cube(vec![1.0, 1.0], 3.0).unwrap(), 0.5, None);
    spec.w2 = spec.w1.clone();
    assert!(matches!(build_localized_wave(&spec, &grid), Err(Error::Precondition(_))));

    let mut spec = shear_spec(2.0, Region::cube(vec![1.0, 1.0], 3.0).unwrap(), 0.5, None);
    spec.wave_vector = DVector::from_vec(vec![1.0, 0.0]);
    assert!(matches!(build_localized_wave(&spec, &grid), Err(Error::Precondition(_))));
}

#[test]
fn under_resolved_frequency_rejected() {
    let grid = TorusGrid::cube(2, 32).unwrap();
    let spec = shear_spec(8.0, Region::cube(vec![1.0, 1.0], 3.0).unwrap(), 0.5, None);
    assert!(matches!(build_localized_wave(&spec, &grid), Err(Error::Resolution(_))));
}

#[test]
fn non_periodic_full_axis_rejected() {
    let grid = TorusGrid::cube(2, 64).unwrap();
    let spec = shear_spec(2.5, Region::full(2), 0.5, None);
    assert!(matches!(build_localized_wave(&spec, &grid), Err(Error::InvalidParameter(_))));
}

#[test]
fn tiling_keeps_mass_and_weakens_pairings() {
    let template = TileTemplate {
        grid: TorusGrid::cube(2, 1024).unwrap(),
        wave_vector: DVector::from_vec(vec![0.0, 1.0]),
        q_bar: 0.5,
        lambda_per_cell: 16.0,
        delta: 0.1,
        cutoff_fraction: 0.7,
        b: SourceMatrix::zero(2),
    };
    let wb = shear_wave();
    let t2 = tile_unit_cube(&wb, 2, &template).unwrap();
    let t3 = tile_unit_cube(&wb, 3, &template).unwrap();
    for t in [&t2, &t3] {
        assert!(t.mean <= 1e-9, "mean {}", t.mean);
        assert!(t.l2_mass >= 0.5 * wb.norm().powi(2), "mass {}", t.l2_mass);
        // The cutoff derivatives stay lower order.
        assert!(t.l2_mass <= 2.0 * wb.norm().powi(2), "mass {}", t.l2_mass);
    }
    assert_eq!(t3.lambda, 128.0);
    for (a, b) in t3.pairings.iter().zip(&t2.pairings) {
        assert!(a < b, "{:?} {:?}", t2.pairings, t3.pairings);
    }
}
