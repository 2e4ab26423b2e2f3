use std::f64::consts::{FRAC_PI_2, PI};

use proptest::prelude::*;

use zeeman_eit::atomic_structure::wigner3j;
use zeeman_eit::field_geometry::{decompose_probe, decompose_pump, FieldGeometry};
use zeeman_eit::liouville::{ScanConfig, ScanModel, VelocityGrid};
use zeeman_eit::magnetometer::{field_direction, field_magnitude};
use zeeman_eit::spectra::{classify_peaks, comb_inliers, Peak, PeakMode, PeakSet};
use zeeman_eit::toy_model::{
    peak_amplitude_a0, peak_amplitude_a1, ratio_law, theta_from_ratio, DeltaTerm, ToyParameters,
};
use zeeman_eit::PhysicalConstantsF64;

fn comb(delta: f64, amps: &[f64]) -> PeakSet {
    PeakSet {
        peaks: amps
            .iter()
            .enumerate()
            .map(|(i, &a)| Peak {
                center: (i as f64 - 3.0) * delta,
                amplitude: a,
                width: 0.3,
                index: None,
                klass: None,
            })
            .collect(),
        spacing_estimate: None,
        fit_residual: 0.0,
        rejected: Vec::new(),
    }
}

proptest! {
    #[test]
    fn beams_keep_power_and_stay_orthogonal(e in 0.1f64..50.0, phi in 0.0..2.0 * PI, theta in 0.0..FRAC_PI_2) {
        let p = decompose_probe(e, phi, theta).unwrap();
        let c = decompose_pump(e, phi, theta).unwrap();
        prop_assert!((p.power() - e * e).abs() <= 1e-12 * e * e);
        prop_assert!((c.power() - e * e).abs() <= 1e-12 * e * e);
        prop_assert!(p.inner(&c).norm() <= 1e-12 * e * e);
    }

    #[test]
    fn ratio_law_round_trip(theta in 0.01f64..1.55) {
        prop_assert!((theta_from_ratio(ratio_law(theta)) - theta).abs() < 1e-12);
        let d = field_direction(ratio_law(theta), 1.0, 0.5).unwrap();
        prop_assert!((d.theta_deg.to_radians() - theta).abs() < 1e-12);
    }

    #[test]
    fn direction_ignores_overall_scale(a1 in 1e-3f64..10.0, a0 in 1e-3f64..10.0, s in 1e-6f64..1e6) {
        let d = field_direction(a1, a0, 0.5).unwrap().theta_deg;
        let e = field_direction(a1 * s, a0 * s, 0.5).unwrap().theta_deg;
        prop_assert!((d - e).abs() < 1e-9);
        let up = field_direction(a1 * 1.01, a0, 0.5).unwrap().theta_deg;
        prop_assert!(up > d);
    }

    #[test]
    fn closed_form_amplitudes_follow_ratio_law(theta in 0.05f64..1.5, delta in 1.0f64..10.0) {
        let p = ToyParameters::new(theta, 0.0, delta).unwrap();
        let a0 = peak_amplitude_a0(&p, DeltaTerm::Dropped).unwrap();
        let a1 = peak_amplitude_a1(&p, DeltaTerm::Dropped).unwrap();
        prop_assert!(a0 > 0.0 && a1 > 0.0);
        prop_assert!((a1 / a0 / ratio_law(theta) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn magnitude_is_linear_in_spacing(d in 0.1f64..30.0, s in 0.1f64..10.0) {
        let c = PhysicalConstantsF64::default();
        let b = field_magnitude(d, &c).unwrap();
        prop_assert!((field_magnitude(d * s, &c).unwrap() - s * b).abs() <= 1e-12 * s * b);
    }

    #[test]
    fn classification_ignores_amplitude_scale(
        delta in 0.5f64..10.0,
        amps in prop::collection::vec(0.05f64..1.0, 7),
        s in 1e-6f64..1e6,
    ) {
        let set = comb(delta, &amps);
        let scaled = comb(delta, &amps.iter().map(|a| a * s).collect::<Vec<_>>());
        let a = classify_peaks(&set, delta).unwrap();
        let b = classify_peaks(&scaled, delta).unwrap();
        let ka: Vec<_> = a.peaks.iter().map(|p| (p.index, p.klass)).collect();
        let kb: Vec<_> = b.peaks.iter().map(|p| (p.index, p.klass)).collect();
        prop_assert_eq!(ka, kb);
        let (ia, _) = comb_inliers(&set.peaks, PeakMode::Full);
        let (ib, _) = comb_inliers(&scaled.peaks, PeakMode::Full);
        prop_assert_eq!(ia.len(), 7);
        prop_assert_eq!(ib.len(), 7);
    }

    #[test]
    fn wigner_symmetries(j3 in 1i32..=3, m1 in -2i32..=2, m2 in -1i32..=1) {
        let m3 = -m1 - m2;
        prop_assume!(m3.abs() <= j3);
        let f = |a: f64, b: f64, c: f64, x: f64, y: f64, z: f64| wigner3j::<f64>(a, b, c, x, y, z).unwrap();
        let (j1, j2, j3) = (2.0, 1.0, j3 as f64);
        let (m1, m2, m3) = (m1 as f64, m2 as f64, m3 as f64);
        let base = f(j1, j2, j3, m1, m2, m3);
        let sign = if (j1 + j2 + j3) as i32 % 2 == 0 { 1.0 } else { -1.0 };
        prop_assert!((f(j1, j2, j3, -m1, -m2, -m3) - sign * base).abs() < 1e-15);
        prop_assert!((f(j2, j3, j1, m2, m3, m1) - base).abs() < 1e-15);
        prop_assert!((f(j2, j1, j3, m2, m1, m3) - sign * base).abs() < 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn steady_state_is_a_density_matrix(
        b in 0.5f64..15.0,
        theta in 0.0..FRAC_PI_2,
        phi in 0.0..PI,
        delta_p in -20.0f64..20.0,
    ) {
        let g = FieldGeometry::from_polar(b, theta, phi).unwrap();
        let mut cfg = ScanConfig::from_intensities(g, 0.1, 17.5).unwrap();
        cfg.velocity = VelocityGrid::zero_velocity();
        let model = ScanModel::new(&cfg).unwrap();
        let (rho, _, diag) = model.solve_point(delta_p).unwrap();
        prop_assert!((rho.trace().re - 1.0).abs() <= 1e-9 && rho.trace().im.abs() <= 1e-12);
        prop_assert!(rho.hermiticity_residual() < 1e-10);
        prop_assert!(rho.min_eigenvalue() >= -1e-8);
        prop_assert!(diag.invariants_hold());
    }
}
