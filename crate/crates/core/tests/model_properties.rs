use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

use franson::model::{
    bandwidth_from_coherence_length, bell_violation_sigma, coherence_length_from_bandwidth, coincidence_probability,
    envelope, half_envelope_mismatch, joint_outcome_distribution, raw_visibility_with_accidentals,
    true_coincidences_for_raw_visibility, BandwidthConvention, OutcomeLabel, PhaseSetting, SpectralParams,
    VisibilityParams,
};
use proptest::prelude::*;

fn spectral(lc_um: f64) -> SpectralParams {
    SpectralParams::from_coherence_length(1310.0, lc_um, BandwidthConvention::GaussianFwhm).unwrap()
}

proptest! {
    #[test]
    fn joint_distribution_is_normalized(
        d1 in -10.0..10.0f64,
        d2 in -10.0..10.0f64,
        mismatch in -100.0..100.0f64,
        v in 0.0..=1.0f64,
        lc in 1.0..50.0f64,
    ) {
        let s = PhaseSetting::new(d1, d2, mismatch).unwrap();
        let p = joint_outcome_distribution(&s, &spectral(lc), &VisibilityParams::new(v).unwrap());
        prop_assert!((p.total() - 1.0).abs() < 1e-12);
        prop_assert!(p.0.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn sign_flip_symmetry(d1 in -10.0..10.0f64, d2 in -10.0..10.0f64, v in 0.0..=1.0f64, mismatch in -60.0..60.0f64) {
        let s = PhaseSetting::new(d1, d2, mismatch).unwrap();
        let sp = spectral(10.2);
        let vis = VisibilityParams::new(v).unwrap();
        for o in OutcomeLabel::ALL {
            let a = coincidence_probability(o, &s, &sp, &vis);
            let b = coincidence_probability(o.flipped(), &s, &sp, &vis);
            prop_assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn fringe_contrast_is_v_times_envelope(d1 in -PI..PI, v in 0.0..=1.0f64, mismatch in 0.0..60.0f64) {
        let sp = spectral(10.2);
        let vis = VisibilityParams::new(v).unwrap();
        let pp = OutcomeLabel::ALL[0];
        let (mut hi, mut lo) = (f64::MIN, f64::MAX);
        // the sweep includes δ2 = -δ1 and -δ1 + π exactly
        for k in 0..64 {
            let s = PhaseSetting::new(d1, -d1 + TAU * k as f64 / 64.0, mismatch).unwrap();
            let p = coincidence_probability(pp, &s, &sp, &vis);
            hi = hi.max(p);
            lo = lo.min(p);
        }
        let contrast = (hi - lo) / (hi + lo);
        prop_assert!((contrast - v * envelope(mismatch, &sp)).abs() < 1e-9);
    }

    #[test]
    fn envelope_even_and_decreasing(a in 0.0..200.0f64, b in 0.0..200.0f64, lc in 1.0..50.0f64) {
        let sp = spectral(lc);
        prop_assert_eq!(envelope(a, &sp), envelope(-a, &sp));
        let (near, far) = if a < b { (a, b) } else { (b, a) };
        let (en, ef) = (envelope(near, &sp), envelope(far, &sp));
        // strict where the difference is representable
        if ef > 1e-300 && (far - near) > 1e-9 * far.max(1.0) {
            prop_assert!(ef < en, "E({far}) = {ef} !< E({near}) = {en}");
        }
    }

    #[test]
    fn bandwidth_round_trip(bw in 1.0..300.0f64, center in 500.0..2000.0f64, factor in 0.1..2.0f64) {
        for conv in [BandwidthConvention::GaussianFwhm, BandwidthConvention::PaperCalibrated { factor }] {
            let lc = coherence_length_from_bandwidth(center, bw, conv).unwrap();
            let back = bandwidth_from_coherence_length(center, lc, conv).unwrap();
            prop_assert!(((back - bw) / bw).abs() < 1e-12);
            let doubled = coherence_length_from_bandwidth(center, 2.0 * bw, conv).unwrap();
            prop_assert!((doubled - lc / 2.0).abs() < 1e-12 * lc);
        }
    }

    #[test]
    fn dilution_inverts(v in 0.05..=1.0f64, s in 1.0..1e4f64, a in 0.0..1e4f64) {
        let raw = raw_visibility_with_accidentals(v, s, a).unwrap();
        prop_assert!(raw <= v);
        if a > 0.0 {
            let back = true_coincidences_for_raw_visibility(v, raw, a).unwrap();
            prop_assert!(((back - s) / s).abs() < 1e-9);
        }
    }

    #[test]
    fn bell_sigma_monotone(v in 0.72..1.0f64, dv in 1e-4..0.05f64, sigma in 1e-3..0.1f64, ds in 1e-4..0.05f64) {
        let base = bell_violation_sigma(v, sigma).unwrap();
        prop_assert!(bell_violation_sigma(v + dv, sigma).unwrap() > base);
        prop_assert!(bell_violation_sigma(v, sigma + ds).unwrap() < base);
    }
}

#[test]
fn derived_reference_values() {
    // Gaussian FWHM: (2 ln2 / π)·1.31²/0.09 µm
    let lc = coherence_length_from_bandwidth(1310.0, 90.0, BandwidthConvention::GaussianFwhm).unwrap();
    assert!((lc - 8.41406).abs() < 1e-4, "{lc}");
    // envelope half point 2π·Lc·√ln2/λ for Lc = 10.2, λ = 1.31
    let sp = SpectralParams::from_coherence_length(1310.0, 10.2, BandwidthConvention::GaussianFwhm).unwrap();
    let half = half_envelope_mismatch(&sp);
    assert!((half - 40.73066).abs() < 1e-4, "{half}");
    assert!((envelope(40.7, &sp) - 0.5).abs() < 1e-3);
    assert!(envelope(1000.0, &sp) < 1e-6);
    // S that dilutes 0.816 to 0.46 under 150 accidentals: 150·0.46/0.356
    let s = true_coincidences_for_raw_visibility(0.816, 0.46, 150.0).unwrap();
    assert!((s - 193.820).abs() < 1e-3, "{s}");
    assert!((raw_visibility_with_accidentals(0.816, 194.0, 150.0).unwrap() - 0.46).abs() < 0.005);
    assert!((bell_violation_sigma(0.816, 0.011).unwrap() - 9.9).abs() < 0.1);
    assert!(bell_violation_sigma(FRAC_1_SQRT_2, 0.01).unwrap().abs() < 1e-12);
    assert!((bell_violation_sigma(0.60, 0.02).unwrap() + 5.355).abs() < 1e-3);
}
