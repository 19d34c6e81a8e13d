use std::f64::consts::{FRAC_PI_2, PI};

use proptest::prelude::*;
use swaprelay::amplitudes::rotator_amplitude;
use swaprelay::coincidence::{
    coincidence_probs, coincidence_probs_with_detector, posterior_with_detector, representative_heralds,
    visibility_with, Method,
};
use swaprelay::combinatorics::{admissible_tuples, enumerate_inner_patterns, omega, pattern_count};
use swaprelay::detector::{click_prob, net_efficiency, DetectorModel};
use swaprelay::{ClickTuple, RawParams, RelayParams, RotatorAngles};

fn fixed(n: usize, chi: f64, eta: f64, dc: f64, n_max: u8) -> RelayParams {
    RawParams {
        n_max,
        ..RawParams::fixed_efficiency(n, chi, eta, dc)
    }
    .validate()
    .unwrap()
}

fn click_tuple() -> impl Strategy<Value = ClickTuple> {
    prop::array::uniform4(any::<bool>()).prop_map(ClickTuple::from_bits)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn click_outcomes_are_complementary(eta in 0.0..=1.0f64, dc in 0.0..0.999f64, n in 0u32..=12) {
        let det = DetectorModel::new(eta, dc).unwrap();
        prop_assert_eq!(click_prob(false, n, &det) + click_prob(true, n, &det), 1.0);
    }

    #[test]
    fn silence_decreases_with_photons_and_efficiency(
        eta in 0.0..=1.0f64, d_eta in 0.0..=1.0f64, dc in 0.0..0.5f64, n in 0u32..12,
    ) {
        let det = DetectorModel::new(eta, dc).unwrap();
        let better = DetectorModel::new((eta + d_eta).min(1.0), dc).unwrap();
        prop_assert!(click_prob(false, n + 1, &det) <= click_prob(false, n, &det));
        prop_assert!(click_prob(false, n, &better) <= click_prob(false, n, &det));
    }

    #[test]
    fn silence_decreases_with_dark_counts_below_saturation(
        eta in 0.0..=0.1f64, dc in 0.0..0.5f64, d_dc in 0.0..0.4f64, n in 0u32..=8,
    ) {
        // Holds whenever (n + 1) η (1 - ℘) <= 1.
        let det = DetectorModel::new(eta, dc).unwrap();
        let noisier = DetectorModel::new(eta, dc + d_dc).unwrap();
        prop_assert!(click_prob(false, n, &noisier) <= click_prob(false, n, &det) * (1.0 + 1e-15));
    }

    #[test]
    fn efficiency_monotonicity(
        eta0 in 0.01..=1.0f64, a in 0.0..1.0f64, a0 in 0.0..10.0f64, l in 0.0..3000.0f64,
        n in 1usize..6, bump in 0.001..1.0f64,
    ) {
        let base = net_efficiency(eta0, a, a0, l, n);
        prop_assert!(net_efficiency(eta0, a + bump, a0, l, n) <= base);
        prop_assert!(net_efficiency(eta0, a, a0 + bump, l, n) <= base);
        prop_assert!(net_efficiency(eta0, a, a0, l + bump * 100.0, n) <= base);
        prop_assert!(net_efficiency(eta0, a, a0, l, n + 1) >= base);
    }

    #[test]
    fn rotator_conserves_probability(h in 0u8..5, v in 0u8..5, angle in -10.0..10.0f64) {
        let m = h + v;
        let total: f64 = (0..=m).map(|ho| rotator_amplitude(h, v, ho, m - ho, angle).norm_sqr()).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn omega_is_the_signed_convolution(m in 0u8..7, i in 0u8..5, l in 0u8..5) {
        // Coefficient of x^i in (1 - x)^m (1 + x)^(i + l - m).
        let right = i64::from(i) + i64::from(l) - i64::from(m);
        let expected = if right < 0 {
            0
        } else {
            (0..=i64::from(i))
                .map(|g| {
                    let a = swaprelay::combinatorics::binomial(i64::from(m), g);
                    let b = swaprelay::combinatorics::binomial(right, i64::from(i) - g);
                    if g % 2 == 0 { a * b } else { -a * b }
                })
                .sum::<i64>()
                * if m % 2 == 0 { 1 } else { -1 }
        };
        prop_assert_eq!(omega(m, i, l), expected);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn posterior_is_normalised(
        chi in 0.05..0.5f64, eta in 0.01..1.0f64, dc in 0.0..1e-3f64,
        heralds in prop::collection::vec(click_tuple(), 3),
    ) {
        let p = fixed(2, chi, eta, dc, 1);
        let det = DetectorModel::new(eta, dc).unwrap();
        if let Ok(post) = posterior_with_detector(&heralds, &p, &det) {
            let total: f64 = post.values().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!(post.values().all(|w| *w >= 0.0));
        }
    }

    #[test]
    fn coincidences_are_probabilities(
        n in 1usize..=3, chi in 0.05..0.6f64, eta in 0.01..1.0f64, dc in 0.0..1e-2f64,
        alpha in -PI..PI, delta in -PI..PI,
    ) {
        let p = fixed(n, chi, eta, dc, 2);
        let angles = RotatorAngles::new(alpha, delta).unwrap();
        let q = coincidence_probs(&representative_heralds(&p), angles, &p, Method::Transfer).unwrap();
        prop_assert!(q.iter().all(|x| (0.0..=1.0).contains(x)));
        prop_assert!(q.iter().sum::<f64>() <= 1.0);
    }

    #[test]
    fn transfer_equals_enumeration(
        chi in 0.05..0.6f64, eta in 0.01..1.0f64, dc in 0.0..1e-2f64,
        alpha in -PI..PI, delta in -PI..PI, heralds in prop::collection::vec(click_tuple(), 3),
    ) {
        let p = fixed(2, chi, eta, dc, 1);
        let det = DetectorModel::new(eta, dc).unwrap();
        let angles = RotatorAngles::new(alpha, delta).unwrap();
        let a = coincidence_probs_with_detector(&heralds, angles, &p, &det, Method::Transfer);
        let b = coincidence_probs_with_detector(&heralds, angles, &p, &det, Method::Enumerate);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                for (x, y) in a.iter().zip(&b) {
                    prop_assert!((x - y).abs() <= 1e-12 * y.abs().max(1e-6));
                }
            }
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "routes disagree on evidence: {a:?} vs {b:?}"),
        }
    }

    #[test]
    fn angle_periodicity(n in 1usize..=3, alpha in -PI..PI, delta in -PI..PI) {
        let p = fixed(n, 0.25, 0.1, 1e-5, 2);
        let h = representative_heralds(&p);
        let q = |a: f64, d: f64| coincidence_probs(&h, RotatorAngles::new(a, d).unwrap(), &p, Method::Transfer).unwrap();
        let base = q(alpha, delta);
        for (a, d) in [(alpha + 2.0 * PI, delta), (alpha, delta - 2.0 * PI), (alpha + PI, delta + PI)] {
            for (x, y) in q(a, d).iter().zip(&base) {
                prop_assert!((x - y).abs() < 1e-12 * y.max(1e-12));
            }
        }
    }

    #[test]
    fn heralding_symmetry(n in 1usize..=3, chi in 0.05..0.5f64, eta in 0.01..0.5f64, alpha in -PI..PI) {
        let p = fixed(n, chi, eta, 1e-5, 3);
        let a = visibility_with(&p, alpha, &vec![ClickTuple::SINGLET_1010; p.n_tuples()], Method::Transfer).unwrap();
        let b = visibility_with(&p, alpha, &vec![ClickTuple::SINGLET_0101; p.n_tuples()], Method::Transfer).unwrap();
        prop_assert!((a.visibility - b.visibility).abs() < 1e-9);
    }
}

#[test]
fn pattern_count_is_a_product() {
    for (n, n_max) in [(1usize, 3u8), (2, 1), (2, 2), (3, 1)] {
        let p = fixed(n, 0.2, 0.5, 0.0, n_max);
        let per_tuple = admissible_tuples(&p).len() as u128;
        assert_eq!(pattern_count(&p), per_tuple.pow(p.n_tuples() as u32));
        assert_eq!(enumerate_inner_patterns(&p).count() as u128, pattern_count(&p));
    }
}

#[test]
fn equal_angles_maximise_the_singlet_classes() {
    let p = fixed(1, 0.3, 1.0, 0.0, 3);
    let h = representative_heralds(&p);
    let at = |d: f64| {
        let q = coincidence_probs(&h, RotatorAngles::new(FRAC_PI_2, d).unwrap(), &p, Method::Transfer).unwrap();
        (q[0] + q[1], q[2] + q[3])
    };
    let (max_eq, min_eq) = at(FRAC_PI_2);
    for k in 0..48 {
        let d = -PI + k as f64 * PI / 24.0;
        let (a, b) = at(d);
        assert!(a <= max_eq + 1e-15);
        assert!(b >= min_eq - 1e-15);
    }
}
