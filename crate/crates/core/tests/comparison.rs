use std::f64::consts::PI;

use proptest::prelude::*;
use vmono::comparison::{a_b, c_lin, c_quad, phi, phi_prime, radial_comparison, Regime, SERIES_SWITCH};

proptest! {
    #[test]
    fn a_b_decreases_in_r(b in 0.01..4.0f64, f1 in 0.0..0.99f64, f2 in 0.0..0.99f64) {
        let top = PI / b.sqrt();
        let (r1, r2) = (f1.min(f2) * top, f1.max(f2) * top);
        let (a1, a2) = (a_b(b, r1).unwrap().value, a_b(b, r2).unwrap().value);
        prop_assert!(a1 >= a2 - 1e-15);
        prop_assert!(a1 <= 1.0 + 1e-15);
    }

    #[test]
    fn hyperbolic_comparison_increases_in_r(k in 0.1..2.0f64, r1 in 0.0..5.0f64, r2 in 0.0..5.0f64) {
        let b = -k * k;
        let (lo, hi) = (r1.min(r2), r1.max(r2));
        prop_assert!(radial_comparison(b, lo).unwrap() <= radial_comparison(b, hi).unwrap() + 1e-15);
        prop_assert!(radial_comparison(b, lo).unwrap() >= 1.0);
    }

    #[test]
    fn series_branch_matches_the_closed_form(b in 0.1..4.0f64, f in 0.02..1.0f64) {
        let x = f * SERIES_SWITCH;
        let r = x / b.sqrt();
        let v = a_b(b, r).unwrap();
        prop_assert_eq!(v.regime, Regime::SeriesNearZero);
        prop_assert!((v.value - x / x.tan()).abs() <= 2e-16 / (x * x) * 1e-2 + 1e-15);
        let closed_quad = b * (1.0 - x / x.tan()) / (x * x);
        let q = c_quad(b, r).unwrap().value;
        prop_assert!((q - closed_quad).abs() <= 1e-15 / (x * x) * b, "{q} vs {closed_quad}");
        prop_assert!((c_lin(b, r).unwrap().value - q * r).abs() <= 1e-14 * b.sqrt());
    }

    #[test]
    fn phi_prime_matches_a_difference_quotient(k in 0.2..2.0f64, t in 0.05..4.0f64) {
        let b = -k * k;
        let h = 1e-5 * t;
        let fd = (phi(b, t + h).unwrap() - phi(b, t - h).unwrap()) / (2.0 * h);
        let exact = phi_prime(b, t).unwrap();
        prop_assert!(exact < 0.0);
        prop_assert!((fd - exact).abs() <= 1e-6 * exact.abs());
    }
}

#[test]
fn branches_agree_across_the_switch() {
    for b in [0.25f64, 1.0, 9.0] {
        let r = SERIES_SWITCH / b.sqrt();
        let below = a_b(b, r * (1.0 - 1e-12)).unwrap();
        let above = a_b(b, r * (1.0 + 1e-12)).unwrap();
        assert_eq!(below.regime, Regime::SeriesNearZero);
        assert_eq!(above.regime, Regime::ClosedForm);
        assert!((below.value - above.value).abs() < 1e-13);
        let (qb, qa) = (c_quad(b, r * (1.0 - 1e-12)).unwrap().value, c_quad(b, r * (1.0 + 1e-12)).unwrap().value);
        assert!((qb - qa).abs() < 1e-12 * b);
        let (hb, ha) =
            (radial_comparison(-b, r * (1.0 - 1e-12)).unwrap(), radial_comparison(-b, r * (1.0 + 1e-12)).unwrap());
        assert!((hb - ha).abs() < 1e-13);
    }
}

#[test]
fn out_of_domain_arguments_are_errors() {
    assert!(a_b(1.0, PI).is_err());
    assert!(a_b(-1.0, 0.5).is_err());
    assert!(a_b(1.0, f64::NAN).is_err());
    assert!(phi(1.0, 1.0).is_err());
    assert!(phi(-1.0, 1e-9).is_err());
}
