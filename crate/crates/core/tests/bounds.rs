use std::cmp::Ordering;

use goodset::bounds::*;
use proptest::prelude::*;

#[test]
fn prefix_inequality_holds_exhaustively() {
    for n in 0..=60u64 {
        for p in 0..=n / 2 {
            assert_ne!(prefix_bound_ordering(n, p).unwrap(), Ordering::Greater, "n={n} p={p}");
            let (lhs, rhs) = log_binomial_prefix_bound(n, p).unwrap();
            assert!(lhs <= rhs + 1e-12, "n={n} p={p}: {lhs} > {rhs}");
        }
    }
}

#[test]
fn log_gamma_agrees_with_exact_sums_at_the_boundary() {
    let exact = log_binomial_prefix_bound(60, 20).unwrap();
    let lhs = (0..=20u64).map(|k| ln_binomial(60.0, k as f64).exp()).sum::<f64>().ln();
    assert!((exact.0 - lhs).abs() < 1e-9);
}

#[test]
fn eq10_rejects_small_c() {
    assert!(eq10_sample_size(0.5, 0.1, 0.01, 10, BinomialIndex::Nearest).is_err());
    assert!(eq10_sample_size(0.3, 0.1, 0.01, 10, BinomialIndex::Nearest).is_err());
}

#[test]
fn improved_bound_loses_just_above_one_half() {
    // The correction term outgrows the binomial saving as c approaches 1/2.
    let m9 = eq9_sample_size(0.51, 0.1, 0.01, 1000).unwrap();
    let m10 = eq10_sample_size(0.51, 0.1, 0.01, 1000, BinomialIndex::Nearest).unwrap();
    assert!(m10 > m9);
    let m9 = eq9_sample_size(0.6, 0.1, 0.01, 1000).unwrap();
    let m10 = eq10_sample_size(0.6, 0.1, 0.01, 1000, BinomialIndex::Nearest).unwrap();
    assert!(m10 < m9);
}

#[test]
fn meaningful_c_exceeds_ln2() {
    for p in [1u64, 10, 68, 1000, 1_000_000] {
        for delta in [0.5, 0.1, 0.01, 1e-6] {
            assert!(min_meaningful_c(delta, p).unwrap() > 0.69);
        }
    }
}

#[test]
fn montecarlo_with_large_sample_never_misses() {
    let mc = montecarlo_verify_theorem1(1000, 10, 50_000, 0.0005, 200, 3).unwrap();
    assert_eq!(mc.violations, 0);
}

proptest! {
    #[test]
    fn improved_bound_is_smaller(
        c in 0.6f64..0.999,
        delta in 0.001f64..0.5,
        g in 1e-5f64..0.5,
        p in 1u64..3000,
    ) {
        let m9 = eq9_sample_size(c, delta, g, p).unwrap();
        let m10 = eq10_sample_size(c, delta, g, p, BinomialIndex::Nearest).unwrap();
        prop_assert!(m10 <= m9 * (1.0 + 1e-12), "{} > {}", m10, m9);
    }

    #[test]
    fn sample_sizes_are_monotone(
        c in 0.55f64..0.95,
        delta in 0.001f64..0.4,
        g in 1e-5f64..0.1,
        p in 1u64..2000,
    ) {
        let m = |c, d, g, p| eq10_sample_size(c, d, g, p, BinomialIndex::Continuous).unwrap();
        let base = m(c, delta, g, p);
        prop_assert!(m(c, delta, g * 1.5, p) < base);
        prop_assert!(m(c, delta * 0.5, g, p) > base);
        prop_assert!(m(c, delta, g, p + 1) > base);
        prop_assert!(m(c + 0.04, delta, g, p) < base);
        let m9 = |c, d, g, p| eq9_sample_size(c, d, g, p).unwrap();
        prop_assert!(m9(c, delta, g * 1.5, p) < m9(c, delta, g, p));
        prop_assert!(m9(c, delta * 0.5, g, p) > m9(c, delta, g, p));
        prop_assert!(m9(c, delta, g, p + 1) > m9(c, delta, g, p));
        prop_assert!(m9(c + 0.04, delta, g, p) < m9(c, delta, g, p));
    }

    #[test]
    fn corollary_size_meets_the_bound(eps in 0.001f64..0.5, delta in 0.001f64..0.5, p in 1u64..200) {
        let ln_h = p as f64 * std::f64::consts::LN_2;
        let m = corollary_sample_size(eps, delta, ln_h).unwrap().ceil() as u64;
        prop_assert!(theorem1_bound(m, eps, ln_h).unwrap() <= delta * (1.0 + 1e-9));
    }

    #[test]
    fn prop2_never_exceeds_theorem1(c in 0.51f64..1.0, g in 1e-4f64..0.5, p in 1u64..500, n in 1u64..1_000_000) {
        let b2 = prop2_probability_bound(c, g, p, n, BinomialIndex::Nearest).unwrap();
        let b1 = theorem1_bound(n, c * g, p as f64 * std::f64::consts::LN_2).unwrap();
        prop_assert!(b2 <= b1 * (1.0 + 1e-9));
    }

    #[test]
    fn theorem1_is_a_probability(n in 0u64..100_000, eps in 1e-4f64..0.99, ln_h in 0.0f64..200.0) {
        let b = theorem1_bound(n, eps, ln_h).unwrap();
        prop_assert!((0.0..=1.0).contains(&b));
    }
}
