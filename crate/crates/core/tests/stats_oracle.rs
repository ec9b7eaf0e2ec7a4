//! The statistics kernel checked against an independent implementation
//! (Simpson quadrature of the normal density, bisection for quantiles,
//! two-pass moments) and against published interval values.

use decompeval_core::stats::{
    aggregate_scores, critical_value, normal, normal_mean_ci, two_proportion_z, wilson_interval, ContinuityCorrection,
};
use proptest::prelude::*;

mod oracle {
    use std::f64::consts::PI;

    fn density(x: f64) -> f64 {
        (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
    }

    /// Φ(x) by composite Simpson on [0, |x|].
    pub fn cdf(x: f64) -> f64 {
        let a = x.abs();
        let steps = 20_000;
        let h = a / steps as f64;
        let mut s = density(0.0) + density(a);
        for i in 1..steps {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * density(i as f64 * h);
        }
        let half = s * h / 3.0;
        if x >= 0.0 {
            0.5 + half
        } else {
            0.5 - half
        }
    }

    pub fn quantile(q: f64) -> f64 {
        let (mut lo, mut hi) = (-12.0, 12.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn wilson(s: u64, n: u64, z: f64) -> (f64, f64) {
        let n = n as f64;
        let p = s as f64 / n;
        let c = (2.0 * n * p + z * z) / (2.0 * (n + z * z));
        let h = z * (z * z + 4.0 * n * p * (1.0 - p)).sqrt() / (2.0 * (n + z * z));
        (c - h, c + h)
    }

    pub fn z_test(s1: u64, n1: u64, s2: u64, n2: u64) -> (f64, f64) {
        let (p1, p2) = (s1 as f64 / n1 as f64, s2 as f64 / n2 as f64);
        let p = (s1 + s2) as f64 / (n1 + n2) as f64;
        let se = (p * (1.0 - p) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
        let z = (p1 - p2) / se;
        (z, 2.0 * (1.0 - cdf(z.abs())))
    }

    pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var.sqrt())
    }
}

#[test]
fn cdf_matches_quadrature() {
    for i in -60..=60 {
        let x = i as f64 / 10.0;
        let (got, want) = (normal::cdf(x), oracle::cdf(x));
        assert!((got - want).abs() < 1e-12, "x={x} got={got} want={want}");
    }
}

#[test]
fn quantile_matches_bisection_and_inverts_cdf() {
    for q in [0.001, 0.01, 0.025, 0.1, 0.3, 0.5, 0.7, 0.9, 0.975, 0.99, 0.999] {
        let z = normal::quantile(q);
        assert!((z - oracle::quantile(q)).abs() < 1e-9, "q={q}");
        assert!((normal::cdf(z) - q).abs() < 1e-13, "q={q}");
    }
    assert!((critical_value(0.95).unwrap() - oracle::quantile(0.975)).abs() < 1e-9);
}

#[test]
fn wilson_against_formula_oracle() {
    let z = oracle::quantile(0.975);
    for n in 1..=60u64 {
        for s in 0..=n {
            let w = wilson_interval(s, n, 0.95).unwrap();
            let (lo, hi) = oracle::wilson(s, n, z);
            assert!((w.lower - lo.max(0.0)).abs() < 1e-9, "{s}/{n}");
            assert!((w.upper - hi.min(1.0)).abs() < 1e-9, "{s}/{n}");
        }
    }
}

#[test]
fn published_wilson_intervals() {
    let rows =
        [(27, 34, 63.2, 89.7), (22, 34, 47.9, 78.5), (17, 34, 34.1, 65.9), (15, 34, 28.9, 60.5), (13, 34, 24.0, 55.0)];
    for (s, n, lo, hi) in rows {
        let w = wilson_interval(s, n, 0.95).unwrap();
        assert!((100.0 * w.lower - lo).abs() <= 0.1, "{s}/{n} lower {}", 100.0 * w.lower);
        assert!((100.0 * w.upper - hi).abs() <= 0.1, "{s}/{n} upper {}", 100.0 * w.upper);
    }
}

#[test]
fn published_z_tests() {
    let r = two_proportion_z(27, 34, 22, 34, ContinuityCorrection::None).unwrap();
    let (z, p) = oracle::z_test(27, 34, 22, 34);
    assert!((r.z - z).abs() < 1e-12);
    assert!((r.p_two_sided - p).abs() < 1e-9);
    assert!((0.17..=0.19).contains(&r.p_two_sided), "{}", r.p_two_sided);

    let r = two_proportion_z(17, 34, 15, 34, ContinuityCorrection::None).unwrap();
    assert!((r.p_two_sided - oracle::z_test(17, 34, 15, 34).1).abs() < 1e-9);
    assert!((0.62..=0.64).contains(&r.p_two_sided), "{}", r.p_two_sided);
}

#[test]
fn published_mean_intervals_on_the_percent_scale() {
    let rows = [
        (66.1, 25.7, 60.20, 72.00),
        (71.3, 25.4, 65.47, 77.13),
        (69.2, 20.1, 64.59, 73.81),
        (56.4, 28.9, 49.76, 63.04),
        (59.5, 30.6, 52.48, 66.52),
        (68.2, 23.9, 62.72, 73.69),
        (73.1, 24.8, 67.41, 78.79),
        (60.3, 31.4, 53.10, 67.50),
        (77.4, 19.4, 72.95, 81.85),
        (74.6, 24.7, 68.94, 80.27),
    ];
    for (m, sd, lo, hi) in rows {
        let ci = normal_mean_ci(m, sd, 73, 0.95).unwrap();
        assert!((ci.lower - lo).abs() <= 0.05, "{m}: {}", ci.lower);
        assert!((ci.upper - hi).abs() <= 0.05, "{m}: {}", ci.upper);
    }
}

#[test]
fn published_mean_intervals_on_the_unit_scale() {
    let rows = [
        (0.6074, 0.1416, 22, 0.5482, 0.6666),
        (0.5173, 0.1542, 27, 0.4591, 0.5755),
        (0.5037, 0.1179, 22, 0.4544, 0.5530),
    ];
    for (m, sd, n, lo, hi) in rows {
        let ci = normal_mean_ci(m, sd, n, 0.95).unwrap();
        assert!((ci.lower - lo).abs() <= 0.005, "{m}: {}", ci.lower);
        assert!((ci.upper - hi).abs() <= 0.005, "{m}: {}", ci.upper);
    }
}

#[test]
fn degenerate_inputs() {
    assert!(wilson_interval(0, 0, 0.95).is_err());
    assert!(wilson_interval(5, 4, 0.95).is_err());
    assert!(wilson_interval(1, 2, 1.0).is_err());
    assert!(normal_mean_ci(0.5, -1.0, 10, 0.95).is_err());
    assert!(aggregate_scores(&[], 0.95).is_err());
    assert!(aggregate_scores(&[0.1, f64::NAN], 0.95).is_err());
    let r = two_proportion_z(0, 10, 0, 10, ContinuityCorrection::None).unwrap();
    assert!(r.degenerate);
    assert_eq!(r.p_two_sided, 1.0);
}

proptest! {
    #[test]
    fn wilson_bounds_contain_point(n in 1u64..500, frac in 0.0f64..=1.0, conf in 0.5f64..0.999) {
        let s = ((n as f64) * frac).round() as u64;
        let w = wilson_interval(s, n, conf).unwrap();
        prop_assert!(0.0 <= w.lower && w.lower <= w.point);
        prop_assert!(w.point <= w.upper && w.upper <= 1.0);
    }

    #[test]
    fn wilson_widens_with_confidence(n in 1u64..200, frac in 0.0f64..=1.0, c in 0.5f64..0.9) {
        let s = ((n as f64) * frac).round() as u64;
        let narrow = wilson_interval(s, n, c).unwrap();
        let wide = wilson_interval(s, n, c + 0.09).unwrap();
        prop_assert!(wide.lower <= narrow.lower + 1e-15);
        prop_assert!(wide.upper >= narrow.upper - 1e-15);
    }

    #[test]
    fn wilson_bounds_rise_with_successes(n in 2u64..300, s in 0u64..299) {
        prop_assume!(s < n);
        let a = wilson_interval(s, n, 0.95).unwrap();
        let b = wilson_interval(s + 1, n, 0.95).unwrap();
        prop_assert!(b.lower > a.lower);
        prop_assert!(b.upper > a.upper);
    }

    #[test]
    fn z_test_is_antisymmetric(n1 in 1u64..200, n2 in 1u64..200, f1 in 0.0f64..=1.0, f2 in 0.0f64..=1.0) {
        let s1 = ((n1 as f64) * f1).round() as u64;
        let s2 = ((n2 as f64) * f2).round() as u64;
        let a = two_proportion_z(s1, n1, s2, n2, ContinuityCorrection::None).unwrap();
        let b = two_proportion_z(s2, n2, s1, n1, ContinuityCorrection::None).unwrap();
        prop_assert!((a.z + b.z).abs() < 1e-12);
        prop_assert!((a.p_two_sided - b.p_two_sided).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a.p_two_sided));
    }

    #[test]
    fn yates_never_strengthens_evidence(n1 in 5u64..100, n2 in 5u64..100, f1 in 0.0f64..=1.0, f2 in 0.0f64..=1.0) {
        let s1 = ((n1 as f64) * f1).round() as u64;
        let s2 = ((n2 as f64) * f2).round() as u64;
        let plain = two_proportion_z(s1, n1, s2, n2, ContinuityCorrection::None).unwrap();
        let yates = two_proportion_z(s1, n1, s2, n2, ContinuityCorrection::Yates).unwrap();
        prop_assert!(yates.z.abs() <= plain.z.abs() + 1e-12);
    }

    #[test]
    fn mean_ci_half_width_scales_as_inverse_sqrt_n(m in -10.0f64..10.0, sd in 0.01f64..10.0, n in 1u64..1000) {
        let a = normal_mean_ci(m, sd, n, 0.95).unwrap();
        let b = normal_mean_ci(m, sd, 4 * n, 0.95).unwrap();
        prop_assert!((a.width() / b.width() - 2.0).abs() < 1e-9);
        prop_assert!(((a.lower + a.upper) / 2.0 - m).abs() < 1e-9);
    }

    #[test]
    fn aggregate_matches_two_pass(xs in prop::collection::vec(0.0f64..1.0, 2..200)) {
        let s = aggregate_scores(&xs, 0.95).unwrap();
        let (mean, sd) = oracle::mean_sd(&xs);
        prop_assert!((s.mean - mean).abs() < 1e-12);
        prop_assert!((s.sd - sd).abs() < 1e-10);
        prop_assert_eq!(s.n, xs.len() as u64);
        prop_assert!(s.min <= s.mean && s.mean <= s.max);
    }
}
