use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use sindex::hermite::*;

/// `He_k(z) = k! Σ_m (−1)^m z^{k−2m} / (m! (k−2m)! 2^m)`.
fn hermite_explicit(k: usize, z: f64) -> f64 {
    let fact = |n: usize| (1..=n).map(|i| i as f64).product::<f64>();
    (0..=k / 2)
        .map(|m| {
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            sign * fact(k) / (fact(m) * fact(k - 2 * m) * 2f64.powi(m as i32)) * z.powi((k - 2 * m) as i32)
        })
        .sum()
}

/// Monomial coefficients of the monic chi-square polynomial, built from the
/// defining sum independently of the library.
fn chi2_coefficients(k: usize, d: usize) -> Vec<f64> {
    let mut c = vec![0.0; k + 1];
    for (j, slot) in c.iter_mut().enumerate() {
        let binom: f64 = (0..j).map(|i| (k - i) as f64 / (i + 1) as f64).product();
        let tail: f64 = (j..k).map(|i| (d + 2 * i) as f64).product();
        *slot = binom * if (k - j).is_multiple_of(2) { 1.0 } else { -1.0 } * tail;
    }
    c
}

/// `E[r^m]` for `r ~ χ²(d)`.
fn chi2_moment(m: usize, d: usize) -> f64 {
    (0..m).map(|i| (d + 2 * i) as f64).product()
}

#[test]
fn hermite_values() {
    assert_eq!(eval_hermite(HermiteKind::Unnormalized, 3, 2.0), 2.0);
    assert!(eval_hermite(HermiteKind::Normalized, 2, 1.0).abs() < 1e-15);
    assert_relative_eq!(eval_hermite(HermiteKind::Normalized, 4, 0.0), 3.0 / 24f64.sqrt(), epsilon = 1e-15);
    assert_relative_eq!(eval_hermite(HermiteKind::Normalized, 4, 0.0), 0.612372, epsilon = 1e-6);
}

#[test]
fn large_arguments_do_not_overflow() {
    let z = 40.0;
    let v = eval_hermite(HermiteKind::Unnormalized, 60, z);
    assert!(v.is_finite() && v > 0.0);
    assert_relative_eq!(v.ln(), 60.0 * z.ln(), max_relative = 0.05);
    assert_relative_eq!(
        eval_hermite(HermiteKind::Unnormalized, 4, 12.0),
        hermite_explicit(4, 12.0),
        max_relative = 1e-12
    );
}

#[test]
fn chi2_values() {
    for d in [1, 4, 9] {
        assert_eq!(chi2_poly(1, d, 2.5), 2.5 - d as f64);
    }
    assert_eq!(chi2_poly(2, 3, 0.0), 15.0);
    assert_eq!(chi2_poly(0, 7, 5.5), 1.0);
}

#[test]
fn chi2_polynomials_are_orthogonal_under_exact_moments() {
    for d in [1, 3, 10] {
        for j in 0..=4 {
            for k in 0..=4 {
                let (cj, ck) = (chi2_coefficients(j, d), chi2_coefficients(k, d));
                let inner: f64 = cj
                    .iter()
                    .enumerate()
                    .flat_map(|(a, x)| ck.iter().enumerate().map(move |(b, y)| x * y * chi2_moment(a + b, d)))
                    .sum();
                let scale: f64 = (0..k).map(|i| (2 * (i + 1) * (d + 2 * i)) as f64).product();
                if j == k {
                    assert_relative_eq!(inner, scale, max_relative = 1e-9);
                } else {
                    let size: f64 = cj.iter().map(|c| c.abs()).sum::<f64>() * ck.iter().map(|c| c.abs()).sum::<f64>();
                    assert!(inner.abs() <= 1e-9 * size * chi2_moment(j + k, d), "d={d} j={j} k={k}: {inner}");
                }
            }
        }
    }
}

#[test]
fn small_quadrature_rules() {
    let r2 = gauss_hermite_rule(2).unwrap();
    assert_relative_eq!(r2.nodes[0], -1.0, epsilon = 1e-14);
    assert_relative_eq!(r2.nodes[1], 1.0, epsilon = 1e-14);
    assert_relative_eq!(r2.weights[0], 0.5, epsilon = 1e-14);

    let r3 = gauss_hermite_rule(3).unwrap();
    let s3 = 3f64.sqrt();
    for (got, want) in r3.nodes.iter().zip([-s3, 0.0, s3]) {
        assert_relative_eq!(*got, want, epsilon = 1e-14);
    }
    for (got, want) in r3.weights.iter().zip([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0]) {
        assert_relative_eq!(*got, want, epsilon = 1e-14);
    }
    assert_relative_eq!(r3.integrate(|z| z * z), 1.0, epsilon = 1e-14);

    let r5 = gauss_hermite_rule(5).unwrap();
    let h4 = r5.integrate(|z| eval_hermite(HermiteKind::Normalized, 4, z).powi(2));
    assert!((h4 - 1.0).abs() < 1e-12);
}

#[test]
fn quadrature_reproduces_gaussian_moments() {
    for n in 1..=20 {
        let rule = gauss_hermite_rule(n).unwrap();
        assert_relative_eq!(rule.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        for p in 0..2 * n {
            let got = rule.integrate(|z| z.powi(p as i32));
            let want = if p % 2 == 0 { double_factorial(p as i64 - 1) } else { 0.0 };
            // odd moments cancel between terms of size E|z|^p
            let scale = double_factorial(p as i64 + (p as i64 % 2) - 1).max(1.0);
            assert!((got - want).abs() <= 1e-10 * scale, "n={n} p={p}: {got} vs {want}");
        }
    }
}

#[test]
fn orthonormality_under_the_rule() {
    let rule = gauss_hermite_rule(24).unwrap();
    for j in 0..=12 {
        for k in 0..=12 {
            let v = rule.integrate(|z| {
                eval_hermite(HermiteKind::Normalized, j, z) * eval_hermite(HermiteKind::Normalized, k, z)
            });
            assert!((v - if j == k { 1.0 } else { 0.0 }).abs() < 1e-10, "({j},{k}) -> {v}");
        }
    }
}

#[test]
fn rule_size_is_guarded() {
    assert!(gauss_hermite_rule(0).is_err());
    assert!(gauss_hermite_rule(MAX_DEGREE).is_ok());
    assert!(gauss_hermite_rule(MAX_DEGREE + 1).is_err());
}

#[test]
fn q_values() {
    assert_eq!(sym_poly_q_slice(&[0.7]), 0.7);
    assert_relative_eq!(sym_poly_q_slice(&[0.7, -1.3]), 0.7 * -1.3 + 1.0, epsilon = 1e-15);
    assert_relative_eq!(sym_poly_q_slice(&[1.0, 2.0, 3.0]), 12.0, epsilon = 1e-14);
}

#[test]
fn q_matches_monte_carlo() {
    let u = [1.0, 2.0, 3.0];
    let mut rng = ChaCha12Rng::seed_from_u64(11);
    let n = 1_000_000;
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        let p: f64 = u.iter().map(|ui| ui + z).product();
        s += p;
        s2 += p * p;
    }
    let mean = s / n as f64;
    let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
    assert!((mean - 12.0).abs() < 3.0 * se, "{mean} ± {se}");
}

#[test]
fn q_is_the_gaussian_expectation_by_quadrature() {
    let rule = gauss_hermite_rule(8).unwrap();
    let u = [0.3, -1.1, 2.2, 0.9, -0.4];
    let want = rule.integrate(|z| u.iter().map(|ui| ui + z).product());
    assert_relative_eq!(sym_poly_q_slice(&u), want, max_relative = 1e-12);
}

#[test]
fn vandermonde_weights_at_hermite_roots() {
    let two = vandermonde_weights(&PointConfig::new(vec![-1.0, 1.0]).unwrap());
    assert_relative_eq!(two[0], 0.5, epsilon = 1e-14);
    assert_relative_eq!(two[1], 0.5, epsilon = 1e-14);
    let s3 = 3f64.sqrt();
    let three = vandermonde_weights(&PointConfig::new(vec![-s3, 0.0, s3]).unwrap());
    for (got, want) in three.iter().zip([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0]) {
        assert_relative_eq!(*got, want, epsilon = 1e-14);
    }
}

#[test]
fn vandermonde_three_case_identity() {
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    for trial in 0..10 {
        let n = 2 + trial % 7;
        let pts: Vec<f64> = (0..n).map(|_| rng.random_range(-2.5..2.5)).collect();
        let Ok(cfg) = PointConfig::new(pts) else { continue };
        let v = vandermonde_weights(&cfg);
        let u = cfg.points();
        for k in 0..=n {
            let s: f64 = u.iter().zip(&v).map(|(&ui, vi)| eval_hermite(HermiteKind::Unnormalized, k, ui) * vi).sum();
            let want = match k {
                0 => 1.0,
                k if k < n => 0.0,
                _ => (if (n + 1) % 2 == 0 { 1.0 } else { -1.0 }) * sym_poly_q(&cfg),
            };
            let scale = v.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
            assert!((s - want).abs() < 1e-8 * scale, "n={n} k={k}: {s} vs {want}");
        }
    }
}

#[test]
fn coincident_points_are_rejected() {
    assert!(PointConfig::new(vec![0.5, 0.5]).is_err());
    assert!(PointConfig::new(vec![]).is_err());
    assert!(PointConfig::new(vec![0.0, f64::NAN]).is_err());
    assert!(PointConfig::with_min_gap(vec![0.0, 0.01], 0.1).is_err());
}

#[test]
fn gaussian_helpers() {
    assert_relative_eq!(gaussian_pdf(0.0), 1.0 / (2.0 * std::f64::consts::PI).sqrt(), epsilon = 1e-16);
    assert_relative_eq!(gaussian_cdf(0.0), 0.5, epsilon = 1e-16);
    assert_relative_eq!(gaussian_cdf(-10.0), 7.619853024160527e-24, max_relative = 1e-10);
    assert_eq!(double_factorial(-1), 1.0);
    assert_eq!(double_factorial(7), 105.0);
    assert_relative_eq!(ln_factorial(10), 3628800f64.ln(), epsilon = 1e-12);
    assert_relative_eq!(ln_double_factorial(9), 945f64.ln(), epsilon = 1e-12);
}

proptest! {
    #[test]
    fn recurrence_matches_explicit_expansion(k in 0usize..=8, z in -5.0f64..5.0) {
        let got = eval_hermite(HermiteKind::Unnormalized, k, z);
        let want = hermite_explicit(k, z);
        let scale = (0..=k / 2).map(|m| hermite_explicit_term(k, m, z).abs()).sum::<f64>().max(1.0);
        prop_assert!((got - want).abs() <= 1e-9 * scale, "k={} z={}: {} vs {}", k, z, got, want);
    }

    #[test]
    fn normalized_is_unnormalized_over_root_factorial(k in 0usize..=20, z in -6.0f64..6.0) {
        let h = eval_hermite(HermiteKind::Normalized, k, z);
        let he = eval_hermite(HermiteKind::Unnormalized, k, z);
        prop_assert!((h - he * (-0.5 * ln_factorial(k)).exp()).abs() <= 1e-10 * he.abs().max(1.0));
    }

    #[test]
    fn table_agrees_with_pointwise(kmax in 0usize..=16, z in -8.0f64..8.0) {
        for kind in [HermiteKind::Normalized, HermiteKind::Unnormalized] {
            let t = hermite_table(kind, kmax, z);
            prop_assert_eq!(t.len(), kmax + 1);
            for (k, v) in t.iter().enumerate() {
                let p = eval_hermite(kind, k, z);
                prop_assert!((v - p).abs() <= 1e-12 * p.abs().max(1.0));
            }
        }
    }

    #[test]
    fn chi2_matches_monomial_coefficients(k in 0usize..=5, d in 1usize..=12, r in 0.0f64..30.0) {
        let c = chi2_coefficients(k, d);
        let want: f64 = c.iter().enumerate().map(|(j, cj)| cj * r.powi(j as i32)).sum();
        let scale: f64 = c.iter().enumerate().map(|(j, cj)| (cj * r.powi(j as i32)).abs()).sum::<f64>().max(1.0);
        prop_assert!((chi2_poly(k, d, r) - want).abs() <= 1e-12 * scale);
    }

    #[test]
    fn elementary_symmetric_expands_the_product(u in prop::collection::vec(-3.0f64..3.0, 1..7), t in -2.0f64..2.0) {
        // prod (t + u_i) = Σ_j e_j t^{n-j}
        let e = elementary_symmetric(&u);
        let n = u.len();
        let lhs: f64 = u.iter().map(|ui| t + ui).product();
        let rhs: f64 = e.iter().enumerate().map(|(j, ej)| ej * t.powi((n - j) as i32)).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }
}

fn hermite_explicit_term(k: usize, m: usize, z: f64) -> f64 {
    let fact = |n: usize| (1..=n).map(|i| i as f64).product::<f64>();
    fact(k) / (fact(m) * fact(k - 2 * m) * 2f64.powi(m as i32)) * z.powi((k - 2 * m) as i32)
}
