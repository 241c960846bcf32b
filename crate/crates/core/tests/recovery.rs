use approx::assert_relative_eq;
use proptest::prelude::*;
use sindex::exponent::{lambda_coeffs_quadrature, zeta_at, QuadratureOptions};
use sindex::model::{sample_dataset, Dataset, ModelSpec, NoiseChannel};
use sindex::recovery::*;
use sindex::{Error, LinkFunction};

fn dataset(d: usize, link: LinkFunction, n: usize, seed: u64) -> (Dataset, Vec<f64>) {
    let m = ModelSpec::new(d, link, NoiseChannel::Deterministic, seed);
    let w = m.direction();
    (sample_dataset(&m, n, seed.wrapping_add(1000)).unwrap(), w)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn with_truth(w: &[f64]) -> RecoveryConfig {
    RecoveryConfig { w_star: Some(w.to_vec()), ..RecoveryConfig::default() }
}

/// Householder reflection `I − 2uuᵀ/|u|²` applied to `x`.
fn reflect(u: &[f64], x: &[f64]) -> Vec<f64> {
    let uu: f64 = u.iter().map(|a| a * a).sum();
    let ux: f64 = u.iter().zip(x).map(|(a, b)| a * b).sum();
    x.iter().zip(u).map(|(xi, ui)| xi - 2.0 * ux / uu * ui).collect()
}

fn rotated(data: &Dataset, u: &[f64]) -> Dataset {
    let mut out = data.clone();
    out.x = data.x.chunks(data.d).flat_map(|row| reflect(u, row)).collect();
    out
}

#[test]
fn identity_denoiser_radius_and_shape() {
    let spec = build_denoiser(DenoiserSource::Link(&LinkFunction::Identity), 1, 3.0).unwrap();
    let r = 3.0 * 3f64.ln().sqrt();
    assert_relative_eq!(spec.radius(), r, max_relative = 1e-6);
    for y in [-2.5, -0.4, 0.0, 0.9, 3.1] {
        assert_relative_eq!(spec.transform(y).unwrap(), y / spec.radius(), epsilon = 1e-6);
    }
    assert_eq!(spec.transform(r + 0.5).unwrap(), 0.0);
    assert_eq!(spec.transform(-r - 0.5).unwrap(), 0.0);
}

#[test]
fn hermite2_denoiser_is_proportional_to_labels() {
    let spec = build_denoiser(DenoiserSource::Link(&LinkFunction::Hermite(2)), 2, 3.0).unwrap();
    let ys = [-0.7, -0.2, 0.3, 1.0, 2.5];
    let t = spec.transform_all(&ys).unwrap();
    for (y, ty) in ys.iter().zip(&t) {
        assert_relative_eq!(ty * spec.radius(), *y, epsilon = 1e-6);
    }
}

#[test]
fn square_gauss_denoiser_keeps_witness_sign() {
    let link = LinkFunction::SquareGauss;
    let spec = build_denoiser(DenoiserSource::Link(&link), 4, 3.0).unwrap();
    for y in [0.01, 0.05, 0.1, 0.2, 0.3, 0.35] {
        let zeta = zeta_at(&link, 4, y).unwrap();
        let t = spec.transform(y).unwrap();
        assert!(t == 0.0 || t.signum() == zeta.signum(), "y={y} zeta={zeta} t={t}");
        assert!(t.abs() <= 1.0);
    }
}

#[test]
fn denoiser_refuses_without_signal() {
    let link = LinkFunction::SquareGauss;
    for k in 1..=3 {
        let err = build_denoiser(DenoiserSource::Link(&link), k, 3.0).unwrap_err();
        assert!(matches!(err, Error::NoSignal { .. }), "{err}");
    }
    assert!(build_denoiser(DenoiserSource::Link(&link), 0, 3.0).is_err());
    assert!(build_denoiser(DenoiserSource::Link(&link), 4, 0.0).is_err());
}

#[test]
fn radius_formula() {
    let lambda =
        lambda_coeffs_quadrature(&LinkFunction::SquareGauss, 4, &QuadratureOptions::default()).unwrap().lambda[3];
    let spec = build_denoiser(DenoiserSource::Link(&LinkFunction::SquareGauss), 4, 2.0).unwrap();
    assert_relative_eq!(spec.radius(), 2.0 * (3.0 / lambda).ln().powi(2), max_relative = 1e-12);
}

#[test]
fn k1_identity_recovers_direction() {
    let d = 64;
    let spec = build_denoiser(DenoiserSource::Link(&LinkFunction::Identity), 1, 3.0).unwrap();
    let mut overlaps = Vec::new();
    for seed in 0..10 {
        let (data, w) = dataset(d, LinkFunction::Identity, 4096, seed);
        let t = spec.transform_all(&data.y).unwrap();
        overlaps.push(algorithm1(&data, &t, 1, &with_truth(&w)).unwrap().overlap.unwrap());
    }
    assert!(median(overlaps.clone()) >= 0.9, "{overlaps:?}");
}

#[test]
fn k2_hermite_recovers_direction() {
    let d = 64;
    let spec = build_denoiser(DenoiserSource::Link(&LinkFunction::Hermite(2)), 2, 3.0).unwrap();
    let mut overlaps = Vec::new();
    for seed in 0..5 {
        let (data, w) = dataset(d, LinkFunction::Hermite(2), 40 * d, seed);
        let t = spec.transform_all(&data.y).unwrap();
        overlaps.push(algorithm1(&data, &t, 2, &with_truth(&w)).unwrap().overlap.unwrap());
    }
    assert!(median(overlaps.clone()) >= 0.8, "{overlaps:?}");
}

#[test]
fn zero_labels_lose_signal() {
    let (data, _) = dataset(8, LinkFunction::Identity, 400, 3);
    let zeros = vec![0.0; data.n];
    for k in 1..=4 {
        let err = algorithm1(&data, &zeros, k, &RecoveryConfig::default()).unwrap_err();
        assert!(matches!(err, Error::SignalLost { .. }), "k={k}: {err}");
    }
}

#[test]
fn schedule_errors_and_input_checks() {
    let (data, _) = dataset(16, LinkFunction::Identity, 12, 3);
    let t = data.y.clone();
    assert!(matches!(algorithm1(&data, &t, 1, &RecoveryConfig::default()), Err(Error::Sizing(_))));
    let (data, _) = dataset(4, LinkFunction::Identity, 200, 3);
    assert!(algorithm1(&data, &data.y[..10], 1, &RecoveryConfig::default()).is_err());
    assert!(algorithm1(&data, &data.y, 0, &RecoveryConfig::default()).is_err());
}

#[test]
fn stages_are_disjoint_and_within_budget() {
    for (k, link) in [(1, LinkFunction::Identity), (2, LinkFunction::Hermite(2)), (3, LinkFunction::Hermite(3))] {
        let (data, w) = dataset(8, link.clone(), 3000, 11);
        let spec = build_denoiser(DenoiserSource::Link(&link), k, 3.0).unwrap();
        let t = spec.transform_all(&data.y).unwrap();
        let rep = algorithm1(&data, &t, k, &with_truth(&w)).unwrap();
        let mut end = 0;
        for s in &rep.stages {
            assert!(s.start >= end && s.end > s.start, "{:?}", rep.stages);
            end = s.end;
            let o = s.overlap.unwrap();
            assert!((0.0..=1.0).contains(&o));
        }
        assert!(rep.samples_used() <= data.n);
        if k == 3 {
            assert_eq!(rep.stages.len(), 2 + 3, "ceil(log2 8) power rounds");
        }
        assert_relative_eq!(rep.w_hat.iter().map(|a| a * a).sum::<f64>(), 1.0, epsilon = 1e-12);
    }
}

#[test]
fn rotation_equivariance() {
    let d = 12;
    let u: Vec<f64> = (0..d).map(|i| (i as f64 * 0.7).sin() + 0.3).collect();
    for (k, link) in [(1, LinkFunction::Identity), (2, LinkFunction::Hermite(2)), (3, LinkFunction::Hermite(3))] {
        let (data, w) = dataset(d, link.clone(), 6000, 5);
        let spec = build_denoiser(DenoiserSource::Link(&link), k, 3.0).unwrap();
        let t = spec.transform_all(&data.y).unwrap();
        let a = algorithm1(&data, &t, k, &with_truth(&w)).unwrap();
        let rw = reflect(&u, &w);
        let b = algorithm1(&rotated(&data, &u), &t, k, &with_truth(&rw)).unwrap();
        assert!((a.overlap.unwrap() - b.overlap.unwrap()).abs() < 1e-10, "k={k}");
        let expected = reflect(&u, &a.w_hat);
        let sign = expected.iter().zip(&b.w_hat).map(|(x, y)| x * y).sum::<f64>().signum();
        for (x, y) in expected.iter().zip(&b.w_hat) {
            assert!((x - sign * y).abs() < 1e-8, "k={k}");
        }
    }
}

#[test]
fn label_scale_leaves_iterates_unchanged() {
    for (k, link) in [(1, LinkFunction::Identity), (2, LinkFunction::Hermite(2)), (3, LinkFunction::Hermite(3))] {
        let (data, w) = dataset(10, link.clone(), 5000, 9);
        let spec = build_denoiser(DenoiserSource::Link(&link), k, 3.0).unwrap();
        let t = spec.transform_all(&data.y).unwrap();
        let a = algorithm1(&data, &t, k, &with_truth(&w)).unwrap();
        for c in [0.25, 7.0] {
            let scaled: Vec<f64> = t.iter().map(|x| c * x).collect();
            let b = algorithm1(&data, &scaled, k, &with_truth(&w)).unwrap();
            for (sa, sb) in a.stages.iter().zip(&b.stages) {
                assert!((sa.overlap.unwrap() - sb.overlap.unwrap()).abs() < 1e-12, "k={k} c={c}");
            }
            for (x, y) in a.w_hat.iter().zip(&b.w_hat) {
                assert!((x - y).abs() < 1e-12, "k={k} c={c}");
            }
        }
    }
}

#[test]
fn bbp_rejects_odd_or_small_degree() {
    let (data, _) = dataset(6, LinkFunction::Identity, 100, 1);
    for k in [1, 2, 3, 5] {
        assert!(bbp_diagnostics(&data, &data.y, k, None, None).is_err());
    }
}

#[test]
fn bbp_label_flip_keeps_outlier() {
    let link = LinkFunction::SquareGauss;
    let d = 24;
    let (data, w) = dataset(d, link.clone(), 40_000, 2);
    let spec = build_denoiser(DenoiserSource::Link(&link), 4, 3.0).unwrap();
    let t = spec.transform_all(&data.y).unwrap();
    let flipped: Vec<f64> = t.iter().map(|x| -x).collect();
    let a = bbp_diagnostics(&data, &t, 4, Some(&w), None).unwrap();
    let b = bbp_diagnostics(&data, &flipped, 4, Some(&w), None).unwrap();
    assert_relative_eq!(a.top_eigenvalues[0], -b.top_eigenvalues[0], max_relative = 1e-10);
    assert_relative_eq!(a.bulk_edge, b.bulk_edge, max_relative = 1e-10);
    assert_relative_eq!(a.measured_overlap.unwrap(), b.measured_overlap.unwrap(), epsilon = 1e-10);
}

#[test]
fn bbp_without_samples_has_no_outlier() {
    let link = LinkFunction::SquareGauss;
    let d = 64;
    let spec = build_denoiser(DenoiserSource::Link(&link), 4, 3.0).unwrap();
    let signal = denoised_signal(&spec, &link, 4).unwrap();
    let mut overlaps = Vec::new();
    for seed in 0..9 {
        let (data, w) = dataset(d, link.clone(), 200, seed);
        let t = spec.transform_all(&data.y).unwrap();
        let rec = bbp_diagnostics(&data, &t, 4, Some(&w), Some(signal)).unwrap();
        assert!(rec.delta < 0.1);
        assert_eq!(rec.prediction.unwrap().overlap, Some(0.0));
        overlaps.push(rec.measured_overlap.unwrap());
    }
    assert!(median(overlaps.clone()) < 10.0 / d as f64, "{overlaps:?}");
}

#[test]
fn exhaustive_oracle_in_two_dimensions() {
    let spec = build_denoiser(DenoiserSource::Link(&LinkFunction::Identity), 1, 3.0).unwrap();
    let (data, w) = dataset(2, LinkFunction::Identity, 500, 4);
    let t = spec.transform_all(&data.y).unwrap();
    let w_hat = exhaustive_oracle(&data, &t, 1, 0.05).unwrap();
    assert!(overlap(&w_hat, &w) >= 0.95);
}

#[test]
fn exhaustive_oracle_hermite2_in_five_dimensions() {
    let spec = build_denoiser(DenoiserSource::Link(&LinkFunction::Hermite(2)), 2, 3.0).unwrap();
    let mut overlaps = Vec::new();
    for seed in 0..5 {
        let (data, w) = dataset(5, LinkFunction::Hermite(2), 500, seed);
        let t = spec.transform_all(&data.y).unwrap();
        overlaps.push(overlap(&exhaustive_oracle(&data, &t, 2, 0.25).unwrap(), &w));
    }
    assert!(median(overlaps.clone()) >= 0.8, "{overlaps:?}");
}

#[test]
fn exhaustive_oracle_guards() {
    let (data, _) = dataset(2, LinkFunction::Identity, 10, 4);
    let mut empty = data.clone();
    empty.n = 0;
    empty.x.clear();
    empty.y.clear();
    assert!(matches!(exhaustive_oracle(&empty, &[], 1, 0.1), Err(Error::Sizing(_))));
    let (big, _) = dataset(8, LinkFunction::Identity, 10, 4);
    assert!(matches!(exhaustive_oracle(&big, &big.y, 1, 0.1), Err(Error::SizeGuard { .. })));
}

#[test]
fn sphere_net_points_are_unit() {
    for d in 1..=4 {
        for p in sphere_net(d, 0.4).unwrap() {
            assert_relative_eq!(p.iter().map(|a| a * a).sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }
    assert!(sphere_net(0, 0.1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transforms_are_bounded(y in -50.0f64..50.0, c in 0.5f64..5.0) {
        for (link, k) in [(LinkFunction::Identity, 1), (LinkFunction::Hermite(2), 2), (LinkFunction::Hermite(3), 3)] {
            let spec = build_denoiser(DenoiserSource::Link(&link), k, c).unwrap();
            prop_assert!(spec.transform(y).unwrap().abs() <= 1.0);
        }
    }

    #[test]
    fn overlap_is_a_squared_cosine(a in prop::collection::vec(-1.0f64..1.0, 5), b in prop::collection::vec(-1.0f64..1.0, 5)) {
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assume!(na > 1e-3 && nb > 1e-3);
        let ua: Vec<f64> = a.iter().map(|x| x / na).collect();
        let ub: Vec<f64> = b.iter().map(|x| x / nb).collect();
        let o = overlap(&ua, &ub);
        prop_assert!((0.0..=1.0).contains(&o));
        prop_assert!((overlap(&ua, &ua) - 1.0).abs() < 1e-12);
    }
}
