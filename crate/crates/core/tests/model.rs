use approx::assert_relative_eq;
use proptest::prelude::*;
use sindex::hermite::{eval_hermite, HermiteKind};
use sindex::model::*;
use sindex::tensor::dot;
use sindex::{eval_link, LinkFunction};

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Two-sample Kolmogorov–Smirnov statistic.
fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

/// Rejection threshold of the KS statistic at level `alpha` (asymptotic).
fn ks_critical(n: usize, m: usize, alpha: f64) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n * m) as f64).sqrt()
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn link_values() {
    assert_relative_eq!(eval_link(&LinkFunction::SquareGauss, 1.0), (-1.0f64).exp(), epsilon = 1e-15);
    assert_relative_eq!(eval_link(&LinkFunction::Hermite(3), 2.0), 2.0 / 6f64.sqrt(), epsilon = 1e-15);
    for z in [-1.3, 0.0, 0.4, 2.2] {
        let series = LinkFunction::HermiteSeries(vec![0.0, 0.0, 1.0]);
        assert_relative_eq!(eval_link(&series, z), eval_hermite(HermiteKind::Normalized, 2, z), epsilon = 1e-15);
    }
}

#[test]
fn identity_labels_are_the_first_coordinate() {
    let m =
        ModelSpec::new(3, LinkFunction::Identity, NoiseChannel::Deterministic, 0).with_direction(vec![1.0, 0.0, 0.0]);
    let ds = sample_dataset(&m, 5000, 17).unwrap();
    assert!((0..ds.n).all(|i| ds.y[i] == ds.row(i)[0]));
}

#[test]
fn hermite_two_correlation_is_one() {
    let w = vec![0.6, 0.8];
    let m = ModelSpec::new(2, LinkFunction::Hermite(2), NoiseChannel::Deterministic, 0).with_direction(w.clone());
    let ds = sample_dataset(&m, 1_000_000, 3).unwrap();
    let prods: Vec<f64> =
        ds.projections(&w).iter().zip(&ds.y).map(|(z, y)| y * eval_hermite(HermiteKind::Normalized, 2, *z)).collect();
    let (mean, se) = mean_and_se(&prods);
    assert!((mean - 1.0).abs() < 3.0 * se, "{mean} ± {se}");
}

#[test]
fn additive_noise_variance() {
    let m = ModelSpec::new(4, LinkFunction::Identity, NoiseChannel::AdditiveGaussian(0.5), 1);
    let ds = sample_dataset(&m, 1_000_000, 8).unwrap();
    let sq: Vec<f64> = ds.y.iter().map(|y| y * y).collect();
    // Var(Y) = E[Y²] since E[Y] = 0 exactly
    let (var, se) = mean_and_se(&sq);
    assert!((var - 1.25).abs() < 3.0 * se, "{var} ± {se}");
}

#[test]
fn rotated_direction_matches_rotated_features_in_law() {
    let d = 3;
    let e1 = vec![1.0, 0.0, 0.0];
    // rotation by 40° in the (1,2) plane sends e1 to w
    let (c, s) = (40f64.to_radians().cos(), 40f64.to_radians().sin());
    let rotate = |x: &[f64]| vec![c * x[0] - s * x[1], s * x[0] + c * x[1], x[2]];
    let w = rotate(&e1);
    let noise = NoiseChannel::AdditiveGaussian(0.3);
    let n = 100_000;

    let a = sample_dataset(
        &ModelSpec::new(d, LinkFunction::SquareGauss, noise.clone(), 0).with_direction(w.clone()),
        n,
        21,
    )
    .unwrap();
    let b = sample_dataset(&ModelSpec::new(d, LinkFunction::SquareGauss, noise, 0).with_direction(e1), n, 22).unwrap();
    let b_rot: Vec<f64> = (0..n).flat_map(|i| rotate(b.row(i))).collect();

    let za = a.projections(&w);
    let zb: Vec<f64> = b_rot.chunks(d).map(|x| dot(x, &w)).collect();
    let crit = ks_critical(n, n, 0.001);
    assert!(ks_statistic(&za, &zb) < crit);
    assert!(ks_statistic(&a.y, &b.y) < crit);
    // joint law through a mixed statistic
    let pa: Vec<f64> = za.iter().zip(&a.y).map(|(z, y)| z * y).collect();
    let pb: Vec<f64> = zb.iter().zip(&b.y).map(|(z, y)| z * y).collect();
    assert!(ks_statistic(&pa, &pb) < crit);
}

#[test]
fn ks_detects_a_shift() {
    let m = ModelSpec::new(1, LinkFunction::Identity, NoiseChannel::Deterministic, 0).with_direction(vec![1.0]);
    let a = sample_dataset(&m, 20_000, 1).unwrap();
    let shifted: Vec<f64> = sample_dataset(&m, 20_000, 2).unwrap().y.iter().map(|y| y + 0.1).collect();
    assert!(ks_statistic(&a.y, &shifted) > ks_critical(20_000, 20_000, 0.001));
}

#[test]
fn datasets_do_not_depend_on_thread_count() {
    let m =
        ModelSpec::new(24, LinkFunction::parse("tanh(hermite(3))").unwrap(), NoiseChannel::AdditiveGaussian(0.2), 4);
    let one = in_pool(1, || sample_dataset(&m, 3000, 99).unwrap());
    let eight = in_pool(8, || sample_dataset(&m, 3000, 99).unwrap());
    assert_eq!(one, eight);
    let mut a = Vec::new();
    let mut b = Vec::new();
    one.write_csv(&mut a).unwrap();
    eight.write_csv(&mut b).unwrap();
    assert_eq!(a, b);

    let stream = ModelStream::new(&m, 3000, 99).unwrap();
    assert_eq!(in_pool(1, || stream.labels()), one.y);
    assert_eq!(in_pool(8, || stream.labels()), one.y);
}

#[test]
fn rows_depend_only_on_their_index() {
    let m = ModelSpec::new(5, LinkFunction::Identity, NoiseChannel::MultiplicativeGaussian, 2);
    let small = sample_dataset(&m, 700, 5).unwrap();
    let large = sample_dataset(&m, 1500, 5).unwrap();
    assert_eq!(small, large.slice(0, 700).unwrap());
    let stream = ModelStream::new(&m, 1500, 5).unwrap();
    let mut x = vec![0.0; 5];
    assert_eq!(sindex::model::SampleSource::fill(&stream, 1234, &mut x), large.y[1234]);
    assert_eq!(x, large.row(1234));
}

#[test]
fn csv_round_trip_is_exact() {
    let m = ModelSpec::new(4, LinkFunction::SquareGauss, NoiseChannel::AdditiveGaussian(0.1), 6);
    let ds = sample_dataset(&m, 257, 12).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    ds.save(&path).unwrap();
    assert_eq!(Dataset::load(&path).unwrap(), ds);
}

#[test]
fn malformed_csv_is_rejected() {
    let cases = [
        "",
        "d=2 n=1\n1,2,3\n",
        "# sindex-v1 d=2 n=1 seed=0 model=ab\n1,2\n",
        "# sindex-v1 d=2 n=2 seed=0 model=ab\n1,2,3\n",
        "# sindex-v1 d=2 n=1 seed=0 model=ab\n1,x,3\n",
        "# sindex-v1 d=2 n=1 seed=0 model=ab\n1,inf,3\n",
        "# sindex-v1 d=2 n=1 seed=0\n1,2,3\n",
    ];
    for text in cases {
        assert!(Dataset::read_csv(text.as_bytes()).is_err(), "accepted {text:?}");
    }
    assert!(Dataset::read_csv("# sindex-v1 d=2 n=1 seed=0 model=ab\n1,2,3\n".as_bytes()).is_ok());
}

#[test]
fn mixture_labels_split_on_the_sign_of_z() {
    let noise = NoiseChannel::parse("mixture(gaussian(2,0.1);uniform(-1,0))").unwrap();
    let w = vec![0.0, 1.0];
    let m = ModelSpec::new(2, LinkFunction::Identity, noise, 0).with_direction(w.clone());
    let ds = sample_dataset(&m, 20_000, 4).unwrap();
    let z = ds.projections(&w);
    let above: Vec<f64> = z.iter().zip(&ds.y).filter(|(z, _)| **z >= 0.0).map(|(_, y)| *y).collect();
    let below: Vec<f64> = z.iter().zip(&ds.y).filter(|(z, _)| **z < 0.0).map(|(_, y)| *y).collect();
    assert!(below.iter().all(|y| (-1.0..=0.0).contains(y)));
    let (m_above, se) = mean_and_se(&above);
    assert!((m_above - 2.0).abs() < 4.0 * se);
    let (m_below, se) = mean_and_se(&below);
    assert!((m_below + 0.5).abs() < 4.0 * se);
}

#[test]
fn massart_flips_at_the_stated_rate() {
    let w = vec![1.0];
    let m =
        ModelSpec::new(1, LinkFunction::Identity, NoiseChannel::parse("massart(0.2)").unwrap(), 0).with_direction(w);
    let ds = sample_dataset(&m, 100_000, 1).unwrap();
    let flips: Vec<f64> = (0..ds.n).map(|i| if ds.y[i] == ds.row(i)[0] { 0.0 } else { 1.0 }).collect();
    let (rate, se) = mean_and_se(&flips);
    assert!((rate - 0.2).abs() < 4.0 * se);
}

#[test]
fn random_direction_is_a_unit_vector_and_reproducible() {
    let m = ModelSpec::new(50, LinkFunction::Identity, NoiseChannel::Deterministic, 31);
    let w = m.direction();
    assert_relative_eq!(dot(&w, &w), 1.0, epsilon = 1e-12);
    assert_eq!(w, m.direction());
    assert_ne!(w, ModelSpec::new(50, LinkFunction::Identity, NoiseChannel::Deterministic, 32).direction());
    assert_eq!(m.digest(), m.clone().digest());
}

#[test]
fn invalid_models_are_rejected() {
    let id = LinkFunction::Identity;
    assert!(sample_dataset(&ModelSpec::new(0, id.clone(), NoiseChannel::Deterministic, 0), 10, 0).is_err());
    assert!(sample_dataset(&ModelSpec::new(2, id.clone(), NoiseChannel::Deterministic, 0), 0, 0).is_err());
    let bad_w = ModelSpec::new(2, id.clone(), NoiseChannel::Deterministic, 0).with_direction(vec![1.0, 1.0]);
    assert!(sample_dataset(&bad_w, 10, 0).is_err());
    assert!(NoiseChannel::parse("massart(0.5)").is_err());
    assert!(NoiseChannel::parse("additive-gaussian(-1)").is_err());
    assert!(NoiseChannel::parse("mixture(uniform(1,0);point-mass(0))").is_err());
    assert!(LinkFunction::parse("hermite(x)").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn link_descriptions_parse_back(choice in 0usize..6, j in 0usize..8, g in 0.1f64..2.0) {
        let link = match choice {
            0 => LinkFunction::Identity,
            1 => LinkFunction::Hermite(j),
            2 => LinkFunction::SquareGauss,
            3 => LinkFunction::Cosine { gamma: g },
            4 => LinkFunction::HermiteSeries(vec![g, 0.0, -g]),
            _ => LinkFunction::parse(&format!("cube(hermite({j}))")).unwrap(),
        };
        let back = LinkFunction::parse(&link.describe()).unwrap();
        for z in [-2.0, -0.3, 0.0, 1.1] {
            prop_assert_eq!(back.eval(z).to_bits(), link.eval(z).to_bits());
        }
    }

    #[test]
    fn noise_descriptions_parse_back(choice in 0usize..5, t in 0.0f64..0.49) {
        let ch = match choice {
            0 => NoiseChannel::Deterministic,
            1 => NoiseChannel::AdditiveGaussian(t),
            2 => NoiseChannel::MultiplicativeGaussian,
            3 => NoiseChannel::Massart(FlipRate::Constant(t)),
            _ => NoiseChannel::Massart(FlipRate::Bump { peak: t, width: 1.0 + t }),
        };
        prop_assert_eq!(NoiseChannel::parse(&ch.describe()).unwrap(), ch);
    }

    #[test]
    fn csv_round_trip(d in 1usize..6, n in 1usize..40, seed in 0u64..1000) {
        let m = ModelSpec::new(d, LinkFunction::Hermite(3), NoiseChannel::AdditiveGaussian(0.5), seed);
        let ds = sample_dataset(&m, n, seed).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        prop_assert_eq!(Dataset::read_csv(buf.as_slice()).unwrap(), ds);
    }
}
