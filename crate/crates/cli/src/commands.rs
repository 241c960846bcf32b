//! Subcommand implementations. Each writes `report.toml` plus artifacts
//! into the output directory and returns the report path.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use sindex::agnostic::{algorithm2, AgnosticConfig, AgnosticReport};
use sindex::bounds::{
    bbp_predictions, ld_norm_asymptotic, ld_norm_exact, sq_bound, strong_detection_samples, BoundsQuery,
};
use sindex::exponent::{
    chi2_mutual_info, default_bins, lambda_coeffs_binned, lambda_coeffs_quadrature, MutualInfo, QuadratureOptions,
    SpectralProfile, ZetaEvaluator, MIN_PER_BIN,
};
use sindex::forge::{
    forge_link, init_level_points, integrate_level_ode, ForgeParams, LinkTable, VERIFY_ABOVE, VERIFY_BELOW,
};
use sindex::model::{sample_dataset, Dataset, ModelSpec, ModelStream, NoiseChannel};
use sindex::recovery::{
    algorithm1, bbp_diagnostics, build_denoiser, denoised_signal, DenoiserSource, DenoiserSpec, RecoveryConfig,
    RecoveryReport, SignalStrength, SpectralRecord,
};
use sindex::rng::derive_seed;
use sindex::{Error, LinkFunction};

use crate::config::{Config, ModelSection};
use crate::output::{median, quantile, OutDir};
use crate::CliError;

/// Model and data seeds of replicate `s`; shared by every grid cell so that
/// cells differ only in the swept parameter.
pub fn replicate_seeds(base: u64, s: usize) -> (u64, u64) {
    (derive_seed(base, 2 * s as u64), derive_seed(base, 2 * s as u64 + 1))
}

/// Parses a link expression; `file:<path>` loads a forged table.
fn parse_link(spec: &str) -> Result<LinkFunction, CliError> {
    match spec.strip_prefix("file:") {
        Some(path) => Ok(LinkFunction::Tabulated(Arc::new(LinkTable::load(Path::new(path))?))),
        None => Ok(LinkFunction::parse(spec)?),
    }
}

fn build_model(m: &ModelSection, seed: u64) -> Result<ModelSpec, CliError> {
    let spec = ModelSpec::new(m.d, parse_link(&m.link)?, NoiseChannel::parse(&m.noise)?, seed);
    spec.validate()?;
    Ok(spec)
}

fn deterministic_link(m: &ModelSection) -> Result<LinkFunction, CliError> {
    if !NoiseChannel::parse(&m.noise)?.is_deterministic() {
        return Err(CliError::Config("this command needs a deterministic channel".into()));
    }
    parse_link(&m.link)
}

/// Dataset for replicate `s`: the configured file, or a fresh sample with
/// its planted direction.
fn replicate_data(c: &Config, s: usize) -> Result<(Dataset, Option<Vec<f64>>, u64), CliError> {
    let (ms, ds) = replicate_seeds(c.run.seed, s);
    match &c.model.data {
        Some(path) => {
            if c.run.seeds > 1 {
                return Err(CliError::Config("a fixed dataset supports only one seed".into()));
            }
            Ok((Dataset::load(Path::new(path))?, None, ds))
        }
        None => {
            let model = build_model(&c.model, ms)?;
            Ok((sample_dataset(&model, c.model.n, ds)?, Some(model.direction()), ds))
        }
    }
}

#[derive(Serialize)]
struct SampleResult {
    d: usize,
    n: usize,
    digest: String,
    link: String,
    noise: String,
    label_mean: f64,
    label_sd: f64,
    w_star: Vec<f64>,
}

pub fn sample(c: &Config, out: &Path) -> Result<PathBuf, CliError> {
    let (ms, ds) = replicate_seeds(c.run.seed, 0);
    let model = build_model(&c.model, ms)?;
    let data = sample_dataset(&model, c.model.n, ds)?;
    let mut dir = OutDir::create(out)?;
    data.save(&dir.artifact("data.csv"))?;
    let mean = data.y.iter().sum::<f64>() / data.n as f64;
    let var = data.y.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / data.n as f64;
    let result = SampleResult {
        d: data.d,
        n: data.n,
        digest: data.digest.clone(),
        link: model.link.describe(),
        noise: model.noise.describe(),
        label_mean: mean,
        label_sd: var.sqrt(),
        w_star: model.direction(),
    };
    dir.write_report("sample", c, c.run.threads, &result)
}

#[derive(Serialize)]
struct ExponentResult {
    link: String,
    noise: String,
    /// `quadrature` for deterministic channels, `binned` otherwise.
    estimator: &'static str,
    samples: Option<usize>,
    profile: SpectralProfile,
    mutual_info: MutualInfo,
    /// Witness levels that could not be evaluated.
    skipped_levels: Vec<f64>,
}

/// Label levels spread over the range of `σ` on `[−4, 4]`.
fn label_levels(link: &LinkFunction, count: usize) -> Vec<f64> {
    let (lo, hi) = (0..=800)
        .map(|i| link.eval(-4.0 + i as f64 * 0.01))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    (0..count).map(|i| lo + (i as f64 + 0.5) * (hi - lo) / count as f64).collect()
}

fn witness_header(kmax: usize, first: &[&str]) -> Vec<String> {
    first.iter().map(|s| s.to_string()).chain((1..=kmax).map(|k| format!("zeta_{k}"))).collect()
}

pub fn exponent(c: &Config, out: &Path) -> Result<PathBuf, CliError> {
    let e = &c.exponent;
    let noise = NoiseChannel::parse(&c.model.noise)?;
    let link = parse_link(&c.model.link)?;
    let mut dir = OutDir::create(out)?;
    let mut table = csv::Writer::from_path(dir.artifact("zeta.csv"))?;
    let mut skipped_levels = Vec::new();
    let (profile, estimator, samples) = if noise.is_deterministic() {
        let profile = lambda_coeffs_quadrature(&link, e.kmax, &QuadratureOptions::default())?;
        let eval = ZetaEvaluator::new(&link)?;
        table.write_record(witness_header(e.kmax, &["y"]))?;
        let rows: Vec<(f64, Option<Vec<f64>>)> = label_levels(&link, e.levels)
            .into_par_iter()
            .map(|y| (y, (1..=e.kmax).map(|k| eval.zeta_lenient(k, y)).collect::<Result<Vec<_>, _>>().ok()))
            .collect();
        for (y, z) in rows {
            match z {
                Some(z) => table.serialize((y, z))?,
                None => skipped_levels.push(y),
            }
        }
        (profile, "quadrature", None)
    } else {
        let (ms, ds) = replicate_seeds(c.run.seed, 0);
        let scalar = ModelSpec::new(1, link.clone(), noise.clone(), ms).with_direction(vec![1.0]);
        let data = sample_dataset(&scalar, e.samples, ds)?;
        let pairs: Vec<(f64, f64)> = data.x.iter().copied().zip(data.y.iter().copied()).collect();
        let est = lambda_coeffs_binned(&pairs, e.kmax, e.bins, ds)?;
        table.write_record(witness_header(e.kmax, &["bin_upper", "bin_mass"]))?;
        for ((u, m), z) in est.bin_upper.iter().zip(&est.bin_mass).zip(&est.zeta) {
            table.serialize((u, m, z))?;
        }
        (est.profile(e.se_multiple), "binned", Some(e.samples))
    };
    table.flush()?;
    let result = ExponentResult {
        link: link.describe(),
        noise: noise.describe(),
        estimator,
        samples,
        mutual_info: chi2_mutual_info(&profile),
        profile,
        skipped_levels,
    };
    dir.write_report("exponent", c, c.run.threads, &result)
}

#[derive(Serialize)]
struct RecoverRun {
    replicate: usize,
    denoiser: String,
    report: RecoveryReport,
}

#[derive(Serialize)]
struct RecoverResult {
    k: usize,
    signal: Option<SignalStrength>,
    median_overlap: Option<f64>,
    runs: Vec<RecoverRun>,
}

/// Degree to use: configured, or the generative exponent of the link.
fn recovery_degree(c: &Config, link: &LinkFunction, deterministic: bool) -> Result<usize, CliError> {
    if let Some(k) = c.recover.k {
        return Ok(k);
    }
    if !deterministic {
        return Err(CliError::Config("recover.k is required for noisy channels".into()));
    }
    let p = lambda_coeffs_quadrature(link, sindex::agnostic::MAX_K, &QuadratureOptions::default())?;
    p.gen_exponent.ok_or(CliError::Library(Error::NoSignal { k: sindex::agnostic::MAX_K, lambda: 0.0 }))
}

pub fn recover(c: &Config, out: &Path) -> Result<PathBuf, CliError> {
    let r = &c.recover;
    let noise = NoiseChannel::parse(&c.model.noise)?;
    let link = parse_link(&c.model.link)?;
    let k = recovery_degree(c, &link, noise.is_deterministic())?;
    let known = if noise.is_deterministic() {
        let den = build_denoiser(DenoiserSource::Link(&link), k, r.c)?;
        let signal = denoised_signal(&den, &link, k)?;
        Some((den, signal))
    } else {
        None
    };
    let mut runs = Vec::with_capacity(c.run.seeds);
    for s in 0..c.run.seeds {
        let (data, w_star, ds) = replicate_data(c, s)?;
        let (den, train, signal): (DenoiserSpec, Dataset, Option<SignalStrength>) = match &known {
            Some((den, signal)) => (den.clone(), data, Some(*signal)),
            None => {
                let w = w_star
                    .as_ref()
                    .ok_or_else(|| CliError::Config("noisy recovery needs the planted direction".into()))?;
                let h = ((data.n as f64 * r.holdout).ceil() as usize).min(data.n - 1);
                let pairs: Vec<(f64, f64)> = data.projections(w).into_iter().zip(data.y[..h].iter().copied()).collect();
                let bins = (h / MIN_PER_BIN).clamp(1, default_bins(h));
                let est = lambda_coeffs_binned(&pairs, k, Some(bins), ds)?;
                let den =
                    build_denoiser(DenoiserSource::Binned { estimate: &est, se_multiple: r.se_multiple }, k, r.c)?;
                (den, data.slice(h, data.n)?, None)
            }
        };
        let t = den.transform_all(&train.y)?;
        let config = RecoveryConfig {
            seed: ds,
            power_rounds: r.power_rounds,
            w_star: w_star.clone(),
            signal,
            ..RecoveryConfig::default()
        };
        let report = algorithm1(&train, &t, k, &config)?;
        runs.push(RecoverRun { replicate: s, denoiser: den.describe(), report });
    }
    let overlaps: Vec<f64> = runs.iter().filter_map(|r| r.report.overlap).collect();
    let result = RecoverResult { k, signal: known.as_ref().map(|(_, s)| *s), median_overlap: median(&overlaps), runs };
    OutDir::create(out)?.write_report("recover", c, c.run.threads, &result)
}

#[derive(Serialize)]
struct AgnosticRun {
    replicate: usize,
    k_hat: Option<usize>,
    overlap: Option<f64>,
    /// Why the replicate produced no estimate.
    error: Option<String>,
    report: Option<AgnosticReport>,
}

#[derive(Serialize)]
struct AgnosticResult {
    median_overlap: Option<f64>,
    runs: Vec<AgnosticRun>,
}

/// Replicates that detect no exponent are recorded; the command fails only
/// when every replicate does.
pub fn agnostic(c: &Config, out: &Path) -> Result<PathBuf, CliError> {
    let a = &c.agnostic;
    let mut runs = Vec::with_capacity(c.run.seeds);
    let mut first_error = None;
    for s in 0..c.run.seeds {
        let (data, w_star, ds) = replicate_data(c, s)?;
        let mut config = AgnosticConfig::new(a.max_k, a.degree, ds);
        config.validation = a.validation;
        config.percentile = a.percentile;
        config.recovery.power_rounds = c.recover.power_rounds;
        config.recovery.w_star = w_star;
        match algorithm2(&data, &config) {
            Ok(report) => runs.push(AgnosticRun {
                replicate: s,
                k_hat: Some(report.k_hat),
                overlap: report.report.overlap,
                error: None,
                report: Some(report),
            }),
            Err(e @ Error::NoExponentDetected { .. }) => {
                runs.push(AgnosticRun {
                    replicate: s,
                    k_hat: None,
                    overlap: None,
                    error: Some(e.to_string()),
                    report: None,
                });
                first_error.get_or_insert(e);
            }
            Err(e) => return Err(e.into()),
        }
    }
    if runs.iter().all(|r| r.report.is_none()) {
        return Err(first_error.expect("at least one replicate ran").into());
    }
    let overlaps: Vec<f64> = runs.iter().filter_map(|r| r.overlap).collect();
    let result = AgnosticResult { median_overlap: median(&overlaps), runs };
    OutDir::create(out)?.write_report("agnostic", c, c.run.threads, &result)
}

#[derive(Serialize)]
struct ForgeResult {
    kstar: usize,
    tau: f64,
    tau_requested: f64,
    halvings: usize,
    conservation_drift: f64,
    top_degree_gap: f64,
    plateau_level: f64,
    plateau_mass: f64,
    verified: bool,
    profile: SpectralProfile,
}

pub fn forge(c: &Config, out: &Path) -> Result<PathBuf, CliError> {
    let f = &c.forge;
    let params = ForgeParams {
        tau: f.tau,
        eps: f.eps,
        seed: c.run.seed,
        steps: f.steps,
        samples_per_branch: f.samples_per_branch,
        verify: false,
    };
    let (table, profile) = forge_link(f.kstar, &params)?;
    let bundle = integrate_level_ode(&init_level_points(f.kstar, f.eps, c.run.seed)?, f.tau, f.tau / f.steps as f64)?;
    let k = f.kstar;
    let verified = profile.lambda[..k - 1].iter().all(|&l| l < VERIFY_BELOW) && profile.lambda[k - 1] > VERIFY_ABOVE;
    let mut dir = OutDir::create(out)?;
    table.save(&dir.artifact("link.csv"))?;
    let result = ForgeResult {
        kstar: k,
        tau: table.tau,
        tau_requested: table.tau_requested,
        halvings: bundle.halvings,
        conservation_drift: bundle.conservation_drift(),
        top_degree_gap: bundle.top_degree_gap(),
        plateau_level: table.plateau_level(),
        plateau_mass: table.plateau_mass(),
        verified,
        profile: profile.clone(),
    };
    let path = dir.write_report("forge", c, c.run.threads, &result)?;
    if f.verify && !verified {
        return Err(Error::Verification(format!("forged link for kstar={k} has lambda = {:?}", profile.lambda)).into());
    }
    Ok(path)
}

/// Denoiser from the configured deterministic link and its signal strength.
fn sweep_denoiser(c: &Config) -> Result<(LinkFunction, DenoiserSpec, SignalStrength), CliError> {
    let link = deterministic_link(&c.model)?;
    let den = build_denoiser(DenoiserSource::Link(&link), c.sweep.k, c.sweep.c)?;
    let signal = denoised_signal(&den, &link, c.sweep.k)?;
    Ok((link, den, signal))
}

#[derive(Debug, Clone, Serialize)]
pub struct BbpRow {
    d: usize,
    k: usize,
    delta: f64,
    delta_ratio: f64,
    n: usize,
    seeds: usize,
    top1: Option<f64>,
    top2: Option<f64>,
    top3: Option<f64>,
    top4: Option<f64>,
    top5: Option<f64>,
    bulk_edge: Option<f64>,
    overlap: Option<f64>,
    overlap_q1: Option<f64>,
    overlap_q3: Option<f64>,
    predicted_edge: f64,
    predicted_outlier: Option<f64>,
    predicted_overlap: Option<f64>,
    error: Option<String>,
}

#[derive(Serialize)]
struct SweepResult<R: Serialize> {
    signal: SignalStrength,
    delta_star: Option<f64>,
    rows: Vec<R>,
}

fn grid_error(what: &str) -> CliError {
    CliError::Config(format!("sweep grid `{what}` is empty"))
}

pub fn bbp_sweep(c: &Config, out: &Path) -> Result<PathBuf, CliError> {
    let s = &c.sweep;
    let k = s.k;
    let (link, den, signal) = sweep_denoiser(c)?;
    let delta_star = bbp_predictions(signal.beta, signal.ey2, k, 1.0, 1.0)?.delta_star;
    if s.d.is_empty() {
        return Err(grid_error("d"));
    }
    let mut deltas: Vec<f64> = s.delta.clone();
    if let Some(ds) = delta_star {
        deltas.extend(s.delta_ratio.iter().map(|r| r * ds));
    }
    if deltas.is_empty() {
        return Err(grid_error("delta"));
    }
    let cells: Vec<(usize, f64)> = s.d.iter().flat_map(|&d| deltas.iter().map(move |&x| (d, x))).collect();
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|i| (0..c.run.seeds).map(move |r| (i, r))).collect();
    let results: Vec<Result<SpectralRecord, Error>> = jobs
        .par_iter()
        .map(|&(i, r)| {
            let (d, delta) = cells[i];
            let n = (delta * (d as f64).powf(k as f64 / 2.0)).round() as usize;
            let (ms, ds) = replicate_seeds(c.run.seed, r);
            let model = ModelSpec::new(d, link.clone(), NoiseChannel::Deterministic, ms);
            let stream = ModelStream::new(&model, n, ds)?;
            let t = den.transform_all(&stream.labels())?;
            bbp_diagnostics(&stream, &t, k, Some(&model.direction()), Some(signal))
        })
        .collect();
    let mut rows = Vec::with_capacity(cells.len());
    for (i, &(d, delta)) in cells.iter().enumerate() {
        let n = (delta * (d as f64).powf(k as f64 / 2.0)).round() as usize;
        let cell: Vec<&Result<SpectralRecord, Error>> =
            results[i * c.run.seeds..(i + 1) * c.run.seeds].iter().collect();
        let ok: Vec<&SpectralRecord> = cell.iter().filter_map(|r| r.as_ref().ok()).collect();
        let error = cell.iter().find_map(|r| r.as_ref().err().map(|e| e.to_string()));
        let top =
            |j: usize| median(&ok.iter().filter_map(|r| r.top_eigenvalues.get(j).map(|v| v.abs())).collect::<Vec<_>>());
        let overlaps: Vec<f64> = ok.iter().filter_map(|r| r.measured_overlap).collect();
        let pred = bbp_predictions(signal.beta, signal.ey2, k, d as f64, n.max(1) as f64)?;
        rows.push(BbpRow {
            d,
            k,
            delta,
            delta_ratio: delta_star.map_or(f64::NAN, |ds| delta / ds),
            n,
            seeds: ok.len(),
            top1: top(0),
            top2: top(1),
            top3: top(2),
            top4: top(3),
            top5: top(4),
            bulk_edge: median(&ok.iter().map(|r| r.bulk_edge).collect::<Vec<_>>()),
            overlap: median(&overlaps),
            overlap_q1: quantile(&overlaps, 0.25),
            overlap_q3: quantile(&overlaps, 0.75),
            predicted_edge: pred.edge,
            predicted_outlier: pred.outlier,
            predicted_overlap: pred.overlap,
            error,
        });
    }
    let mut dir = OutDir::create(out)?;
    dir.write_rows("bbp.csv", &rows)?;
    dir.write_report("bbp-sweep", c, c.run.threads, &SweepResult { signal, delta_star, rows })
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseRow {
    d: usize,
    k: usize,
    n: usize,
    n_mult: f64,
    seeds: usize,
    median: Option<f64>,
    q1: Option<f64>,
    q3: Option<f64>,
    failures: usize,
    error: Option<String>,
}

pub fn phase_sweep(c: &Config, out: &Path) -> Result<PathBuf, CliError> {
    let s = &c.sweep;
    let k = s.k;
    let (link, den, signal) = sweep_denoiser(c)?;
    if s.d.is_empty() {
        return Err(grid_error("d"));
    }
    if s.n.is_empty() && s.n_mult.is_empty() {
        return Err(grid_error("n"));
    }
    let scale = |d: usize| (d as f64).powf(k as f64 / 2.0);
    let cells: Vec<(usize, usize)> =
        s.d.iter()
            .flat_map(|&d| {
                s.n.iter()
                    .copied()
                    .chain(s.n_mult.iter().map(move |m| (m * scale(d)).round() as usize))
                    .map(move |n| (d, n))
            })
            .collect();
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|i| (0..c.run.seeds).map(move |r| (i, r))).collect();
    let results: Vec<Result<f64, Error>> = jobs
        .par_iter()
        .map(|&(i, r)| {
            let (d, n) = cells[i];
            let (ms, ds) = replicate_seeds(c.run.seed, r);
            let model = ModelSpec::new(d, link.clone(), NoiseChannel::Deterministic, ms);
            let data = sample_dataset(&model, n.max(1), ds)?;
            let t = den.transform_all(&data.y)?;
            let config = RecoveryConfig { seed: ds, w_star: Some(model.direction()), ..RecoveryConfig::default() };
            Ok(algorithm1(&data, &t, k, &config)?.overlap.unwrap_or(f64::NAN))
        })
        .collect();
    let rows: Vec<PhaseRow> = cells
        .iter()
        .enumerate()
        .map(|(i, &(d, n))| {
            let cell = &results[i * c.run.seeds..(i + 1) * c.run.seeds];
            let ok: Vec<f64> = cell.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
            PhaseRow {
                d,
                k,
                n,
                n_mult: n as f64 / scale(d),
                seeds: ok.len(),
                median: median(&ok),
                q1: quantile(&ok, 0.25),
                q3: quantile(&ok, 0.75),
                failures: cell.len() - ok.len(),
                error: cell.iter().find_map(|r| r.as_ref().err().map(|e| e.to_string())),
            }
        })
        .collect();
    let delta_star =
        if k >= 4 && k.is_multiple_of(2) { bbp_predictions(signal.beta, signal.ey2, k, 1.0, 1.0)?.delta_star } else { None };
    let mut dir = OutDir::create(out)?;
    dir.write_rows("phase.csv", &rows)?;
    dir.write_report("phase-sweep", c, c.run.threads, &SweepResult { signal, delta_star, rows })
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsRow {
    kstar: usize,
    lambda: f64,
    d: f64,
    delta: f64,
    n: f64,
    degree: usize,
    r: f64,
    ld_exact: Option<f64>,
    ld_asymptotic: f64,
    strong_detection_n: f64,
    sq_queries: Option<f64>,
    in_regime: bool,
}

#[derive(Serialize)]
struct BoundsResult {
    /// Low-degree norms never decrease along the `δ` grid.
    monotone_in_delta: bool,
    rows: Vec<BoundsRow>,
}

pub fn bounds(c: &Config, out: &Path) -> Result<PathBuf, CliError> {
    let b = &c.bounds;
    for (name, empty) in [
        ("lambda", b.lambda.is_empty()),
        ("d", b.d.is_empty()),
        ("delta", b.delta.is_empty()),
        ("degree", b.degree.is_empty()),
        ("r", b.r.is_empty()),
    ] {
        if empty {
            return Err(CliError::Config(format!("bounds grid `{name}` is empty")));
        }
    }
    let mut rows = Vec::new();
    for &lambda in &b.lambda {
        for &d in &b.d {
            for &degree in &b.degree {
                for &r in &b.r {
                    for &delta in &b.delta {
                        let q = BoundsQuery { r, ..BoundsQuery::at_delta(lambda, b.kstar, d, delta, degree) };
                        rows.push(BoundsRow {
                            kstar: b.kstar,
                            lambda,
                            d,
                            delta,
                            n: q.n,
                            degree,
                            r,
                            ld_exact: ld_norm_exact(&q).ok(),
                            ld_asymptotic: ld_norm_asymptotic(&q)?,
                            strong_detection_n: strong_detection_samples(d, b.kstar, degree),
                            sq_queries: sq_bound(&q, b.c_k).ok(),
                            in_regime: q.in_regime(),
                        });
                    }
                }
            }
        }
    }
    let mut sorted = b.delta.clone();
    sorted.sort_by(f64::total_cmp);
    let ascending = sorted == b.delta;
    let monotone_in_delta = ascending
        && rows.chunks(b.delta.len()).all(|chunk| {
            chunk.windows(2).all(|w| {
                w[1].ld_asymptotic >= w[0].ld_asymptotic
                    && match (w[0].ld_exact, w[1].ld_exact) {
                        (Some(a), Some(b)) => b >= a,
                        _ => true,
                    }
            })
        });
    let mut dir = OutDir::create(out)?;
    dir.write_rows("bounds.csv", &rows)?;
    dir.write_report("bounds", c, c.run.threads, &BoundsResult { monotone_in_delta, rows })
}
