//! Recovery without knowledge of the label law or its exponent.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hermite::{eval_hermite, HermiteKind};
use crate::model::Dataset;
use crate::recovery::{algorithm1, DenoiserSpec, RecoveryConfig, RecoveryReport};
use crate::rng::{stream, Domain};
use crate::tensor::{dot, norm, normalize};

/// Default percentile of `|Ψ|` used for both truncation radii.
pub const DEFAULT_PERCENTILE: f64 = 0.995;
/// Largest exponent tried by [`algorithm2`].
pub const MAX_K: usize = 8;

/// Polynomial in the standardized label `u = (y − shift)/scale`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelPolynomial {
    pub shift: f64,
    pub scale: f64,
    /// Monomial coefficients in `u`, constant term first.
    pub coeffs: Vec<f64>,
}

impl LabelPolynomial {
    pub fn eval(&self, y: f64) -> f64 {
        let u = (y - self.shift) / self.scale;
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * u + c)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }
}

/// `φ_1..φ_M`, orthonormal for the empirical label measure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalBasis {
    /// `phi[l−1]` is `φ_l`.
    pub phi: Vec<LabelPolynomial>,
    /// Requested degree when rank deficiency forced a smaller one.
    pub reduced_from: Option<usize>,
}

impl EmpiricalBasis {
    pub fn degree(&self) -> usize {
        self.phi.len()
    }

    /// Empirical Gram matrix `⟨φ_i, φ_j⟩` on `ys`.
    pub fn gram(&self, ys: &[f64]) -> Vec<Vec<f64>> {
        let vals: Vec<Vec<f64>> = self.phi.iter().map(|p| ys.iter().map(|&y| p.eval(y)).collect()).collect();
        let n = ys.len() as f64;
        vals.iter().map(|a| vals.iter().map(|b| dot(a, b) / n).collect()).collect()
    }
}

/// Modified Gram-Schmidt on `1, u, …, u^M` under the empirical inner
/// product of `ys`; the constant is dropped from the result.
pub fn empirical_orthobasis(ys: &[f64], m: usize) -> Result<EmpiricalBasis> {
    if m == 0 {
        return Err(Error::invalid("basis degree must be >= 1"));
    }
    let n = ys.len();
    if n < 50 * m {
        return Err(Error::InsufficientSamples(format!("{n} labels for degree {m} (need {})", 50 * m)));
    }
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::invalid("labels must be finite"));
    }
    let mut sorted = ys.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    sorted.dedup();
    let distinct = sorted.len();
    if distinct < 2 {
        return Err(Error::RankDeficient { distinct, degree: m, needed: m + 1 });
    }
    let degree = m.min(distinct - 1);

    let nf = n as f64;
    let shift = ys.iter().sum::<f64>() / nf;
    let scale = (ys.iter().map(|y| (y - shift).powi(2)).sum::<f64>() / nf).sqrt();
    let u: Vec<f64> = ys.iter().map(|y| (y - shift) / scale).collect();
    let inner = |a: &[f64], b: &[f64]| dot(a, b) / nf;

    let mut vals: Vec<Vec<f64>> = Vec::with_capacity(degree + 1);
    let mut coefs: Vec<Vec<f64>> = Vec::with_capacity(degree + 1);
    let mut power = vec![1.0; n];
    for l in 0..=degree {
        let mut v = power.clone();
        let mut c = vec![0.0; degree + 1];
        c[l] = 1.0;
        let start = inner(&v, &v).sqrt();
        for _ in 0..2 {
            for (pv, pc) in vals.iter().zip(&coefs) {
                let proj = inner(&v, pv);
                v.iter_mut().zip(pv).for_each(|(a, b)| *a -= proj * b);
                c.iter_mut().zip(pc).for_each(|(a, b)| *a -= proj * b);
            }
        }
        let nv = inner(&v, &v).sqrt();
        if !(nv > 1e-10 * start.max(1.0)) {
            return Err(Error::RankDeficient { distinct, degree: m, needed: m + 1 });
        }
        v.iter_mut().for_each(|a| *a /= nv);
        c.iter_mut().for_each(|a| *a /= nv);
        vals.push(v);
        coefs.push(c);
        power.iter_mut().zip(&u).for_each(|(p, ui)| *p *= ui);
    }
    let phi = coefs.into_iter().skip(1).map(|coeffs| LabelPolynomial { shift, scale, coeffs }).collect();
    Ok(EmpiricalBasis { phi, reduced_from: (degree < m).then_some(m) })
}

/// `Ψ = Σ θ_l φ_l` for `θ` uniform on the unit sphere.
pub fn random_label_poly(basis: &EmpiricalBasis, seed: u64) -> LabelPolynomial {
    let m = basis.degree();
    let mut rng = stream(seed, Domain::Theta, m as u64);
    let theta = loop {
        let mut t: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
        if normalize(&mut t) > 1e-12 {
            break t;
        }
    };
    let first = &basis.phi[0];
    let mut coeffs = vec![0.0; first.coeffs.len()];
    for (p, th) in basis.phi.iter().zip(&theta) {
        coeffs.iter_mut().zip(&p.coeffs).for_each(|(c, pc)| *c += th * pc);
    }
    LabelPolynomial { shift: first.shift, scale: first.scale, coeffs }
}

/// Truncated random-polynomial denoiser `Ψ 1{|Ψ| ≤ R} / R`.
pub fn random_poly_denoiser(basis: &EmpiricalBasis, seed: u64, radius: f64) -> Result<DenoiserSpec> {
    if !(radius > 0.0) {
        return Err(Error::invalid("truncation radius must be positive"));
    }
    Ok(DenoiserSpec::RandomPoly { poly: random_label_poly(basis, seed), radius })
}

/// Empirical `q`-quantile of `|Ψ(y)|`.
pub fn abs_percentile(poly: &LabelPolynomial, ys: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = ys.iter().map(|&y| poly.eval(y).abs()).collect();
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let idx = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    v[idx]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GoodnessOfFit {
    pub value: f64,
    /// Standard error of the mean.
    pub se: f64,
}

/// `F_k = (1/L) Σ Ψ(y_l) h_k(x_l·ŵ) 1{|Ψ(y_l)| ≤ R̃}` on validation data.
pub fn goodness_of_fit(
    val: &Dataset,
    psi: &LabelPolynomial,
    k: usize,
    w_hat: &[f64],
    r_tilde: f64,
) -> Result<GoodnessOfFit> {
    if val.n == 0 {
        return Err(Error::InsufficientSamples("empty validation set".into()));
    }
    if (norm(w_hat) - 1.0).abs() > 1e-8 || w_hat.len() != val.d {
        return Err(Error::invalid("w_hat must be a unit vector of the data dimension"));
    }
    let terms: Vec<f64> = (0..val.n)
        .map(|i| {
            let p = psi.eval(val.y[i]);
            if p.abs() <= r_tilde {
                p * eval_hermite(HermiteKind::Normalized, k, dot(val.row(i), w_hat))
            } else {
                0.0
            }
        })
        .collect();
    let l = val.n as f64;
    let mean = terms.iter().sum::<f64>() / l;
    let var = if val.n > 1 { terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (l - 1.0) } else { 0.0 };
    Ok(GoodnessOfFit { value: mean, se: (var / l).sqrt() })
}

#[derive(Debug, Clone)]
pub struct AgnosticConfig {
    /// Largest exponent tried, `K ≤ 8`.
    pub max_k: usize,
    /// Basis degree `M ≥ K`.
    pub degree: usize,
    /// Validation size; defaults to `max(n/10, min(10⁴, n/2))`.
    pub validation: Option<usize>,
    pub seed: u64,
    /// Percentile rule for `R` and `R̃`.
    pub percentile: f64,
    pub radius: Option<f64>,
    pub radius_tilde: Option<f64>,
    pub recovery: RecoveryConfig,
}

impl AgnosticConfig {
    pub fn new(max_k: usize, degree: usize, seed: u64) -> Self {
        Self {
            max_k,
            degree,
            validation: None,
            seed,
            percentile: DEFAULT_PERCENTILE,
            radius: None,
            radius_tilde: None,
            recovery: RecoveryConfig { seed, ..RecoveryConfig::default() },
        }
    }
}

pub fn default_validation_size(n: usize) -> usize {
    (n / 10).max(10_000.min(n / 2))
}

/// Outcome of one candidate exponent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateFit {
    pub k: usize,
    pub fit: Option<GoodnessOfFit>,
    pub overlap: Option<f64>,
    /// Why the candidate produced no estimate, if it failed.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgnosticReport {
    pub k_hat: usize,
    pub report: RecoveryReport,
    pub candidates: Vec<CandidateFit>,
    pub train: (usize, usize),
    pub validation: (usize, usize),
    pub degree: usize,
    pub radius: f64,
    pub radius_tilde: f64,
    pub psi: LabelPolynomial,
}

/// Tries every `k ≤ K` with one random label polynomial and keeps the
/// direction that best fits held-out data; ties go to the smaller `k`.
pub fn algorithm2(data: &Dataset, config: &AgnosticConfig) -> Result<AgnosticReport> {
    let (n, kmax) = (data.n, config.max_k);
    if kmax == 0 || kmax > MAX_K {
        return Err(Error::invalid(format!("K must be in 1..={MAX_K}")));
    }
    if config.degree < kmax {
        return Err(Error::invalid(format!("basis degree M = {} must be >= K = {kmax}", config.degree)));
    }
    let l = config.validation.unwrap_or_else(|| default_validation_size(n));
    if l == 0 || l >= n {
        return Err(Error::Sizing(format!("validation size {l} must be in 1..{n}")));
    }
    let train = data.slice(0, n - l)?;
    let val = data.slice(n - l, n)?;

    let basis = empirical_orthobasis(&train.y, config.degree)?;
    let psi = random_label_poly(&basis, config.seed);
    let radius = config.radius.unwrap_or_else(|| abs_percentile(&psi, &train.y, config.percentile));
    let radius_tilde = config.radius_tilde.unwrap_or_else(|| abs_percentile(&psi, &train.y, config.percentile));
    let denoiser = DenoiserSpec::RandomPoly { poly: psi.clone(), radius };
    let t = denoiser.transform_all(&train.y)?;

    let runs: Vec<(CandidateFit, Option<RecoveryReport>)> = (1..=kmax)
        .into_par_iter()
        .map(|k| match algorithm1(&train, &t, k, &config.recovery) {
            Ok(rep) => match goodness_of_fit(&val, &psi, k, &rep.w_hat, radius_tilde) {
                Ok(fit) => (CandidateFit { k, fit: Some(fit), overlap: rep.overlap, error: None }, Some(rep)),
                Err(e) => (CandidateFit { k, fit: None, overlap: rep.overlap, error: Some(e.to_string()) }, None),
            },
            Err(e) => (CandidateFit { k, fit: None, overlap: None, error: Some(e.to_string()) }, None),
        })
        .collect();

    let score = |i: usize| runs[i].0.fit.map_or(-1.0, |f| f.value.abs());
    let significant = runs.iter().any(|(c, _)| c.fit.is_some_and(|f| f.value.abs() > 3.0 * f.se));
    let best = significant.then(|| (0..runs.len()).fold(0, |b, i| if score(i) > score(b) { i } else { b }));
    let b = best.ok_or(Error::NoExponentDetected { max_k: kmax })?;
    let candidates: Vec<CandidateFit> = runs.iter().map(|(c, _)| c.clone()).collect();
    let report = runs.into_iter().nth(b).and_then(|(_, r)| r).expect("selected candidate has a report");
    Ok(AgnosticReport {
        k_hat: b + 1,
        report,
        candidates,
        train: (0, n - l),
        validation: (n - l, n),
        degree: basis.degree(),
        radius,
        radius_tilde,
        psi,
    })
}
