//! Partial-trace recovery of the planted direction.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::agnostic::LabelPolynomial;
use crate::bounds::{bbp_predictions, BbpPrediction};
use crate::error::{Error, Result};
use crate::exponent::{lambda_coeffs_quadrature, BinnedEstimate, QuadratureOptions, ZetaEvaluator, DEFAULT_TOL};
use crate::hermite::{chi2_poly, eval_hermite, gaussian_pdf, ln_factorial, HermiteKind};
use crate::lanczos::top_eigvec_abs;
use crate::link::LinkFunction;
use crate::model::{Dataset, SampleSource};
use crate::quad::GaussLegendre;
use crate::tensor::{chunked_row_sum, dot, normalize, power_step_contract, PartialTraceAccum, CHUNK_ROWS};

/// Default denoiser constant `C` in `R = C log(3/λ_k)^{k/2}`.
pub const DEFAULT_DENOISER_C: f64 = 3.0;
/// Iterates with norm below this are treated as lost.
pub const SIGNAL_FLOOR: f64 = 1e-14;
/// Net-size guard for [`exhaustive_oracle`].
pub const NET_GUARD: f64 = 1e7;

/// Bounded label transform `T(y) = g(y) 1{|g(y)| ≤ R} / R`.
#[derive(Debug, Clone)]
pub enum DenoiserSpec {
    /// `g = ζ_k` of a deterministic link.
    ZetaTruncated { link: LinkFunction, k: usize, radius: f64 },
    /// `g` piecewise constant on label bins (`upper` ascending).
    Table { upper: Vec<f64>, values: Vec<f64>, radius: f64 },
    /// `g = Ψ`, a polynomial in the label.
    RandomPoly { poly: LabelPolynomial, radius: f64 },
}

impl DenoiserSpec {
    pub fn radius(&self) -> f64 {
        match self {
            DenoiserSpec::ZetaTruncated { radius, .. }
            | DenoiserSpec::Table { radius, .. }
            | DenoiserSpec::RandomPoly { radius, .. } => *radius,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            DenoiserSpec::ZetaTruncated { link, k, radius } => {
                format!("zeta-truncated(link={}, k={k}, R={radius})", link.describe())
            }
            DenoiserSpec::Table { values, radius, .. } => {
                format!("table(bins={}, R={radius})", values.len())
            }
            DenoiserSpec::RandomPoly { poly, radius } => {
                format!("random-poly(M={}, R={radius})", poly.degree())
            }
        }
    }

    fn truncate(&self, g: f64) -> f64 {
        let r = self.radius();
        if g.abs() <= r {
            g / r
        } else {
            0.0
        }
    }

    /// `T(y_i)` for a batch of labels.
    pub fn transform_all(&self, ys: &[f64]) -> Result<Vec<f64>> {
        match self {
            DenoiserSpec::ZetaTruncated { link, k, .. } => {
                let ev = ZetaEvaluator::new(link)?;
                ys.par_iter().map(|&y| Ok(self.truncate(ev.zeta_lenient(*k, y)?))).collect()
            }
            DenoiserSpec::Table { upper, values, .. } => Ok(ys
                .iter()
                .map(|&y| {
                    let b = upper.partition_point(|&u| u < y).min(values.len() - 1);
                    self.truncate(values[b])
                })
                .collect()),
            DenoiserSpec::RandomPoly { poly, .. } => Ok(ys.iter().map(|&y| self.truncate(poly.eval(y))).collect()),
        }
    }

    pub fn transform(&self, y: f64) -> Result<f64> {
        Ok(self.transform_all(&[y])?[0])
    }
}

/// What the denoiser is built from.
pub enum DenoiserSource<'a> {
    Link(&'a LinkFunction),
    /// Binned `ζ̂` estimates from a held-out split; the bin is used only
    /// when `λ̂_k²` exceeds `se_multiple` standard errors.
    Binned {
        estimate: &'a BinnedEstimate,
        se_multiple: f64,
    },
}

/// `R = C · log(3/λ_k)^{k/2}`.
pub fn denoiser_radius(lambda: f64, k: usize, c: f64) -> f64 {
    c * (3.0 / lambda).ln().powf(k as f64 / 2.0)
}

/// Truncated `ζ_k` denoiser; refuses when `λ_k` shows no signal.
pub fn build_denoiser(source: DenoiserSource<'_>, k: usize, c: f64) -> Result<DenoiserSpec> {
    if k == 0 || !(c > 0.0) {
        return Err(Error::invalid("denoiser needs k >= 1 and C > 0"));
    }
    match source {
        DenoiserSource::Link(link) => {
            let p = lambda_coeffs_quadrature(link, k, &QuadratureOptions::default())?;
            let lambda = p.lambda[k - 1];
            if lambda <= DEFAULT_TOL {
                return Err(Error::NoSignal { k, lambda });
            }
            Ok(DenoiserSpec::ZetaTruncated { link: link.clone(), k, radius: denoiser_radius(lambda, k, c) })
        }
        DenoiserSource::Binned { estimate, se_multiple } => {
            if k > estimate.kmax {
                return Err(Error::invalid(format!("binned estimate only covers k <= {}", estimate.kmax)));
            }
            let lsq = estimate.lambda_sq[k - 1];
            if lsq <= se_multiple * estimate.lambda_sq_se[k - 1] || lsq <= 0.0 {
                return Err(Error::NoSignal { k, lambda: lsq.max(0.0).sqrt() });
            }
            let lambda = lsq.sqrt().min(1.0);
            Ok(DenoiserSpec::Table {
                upper: estimate.bin_upper.clone(),
                values: estimate.zeta.iter().map(|z| z[k - 1]).collect(),
                radius: denoiser_radius(lambda, k, c),
            })
        }
    }
}

/// `β = E[T(Y) h_k(Z)]` and `E[T(Y)²]` of a transformed model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignalStrength {
    pub beta: f64,
    pub ey2: f64,
}

/// Signal strength of `T ∘ σ` for a deterministic link, by composite
/// Gauss-Legendre over `[−8, 8]` with panels of width 1/16.
pub fn denoised_signal(denoiser: &DenoiserSpec, link: &LinkFunction, k: usize) -> Result<SignalStrength> {
    let rule = GaussLegendre::new(20);
    let panels = 256;
    let mut zs = Vec::with_capacity(panels * 20);
    let mut ws = Vec::with_capacity(panels * 20);
    for p in 0..panels {
        let a = -8.0 + 16.0 * p as f64 / panels as f64;
        for (z, w) in rule.mapped(a, a + 16.0 / panels as f64) {
            zs.push(z);
            ws.push(w * gaussian_pdf(z));
        }
    }
    let ys: Vec<f64> = zs.iter().map(|&z| link.eval(z)).collect();
    let ts = denoiser.transform_all(&ys)?;
    let mut s = SignalStrength { beta: 0.0, ey2: 0.0 };
    for i in 0..zs.len() {
        s.beta += ws[i] * ts[i] * eval_hermite(HermiteKind::Normalized, k, zs[i]);
        s.ey2 += ws[i] * ts[i] * ts[i];
    }
    Ok(s)
}

#[derive(Debug, Clone)]
pub struct RecoveryConfig {
    pub seed: u64,
    pub lanczos_iters: usize,
    pub lanczos_tol: f64,
    /// Power rounds for odd `k ≥ 3`; defaults to `⌈log₂ d⌉`.
    pub power_rounds: Option<usize>,
    /// Planted direction, when known, for overlap reporting.
    pub w_star: Option<Vec<f64>>,
    /// Population signal strength, when known, for spectral predictions.
    pub signal: Option<SignalStrength>,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self { seed: 0, lanczos_iters: 200, lanczos_tol: 1e-10, power_rounds: None, w_star: None, signal: None }
    }
}

/// A contiguous block of samples consumed by one stage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRecord {
    pub name: String,
    pub start: usize,
    pub end: usize,
    /// Overlap of the iterate after this stage, when `w⋆` is known.
    pub overlap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralRecord {
    /// Largest eigenvalues by magnitude, descending in magnitude.
    pub top_eigenvalues: Vec<f64>,
    pub bulk_edge: f64,
    pub n: usize,
    pub delta: f64,
    pub prediction: Option<BbpPrediction>,
    pub measured_overlap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub k: usize,
    pub d: usize,
    pub n: usize,
    pub w_hat: Vec<f64>,
    pub overlap: Option<f64>,
    pub stages: Vec<StageRecord>,
    pub spectral: Option<SpectralRecord>,
}

impl RecoveryReport {
    /// Samples consumed across all stages.
    pub fn samples_used(&self) -> usize {
        self.stages.iter().map(|s| s.end - s.start).sum()
    }
}

/// `(w·w⋆)²`.
pub fn overlap(w: &[f64], w_star: &[f64]) -> f64 {
    let c = dot(w, w_star);
    (c * c).clamp(0.0, 1.0)
}

fn hermite_scale(k: usize) -> f64 {
    (-0.5 * ln_factorial(k)).exp()
}

/// `(1/m) Σ t_i h_k(x_i)[v^{⊗(k−1)}]` over rows `lo..hi`.
fn power_round(data: &Dataset, t: &[f64], lo: usize, hi: usize, v: &[f64], k: usize) -> Result<Vec<f64>> {
    let d = data.d;
    let rows = &data.x[lo * d..hi * d];
    let labels = &t[lo..hi];
    let scale = hermite_scale(k) / (hi - lo) as f64;
    let mut out = if k == 1 {
        chunked_row_sum(rows, d, |i, x, acc| acc.iter_mut().zip(x).for_each(|(a, xi)| *a += labels[i] * xi))
    } else {
        chunked_row_sum(rows, d, |i, x, acc| {
            let g = power_step_contract(x, v, k).expect("unit iterate");
            acc.iter_mut().zip(&g).for_each(|(a, gi)| *a += labels[i] * gi);
        })
    };
    out.iter_mut().for_each(|o| *o *= scale);
    Ok(out)
}

/// Stage boundaries of the schedule; errors when a stage would be empty.
fn schedule(n: usize, k: usize, rounds: usize) -> Result<Vec<(String, usize, usize)>> {
    let mut stages = vec![("warm-start".to_string(), 0, n / 2)];
    let mut next = n / 2;
    if k % 2 == 1 && k >= 3 {
        for i in 1..=rounds {
            let m = n >> (i + 2);
            stages.push((format!("power-{i}"), next, next + m));
            next += m;
        }
    }
    stages.push(("final".to_string(), next, next + n / 4));
    if let Some((name, a, b)) = stages.iter().find(|(_, a, b)| b <= a) {
        return Err(Error::Sizing(format!("stage `{name}` gets no samples ({a}..{b}) with n = {n}")));
    }
    Ok(stages)
}

/// Warm start by partial trace, then tensor power iteration, each stage on
/// fresh samples. `t` holds the already-transformed labels `T(y_i)`.
pub fn algorithm1(data: &Dataset, t: &[f64], k: usize, config: &RecoveryConfig) -> Result<RecoveryReport> {
    let (n, d) = (data.n, data.d);
    if k == 0 {
        return Err(Error::invalid("degree k must be >= 1"));
    }
    if t.len() != n {
        return Err(Error::invalid("transformed labels must match the sample count"));
    }
    if n < 4 * (k + 2) || n < d {
        return Err(Error::Sizing(format!("n = {n} below max(4(k+2), d) = {}", (4 * (k + 2)).max(d))));
    }
    let rounds = config.power_rounds.unwrap_or_else(|| (d as f64).log2().ceil().max(0.0) as usize);
    let plan = schedule(n, k, rounds)?;
    let overlap_of = |v: &[f64]| config.w_star.as_deref().map(|w| overlap(v, w));
    let lost = |stage: &str, norm: f64| Error::SignalLost { stage: stage.to_string(), norm };

    let (_, lo, hi) = plan[0].clone();
    let mut spectral = None;
    let mut v = if k.is_multiple_of(2) {
        let acc = PartialTraceAccum::hermite(d, &data.x[lo * d..hi * d], &t[lo..hi], k)?;
        let eig = top_eigvec_abs(&acc, config.lanczos_iters, config.lanczos_tol, config.seed)?;
        if eig.value.abs() < SIGNAL_FLOOR {
            return Err(lost("warm-start", eig.value.abs()));
        }
        let m = hi - lo;
        let prediction = match (&config.signal, k >= 4) {
            (Some(s), true) => Some(bbp_predictions(s.beta, s.ey2, k, d as f64, m as f64)?),
            _ => None,
        };
        spectral = Some(SpectralRecord {
            top_eigenvalues: vec![eig.value],
            bulk_edge: eig.bulk_edge(),
            n: m,
            delta: m as f64 / (d as f64).powf(k as f64 / 2.0),
            prediction,
            measured_overlap: overlap_of(&eig.vector),
        });
        eig.vector
    } else {
        let rows = &data.x[lo * d..hi * d];
        let labels = &t[lo..hi];
        let j = (k - 1) / 2;
        let mut v = chunked_row_sum(rows, d, |i, x, acc| {
            let c = labels[i] * chi2_poly(j, d + 2, dot(x, x));
            acc.iter_mut().zip(x).for_each(|(a, xi)| *a += c * xi);
        });
        let norm = normalize(&mut v);
        if !(norm >= SIGNAL_FLOOR * (hi - lo) as f64) {
            return Err(lost("warm-start", norm / (hi - lo) as f64));
        }
        v
    };
    let mut stages = vec![StageRecord { name: plan[0].0.clone(), start: lo, end: hi, overlap: overlap_of(&v) }];

    for (name, lo, hi) in plan.into_iter().skip(1) {
        let mut next = power_round(data, t, lo, hi, &v, k)?;
        let norm = normalize(&mut next);
        if !(norm >= SIGNAL_FLOOR) {
            return Err(lost(&name, norm));
        }
        v = next;
        stages.push(StageRecord { name, start: lo, end: hi, overlap: overlap_of(&v) });
    }
    Ok(RecoveryReport { k, d, n, overlap: overlap_of(&v), w_hat: v, stages, spectral })
}

/// Chunks of rows accumulated per parallel batch in [`partial_trace_matrix`].
const BATCH_CHUNKS: usize = 8;

/// Dense `M_n = (1/n) Σ t_i h_k(x_i)[I^{⊗(k−2)/2}]`, even `k`. Rows are pulled
/// from `source` one chunk at a time; the summation order is fixed.
pub fn partial_trace_matrix<S: SampleSource + ?Sized>(source: &S, t: &[f64], k: usize) -> Result<DMatrix<f64>> {
    let (n, d) = (source.len(), source.dim());
    if k < 2 || k % 2 == 1 {
        return Err(Error::invalid(format!("partial-trace matrix needs even k >= 2, got {k}")));
    }
    if n == 0 || t.len() != n {
        return Err(Error::invalid("partial-trace matrix: labels must match a non-empty sample"));
    }
    let scale = hermite_scale(k);
    let j = (k - 2) / 2;
    let chunks = n.div_ceil(CHUNK_ROWS);
    let mut m = DMatrix::<f64>::zeros(d, d);
    let mut shift = 0.0;
    for batch in (0..chunks).collect::<Vec<_>>().chunks(BATCH_CHUNKS) {
        let parts: Vec<(DMatrix<f64>, f64)> = batch
            .par_iter()
            .map(|&c| {
                let lo = c * CHUNK_ROWS;
                let hi = (lo + CHUNK_ROWS).min(n);
                let mut x = DMatrix::<f64>::zeros(hi - lo, d);
                let mut xw = DMatrix::<f64>::zeros(hi - lo, d);
                let mut row = vec![0.0; d];
                let mut s = 0.0;
                for i in lo..hi {
                    source.fill(i, &mut row);
                    let r = dot(&row, &row);
                    let a = t[i] * scale * chi2_poly(j, d + 4, r);
                    s += t[i] * scale * chi2_poly(j, d + 2, r);
                    for p in 0..d {
                        x[(i - lo, p)] = row[p];
                        xw[(i - lo, p)] = a * row[p];
                    }
                }
                (x.transpose() * xw, s)
            })
            .collect();
        for (p, s) in parts {
            m += p;
            shift += s;
        }
    }
    let inv = 1.0 / n as f64;
    m *= inv;
    for p in 0..d {
        m[(p, p)] -= shift * inv;
    }
    // symmetrize away rounding asymmetry
    let mt = m.transpose();
    Ok((m + mt) * 0.5)
}

/// Spectrum of `M_n` built on all samples, with spiked-Wigner predictions.
pub fn bbp_diagnostics<S: SampleSource + ?Sized>(
    source: &S,
    t: &[f64],
    k: usize,
    w_star: Option<&[f64]>,
    signal: Option<SignalStrength>,
) -> Result<SpectralRecord> {
    if k % 2 == 1 || k < 4 {
        return Err(Error::invalid(format!("BBP diagnostics need even k >= 4, got {k}")));
    }
    let (n, d) = (source.len(), source.dim());
    let m = partial_trace_matrix(source, t, k)?;
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].abs().total_cmp(&eig.eigenvalues[a].abs()));
    let top_eigenvalues: Vec<f64> = order.iter().take(5).map(|&i| eig.eigenvalues[i]).collect();
    let bulk_edge = order.get(1).map(|&i| eig.eigenvalues[i].abs()).unwrap_or(0.0);
    let measured_overlap = w_star.map(|w| {
        let v: Vec<f64> = eig.eigenvectors.column(order[0]).iter().copied().collect();
        overlap(&v, w)
    });
    let prediction = signal.map(|s| bbp_predictions(s.beta, s.ey2, k, d as f64, n as f64)).transpose()?;
    Ok(SpectralRecord {
        top_eigenvalues,
        bulk_edge,
        n,
        delta: n as f64 / (d as f64).powf(k as f64 / 2.0),
        prediction,
        measured_overlap,
    })
}

/// Points `g/‖g‖` for `g` on a grid over the faces of `[−1, 1]^d`; a
/// `δ`-net of the sphere.
pub fn sphere_net(d: usize, delta: f64) -> Result<Vec<Vec<f64>>> {
    if d == 0 || !(delta > 0.0) {
        return Err(Error::invalid("sphere net needs d >= 1 and delta > 0"));
    }
    if d == 1 {
        return Ok(vec![vec![1.0], vec![-1.0]]);
    }
    let h = 2.0 * delta / ((d - 1) as f64).sqrt();
    let steps = (2.0 / h).ceil() as usize;
    let grid: Vec<f64> = (0..=steps).map(|i| -1.0 + 2.0 * i as f64 / steps as f64).collect();
    let per_face = (grid.len() as f64).powi(d as i32 - 1);
    if 2.0 * d as f64 * per_face > NET_GUARD {
        return Err(Error::SizeGuard { entries: (2.0 * d as f64 * per_face) as u128, limit: NET_GUARD as u128 });
    }
    let mut net = Vec::new();
    let mut idx = vec![0usize; d - 1];
    for face in 0..d {
        for sign in [1.0, -1.0] {
            idx.iter_mut().for_each(|i| *i = 0);
            loop {
                let mut g = Vec::with_capacity(d);
                let mut it = idx.iter();
                for c in 0..d {
                    g.push(if c == face { sign } else { grid[*it.next().expect("index per free axis")] });
                }
                normalize(&mut g);
                net.push(g);
                let mut pos = 0;
                while pos < d - 1 {
                    idx[pos] += 1;
                    if idx[pos] < grid.len() {
                        break;
                    }
                    idx[pos] = 0;
                    pos += 1;
                }
                if pos == d - 1 {
                    break;
                }
            }
        }
    }
    Ok(net)
}

/// Brute-force estimator: the net point maximizing `|(1/n) Σ t_i h_k(w·x_i)|`.
pub fn exhaustive_oracle(data: &Dataset, t: &[f64], k: usize, delta: f64) -> Result<Vec<f64>> {
    if data.n == 0 {
        return Err(Error::Sizing("exhaustive search needs at least one sample".into()));
    }
    if t.len() != data.n {
        return Err(Error::invalid("transformed labels must match the sample count"));
    }
    let d = data.d;
    if d > 6 || (3.0 / delta).powi(d as i32) > NET_GUARD {
        return Err(Error::SizeGuard { entries: (3.0 / delta).powi(d as i32) as u128, limit: NET_GUARD as u128 });
    }
    let net = sphere_net(d, delta)?;
    let scores: Vec<f64> = net
        .par_iter()
        .map(|w| {
            let s: f64 =
                (0..data.n).map(|i| t[i] * eval_hermite(HermiteKind::Normalized, k, dot(data.row(i), w))).sum();
            (s / data.n as f64).abs()
        })
        .collect();
    let best = (0..net.len()).fold(0, |b, i| if scores[i] > scores[b] { i } else { b });
    Ok(net[best].clone())
}
