//! Hermite coefficients `β_k`, conditional witnesses `ζ_k(y) = E[h_k(Z)|Y=y]`,
//! their norms `λ_k`, and the information / generative exponents.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::{
    eval_hermite, gauss_hermite_rule, gaussian_cdf, gaussian_pdf, hermite_table, ln_factorial, HermiteKind, MAX_DEGREE,
};
use crate::link::{FlatSet, LinkFunction};
use crate::quad::gl20;
use crate::rng::{stream, Domain};

/// Roots with `|σ'|` below this are suspect...
pub const SLOPE_TOL: f64 = 1e-6;
/// ...and rejected when they also sit within this distance of a stationary point.
pub const STATIONARY_RADIUS: f64 = 1e-3;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const BOOTSTRAP_RESAMPLES: usize = 200;
pub const MAX_BINS: usize = 512;
pub const MIN_PER_BIN: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Known in closed form (e.g. Hermite-series coefficients).
    Exact,
    /// Gauss-Hermite quadrature.
    GaussHermite,
    /// Composite Gauss-Legendre over monotone pieces with level-set evaluation.
    LevelSet,
    /// Equal-mass label bins on a sample.
    Binned,
}

/// How a coefficient is declared nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Threshold {
    Absolute(f64),
    /// Multiple of the reported standard error.
    StandardErrors(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralProfile {
    pub kmax: usize,
    /// `β_1..β_kmax`.
    pub beta: Vec<f64>,
    pub beta_se: Vec<f64>,
    pub beta_method: Method,
    pub beta_converged: Vec<bool>,
    /// `λ_1..λ_kmax`.
    pub lambda: Vec<f64>,
    /// `λ_k²` as estimated; may be slightly negative after debiasing.
    pub lambda_sq: Vec<f64>,
    pub lambda_sq_se: Vec<f64>,
    pub lambda_method: Method,
    pub lambda_converged: Vec<bool>,
    pub threshold: Threshold,
    pub info_exponent: Option<usize>,
    pub gen_exponent: Option<usize>,
}

impl SpectralProfile {
    fn assemble(
        kmax: usize,
        beta: Coefficients,
        lambda_sq: Coefficients,
        lambda_sq_se: Vec<f64>,
        beta_se: Vec<f64>,
        threshold: Threshold,
    ) -> Self {
        let mut p = SpectralProfile {
            kmax,
            lambda: lambda_sq.values.iter().map(|v| v.max(0.0).sqrt()).collect(),
            beta: beta.values,
            beta_se,
            beta_method: beta.method,
            beta_converged: beta.converged,
            lambda_sq: lambda_sq.values,
            lambda_sq_se,
            lambda_method: lambda_sq.method,
            lambda_converged: lambda_sq.converged,
            threshold,
            info_exponent: None,
            gen_exponent: None,
        };
        let (i, g) = classify_exponents(&p, threshold);
        p.info_exponent = i;
        p.gen_exponent = g;
        p
    }
}

/// Smallest `k` with `|β_k|` resp. `λ_k` above the threshold.
pub fn classify_exponents(p: &SpectralProfile, threshold: Threshold) -> (Option<usize>, Option<usize>) {
    let info = (0..p.beta.len()).find(|&i| match threshold {
        Threshold::Absolute(t) => p.beta[i].abs() > t,
        Threshold::StandardErrors(m) => p.beta[i].abs() > m * p.beta_se[i],
    });
    let gen = (0..p.lambda_sq.len()).find(|&i| match threshold {
        Threshold::Absolute(t) => p.lambda[i] > t,
        Threshold::StandardErrors(m) => p.lambda_sq[i] > m * p.lambda_sq_se[i],
    });
    (info.map(|i| i + 1), gen.map(|i| i + 1))
}

/// `I_{χ²} ≈ Σ_{k≤kmax} λ_k²`, with a flag when the last term is not negligible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MutualInfo {
    pub value: f64,
    pub truncated_tail: bool,
}

pub fn chi2_mutual_info(p: &SpectralProfile) -> MutualInfo {
    MutualInfo {
        value: p.lambda.iter().map(|l| l * l).sum(),
        truncated_tail: p.lambda.last().is_some_and(|l| l * l > 1e-6),
    }
}

/// Values with their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub values: Vec<f64>,
    pub converged: Vec<bool>,
    pub method: Method,
}

/// `β_k = E[σ(Z) h_k(Z)]`, `k = 1..=kmax`.
///
/// Hermite-series links return their coefficients. Tabulated links go
/// through the piecewise quadrature (they are only piecewise smooth); the
/// rest use a Gauss-Hermite rule with at least `4·kmax` nodes, flagging any
/// coefficient that moves by more than `1e-8` when the rule is refined.
pub fn beta_coeffs(link: &LinkFunction, kmax: usize, nodes: usize) -> Result<Coefficients> {
    if kmax == 0 || kmax > MAX_DEGREE {
        return Err(Error::invalid(format!("kmax must be in 1..={MAX_DEGREE}")));
    }
    match link {
        LinkFunction::HermiteSeries(c) => {
            let values = (1..=kmax).map(|k| c.get(k).copied().unwrap_or(0.0)).collect();
            return Ok(Coefficients { values, converged: vec![true; kmax], method: Method::Exact });
        }
        LinkFunction::Tabulated(_) => {
            let (beta, _) = piecewise_quadrature(link, kmax, &QuadratureOptions::default())?;
            return Ok(beta);
        }
        _ => {}
    }
    // refine until the coefficients settle or the rule size cap is reached
    let mut n = nodes.max(4 * kmax).clamp(1, MAX_DEGREE);
    let mut current = gh_beta(link, kmax, n)?;
    loop {
        let next_n = if 2 * n <= MAX_DEGREE {
            2 * n
        } else if n < MAX_DEGREE {
            MAX_DEGREE
        } else {
            n / 2
        };
        let next = gh_beta(link, kmax, next_n)?;
        let converged: Vec<bool> = current.iter().zip(&next).map(|(a, b)| (a - b).abs() <= 1e-8).collect();
        if converged.iter().all(|&c| c) || n == MAX_DEGREE || next_n == MAX_DEGREE && n > next_n {
            let values = if n == MAX_DEGREE { current } else { next };
            return Ok(Coefficients { values, converged, method: Method::GaussHermite });
        }
        n = next_n;
        current = next;
    }
}

fn gh_beta(link: &LinkFunction, kmax: usize, n: usize) -> Result<Vec<f64>> {
    let rule = gauss_hermite_rule(n)?;
    let mut beta = vec![0.0; kmax];
    for (&z, &w) in rule.nodes.iter().zip(&rule.weights) {
        let s = link.eval(z);
        let h = hermite_table(HermiteKind::Normalized, kmax, z);
        for k in 1..=kmax {
            beta[k - 1] += w * s * h[k];
        }
    }
    Ok(beta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureOptions {
    pub domain: (f64, f64),
    /// Points used to locate the monotone pieces of `σ`.
    pub grid: usize,
    /// Target panel width for the composite Gauss-Legendre rule.
    pub panel_width: f64,
    /// Geometric refinement levels next to piece boundaries.
    pub grading: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self { domain: (-8.0, 8.0), grid: 4096, panel_width: 0.25, grading: 14 }
    }
}

/// One point of a level set. `weight` is `γ(z)/|σ'(z)|` up to a factor
/// common to all roots of the level (tabulated links report it on the
/// pre-mollifier scale, where it stays finite).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelRoot {
    pub z: f64,
    pub slope_sign: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSet {
    pub y: f64,
    pub roots: Vec<LevelRoot>,
}

impl LevelSet {
    /// `Σ h_k(z) w / Σ w`; zero for an empty level set.
    pub fn zeta(&self, k: usize) -> f64 {
        let total: f64 = self.roots.iter().map(|r| r.weight).sum();
        if total <= 0.0 {
            return 0.0;
        }
        self.roots.iter().map(|r| eval_hermite(HermiteKind::Normalized, k, r.z) * r.weight).sum::<f64>() / total
    }

    fn zetas(&self, kmax: usize) -> Vec<f64> {
        let total: f64 = self.roots.iter().map(|r| r.weight).sum();
        let mut out = vec![0.0; kmax];
        if total <= 0.0 {
            return out;
        }
        for r in &self.roots {
            let h = hermite_table(HermiteKind::Normalized, kmax, r.z);
            for k in 1..=kmax {
                out[k - 1] += h[k] * r.weight;
            }
        }
        out.iter_mut().for_each(|v| *v /= total);
        out
    }
}

/// Monotone decomposition of a link on a bounded domain, reused across
/// many level queries.
pub struct LevelSetSolver<'a> {
    link: &'a LinkFunction,
    /// Piece boundaries (ascending, including the domain ends).
    knots: Vec<f64>,
    values: Vec<f64>,
    /// Declared flat sets plus runs where `σ` is constant to the last bit.
    flats: Vec<FlatSet>,
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, mut flo: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

impl<'a> LevelSetSolver<'a> {
    pub fn new(link: &'a LinkFunction, domain: (f64, f64), grid: usize) -> Result<Self> {
        let (a, b) = domain;
        if !(a < b) || grid < 2 {
            return Err(Error::invalid("level-set domain must be a non-empty interval with grid >= 2"));
        }
        let step = (b - a) / (grid - 1) as f64;
        let zs: Vec<f64> = (0..grid).map(|i| a + i as f64 * step).collect();
        let ds: Vec<f64> = zs.iter().map(|&z| link.derivative(z)).collect();
        let vs: Vec<f64> = zs.iter().map(|&z| link.eval(z)).collect();
        let mut flats = link.flat_sets();
        let declared = |z: f64| flats.iter().any(|f| f.intervals.iter().any(|&(lo, hi)| z >= lo && z <= hi));
        let mut runs: Vec<(f64, f64, f64)> = Vec::new();
        let mut knots = vec![a];
        let mut i = 0;
        while i < grid - 1 {
            if ds[i] == 0.0 && ds[i + 1] == 0.0 && vs[i] == vs[i + 1] {
                // Saturated stretch: one piece, not a knot per grid point.
                let start = i;
                while i + 1 < grid && ds[i + 1] == 0.0 && vs[i + 1] == vs[start] {
                    i += 1;
                }
                knots.extend([zs[start], zs[i]]);
                if !declared(0.5 * (zs[start] + zs[i])) {
                    let lo = if start == 0 { f64::NEG_INFINITY } else { zs[start] };
                    let hi = if i == grid - 1 { f64::INFINITY } else { zs[i] };
                    runs.push((lo, hi, vs[start]));
                }
                continue;
            }
            let (d0, d1) = (ds[i], ds[i + 1]);
            if d0 == 0.0 && i > 0 {
                knots.push(zs[i]);
            } else if d0 * d1 < 0.0 {
                knots.push(bisect(|z| link.derivative(z), zs[i], zs[i + 1], d0));
            }
            i += 1;
        }
        for (lo, hi, level) in runs {
            match flats.iter_mut().find(|f| f.level == level) {
                Some(f) => f.intervals.push((lo, hi)),
                None => flats.push(FlatSet { level, intervals: vec![(lo, hi)] }),
            }
        }
        knots.extend(link.structural_points().into_iter().filter(|&p| p > a && p < b));
        knots.push(b);
        knots.sort_by(|x, y| x.total_cmp(y));
        knots.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
        let values = knots.iter().map(|&z| link.eval(z)).collect();
        Ok(Self { link, knots, values, flats })
    }

    /// Regions of positive mass on which `σ` is constant, including
    /// numerically saturated stretches found on the scan grid.
    pub fn flat_sets(&self) -> &[FlatSet] {
        &self.flats
    }

    /// Boundaries of the monotone pieces, including stationary points.
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    fn is_near_critical(&self, z: f64, slope: f64) -> bool {
        if slope.abs() >= SLOPE_TOL {
            return false;
        }
        let h = 1e-5;
        let curvature = (self.link.derivative(z + h) - self.link.derivative(z - h)) / (2.0 * h);
        slope.abs() < STATIONARY_RADIUS * curvature.abs() || slope == 0.0
    }

    /// All roots of `σ(z) = y` in the domain; errors on near-critical levels.
    pub fn solve(&self, y: f64) -> Result<LevelSet> {
        self.solve_inner(y, true, false)
    }

    /// As [`solve`](Self::solve) but keeps roots of tiny, nonzero slope (the
    /// closed-form derivative still gives a finite weight).
    pub fn solve_relaxed(&self, y: f64) -> Result<LevelSet> {
        self.solve_inner(y, false, false)
    }

    /// Every root of `σ(z) = y`, stationary ones included (with zero weight).
    fn all_roots(&self, y: f64) -> Vec<f64> {
        self.solve_inner(y, false, true).map(|l| l.roots.iter().map(|r| r.z).collect()).unwrap_or_default()
    }

    fn solve_inner(&self, y: f64, strict: bool, keep_stationary: bool) -> Result<LevelSet> {
        let link = self.link;
        let mut roots: Vec<LevelRoot> = Vec::new();
        let mut stationary = Vec::new();
        for i in 0..self.knots.len() - 1 {
            let (a, b) = (self.knots[i], self.knots[i + 1]);
            let (fa, fb) = (self.values[i] - y, self.values[i + 1] - y);
            let z = if fa == 0.0 {
                if i > 0 && roots.last().is_some_and(|r| r.z == a) {
                    continue;
                }
                a
            } else if fb == 0.0 {
                b
            } else if fa * fb < 0.0 {
                bisect(|z| link.eval(z) - y, a, b, fa)
            } else {
                continue;
            };
            if roots.last().is_some_and(|r| r.z == z) {
                continue;
            }
            let slope = link.derivative(z);
            if strict && self.is_near_critical(z, slope) {
                return Err(Error::NearCritical { level: y, root: z, slope });
            }
            if slope == 0.0 {
                if stationary.last() != Some(&z) {
                    stationary.push(z);
                }
                continue;
            }
            roots.push(LevelRoot { z, slope_sign: slope.signum(), weight: gaussian_pdf(z) / slope.abs() });
        }
        if keep_stationary {
            roots.extend(stationary.into_iter().map(|z| LevelRoot { z, slope_sign: 0.0, weight: 0.0 }));
            roots.sort_by(|a, b| a.z.total_cmp(&b.z));
        } else if !stationary.is_empty() {
            // The level is a critical value: the conditional law concentrates
            // on the stationary roots, each weighted by `γ/√|σ''|`.
            let h = 1e-5;
            roots = stationary
                .into_iter()
                .map(|z| {
                    let curv = ((link.derivative(z + h) - link.derivative(z - h)) / (2.0 * h)).abs();
                    LevelRoot { z, slope_sign: 0.0, weight: gaussian_pdf(z) / curv.max(1e-300).sqrt() }
                })
                .collect();
        }
        Ok(LevelSet { y, roots })
    }
}

/// Tabulated links: roots of `σ̂ = s` come from the trajectories directly.
fn table_level_set(table: &crate::forge::LinkTable, y: f64, key: f64) -> Result<LevelSet> {
    if key <= 0.0 {
        let z = table.position(0, 0.0).0;
        return Err(Error::NearCritical { level: y, root: z, slope: 0.0 });
    }
    if key >= table.tau {
        return Ok(LevelSet { y, roots: Vec::new() });
    }
    let roots = table
        .level_roots(key)
        .into_iter()
        .map(|r| LevelRoot { z: r.z, slope_sign: r.sign, weight: r.weight })
        .collect();
    Ok(LevelSet { y, roots })
}

/// Level set `σ^{-1}(y)` on `domain`, located on a `grid`-point scan.
pub fn level_set_solve(link: &LinkFunction, y: f64, domain: (f64, f64), grid: usize) -> Result<LevelSet> {
    if let LinkFunction::Tabulated(t) = link {
        return table_level_set(t, y, t.key_from_level(y));
    }
    LevelSetSolver::new(link, domain, grid)?.solve(y)
}

/// Mean of `h_k` over a flat set, via `∫_a^b He_k γ = [He_{k−1} γ]_b^a`.
fn flat_set_moments(intervals: &[(f64, f64)], kmax: usize) -> (f64, Vec<f64>) {
    let edge = |z: f64, k: usize| -> f64 {
        if z.is_infinite() {
            0.0
        } else {
            eval_hermite(HermiteKind::Unnormalized, k - 1, z) * gaussian_pdf(z)
        }
    };
    let mass = intervals.iter().map(|&(a, b)| gaussian_cdf(b) - gaussian_cdf(a)).sum();
    let integrals = (1..=kmax)
        .map(|k| {
            let norm = (-0.5 * ln_factorial(k)).exp();
            intervals.iter().map(|&(a, b)| edge(a, k) - edge(b, k)).sum::<f64>() * norm
        })
        .collect();
    (mass, integrals)
}

/// `ζ_k(y)` for a deterministic link.
pub fn zeta_at(link: &LinkFunction, k: usize, y: f64) -> Result<f64> {
    ZetaEvaluator::new(link)?.zeta(k, y)
}

/// Batched `ζ_k(y)` evaluator that keeps the monotone decomposition.
pub struct ZetaEvaluator<'a> {
    link: &'a LinkFunction,
    solver: Option<LevelSetSolver<'a>>,
}

impl<'a> ZetaEvaluator<'a> {
    pub fn new(link: &'a LinkFunction) -> Result<Self> {
        let opts = QuadratureOptions::default();
        let solver = match link {
            LinkFunction::Tabulated(_) => None,
            _ => Some(LevelSetSolver::new(link, opts.domain, opts.grid)?),
        };
        Ok(Self { link, solver })
    }

    pub fn zeta(&self, k: usize, y: f64) -> Result<f64> {
        let flats = match &self.solver {
            Some(s) => s.flat_sets().to_vec(),
            None => self.link.flat_sets(),
        };
        for flat in flats {
            if flat.level == y {
                let (mass, integrals) = flat_set_moments(&flat.intervals, k);
                return Ok(if mass > 0.0 { integrals[k - 1] / mass } else { 0.0 });
            }
        }
        match (self.link, &self.solver) {
            (LinkFunction::Tabulated(t), _) => Ok(table_level_set(t, y, t.key_from_level(y))?.zeta(k)),
            (_, Some(s)) => Ok(s.solve(y)?.zeta(k)),
            _ => unreachable!("non-tabulated links always have a solver"),
        }
    }

    /// As [`zeta`](Self::zeta), but near-critical levels fall back to the
    /// relaxed solve instead of failing. Used when the levels are data.
    pub fn zeta_lenient(&self, k: usize, y: f64) -> Result<f64> {
        match self.zeta(k, y) {
            Err(Error::NearCritical { .. }) => match &self.solver {
                Some(s) => Ok(s.solve_relaxed(y)?.zeta(k)),
                None => Ok(0.0),
            },
            other => other,
        }
    }
}

fn graded_panels(a: f64, b: f64, width: f64, grading: usize) -> Vec<(f64, f64)> {
    let count = ((b - a) / width).ceil().max(1.0) as usize;
    let w = (b - a) / count as f64;
    let mut panels = Vec::with_capacity(count + 2 * grading);
    for i in 0..count {
        let (lo, hi) = (a + i as f64 * w, if i + 1 == count { b } else { a + (i + 1) as f64 * w });
        let mut cuts = vec![lo, hi];
        if i == 0 {
            cuts.extend((1..=grading).map(|g| lo + (hi - lo) * 0.25f64.powi(g as i32)));
        }
        if i + 1 == count {
            cuts.extend((1..=grading).map(|g| hi - (hi - lo) * 0.25f64.powi(g as i32)));
        }
        cuts.sort_by(|x, y| x.total_cmp(y));
        cuts.dedup();
        panels.extend(cuts.windows(2).map(|c| (c[0], c[1])));
    }
    panels
}

/// `(β, λ²)` by composite quadrature over the monotone pieces of `σ` plus
/// the exact contribution of its flat sets.
fn piecewise_quadrature(
    link: &LinkFunction,
    kmax: usize,
    opts: &QuadratureOptions,
) -> Result<(Coefficients, Coefficients)> {
    let (b1, l1) = piecewise_pass(link, kmax, opts, opts.panel_width)?;
    let (b2, l2) = piecewise_pass(link, kmax, opts, 0.5 * opts.panel_width)?;
    let agree = |a: &[f64], b: &[f64]| -> Vec<bool> {
        a.iter().zip(b).map(|(x, y)| (x - y).abs() <= 1e-10 + 1e-8 * y.abs()).collect()
    };
    let beta = Coefficients { converged: agree(&b1, &b2), values: b2, method: Method::LevelSet };
    let lambda_sq = Coefficients { converged: agree(&l1, &l2), values: l2, method: Method::LevelSet };
    Ok((beta, lambda_sq))
}

fn piecewise_pass(
    link: &LinkFunction,
    kmax: usize,
    opts: &QuadratureOptions,
    width: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (solver, mut knots) = match link {
        LinkFunction::Tabulated(t) => {
            let mut k = vec![opts.domain.0, opts.domain.1];
            k.extend(t.structural_points());
            (None, k)
        }
        _ => {
            let s = LevelSetSolver::new(link, opts.domain, opts.grid)?;
            let mut k = s.knots().to_vec();
            // preimages of critical values also change the root count
            let interior: Vec<f64> = k[1..k.len() - 1].to_vec();
            for c in interior {
                k.extend(s.all_roots(link.eval(c)));
            }
            (Some(s), k)
        }
    };
    let flats = match &solver {
        Some(s) => s.flat_sets().to_vec(),
        None => link.flat_sets(),
    };
    let in_flat = |z: f64| flats.iter().any(|f| f.intervals.iter().any(|&(a, b)| z > a && z < b));
    for f in &flats {
        for &(a, b) in &f.intervals {
            knots.extend([a, b].into_iter().filter(|z| z.is_finite()));
        }
    }
    knots.retain(|&z| z >= opts.domain.0 && z <= opts.domain.1);
    knots.sort_by(|x, y| x.total_cmp(y));
    knots.dedup_by(|x, y| (*x - *y).abs() < 1e-12);

    let panels: Vec<(f64, f64)> = knots
        .windows(2)
        .filter(|w| !in_flat(0.5 * (w[0] + w[1])))
        .flat_map(|w| graded_panels(w[0], w[1], width, opts.grading))
        .collect();

    let level_at = |z: f64, strict: bool| -> Result<LevelSet> {
        match (link, &solver) {
            (LinkFunction::Tabulated(t), _) => table_level_set(t, t.eval(z), t.sigma_hat(z)),
            (_, Some(s)) if strict => s.solve(link.eval(z)),
            (_, Some(s)) => s.solve_relaxed(link.eval(z)),
            _ => unreachable!(),
        }
    };

    let rule = gl20();
    let partials: Vec<Result<(Vec<f64>, Vec<f64>)>> = panels
        .par_iter()
        .map(|&(a, b)| {
            let mut beta = vec![0.0; kmax];
            let mut lsq = vec![0.0; kmax];
            for (z, w) in rule.mapped(a, b) {
                let g = gaussian_pdf(z) * w;
                // Nodes next to a stationary point see a near-critical level.
                // Jitter once; if that is not enough, the closed-form slope
                // still gives finite weights, so use the relaxed solve.
                let level = match level_at(z, true).or_else(|_| level_at(z + 1e-7, true)) {
                    Ok(l) => l,
                    Err(Error::NearCritical { .. }) => level_at(z, false)?,
                    Err(e) => return Err(e),
                };
                let s = link.eval(z);
                let h = hermite_table(HermiteKind::Normalized, kmax, z);
                let zetas = level.zetas(kmax);
                for k in 1..=kmax {
                    lsq[k - 1] += zetas[k - 1] * zetas[k - 1] * g;
                    beta[k - 1] += s * h[k] * g;
                }
            }
            Ok((beta, lsq))
        })
        .collect();
    let mut beta = vec![0.0; kmax];
    let mut lsq = vec![0.0; kmax];
    for p in partials {
        let (b, l) = p?;
        for k in 0..kmax {
            beta[k] += b[k];
            lsq[k] += l[k];
        }
    }
    for f in &flats {
        let (mass, integrals) = flat_set_moments(&f.intervals, kmax);
        if mass > 0.0 {
            for k in 0..kmax {
                lsq[k] += integrals[k] * integrals[k] / mass;
                beta[k] += f.level * integrals[k];
            }
        }
    }
    Ok((beta, lsq))
}

/// `λ_k² = E_Z[ζ_k(σ(Z))²]` for a deterministic link, `k = 1..=kmax`;
/// returned as a profile with `λ_k` and `β_k` filled in.
pub fn lambda_coeffs_quadrature(link: &LinkFunction, kmax: usize, opts: &QuadratureOptions) -> Result<SpectralProfile> {
    if kmax == 0 || kmax > MAX_DEGREE {
        return Err(Error::invalid(format!("kmax must be in 1..={MAX_DEGREE}")));
    }
    let (panel_beta, lambda_sq) = piecewise_quadrature(link, kmax, opts)?;
    let beta = match link {
        LinkFunction::Tabulated(_) => panel_beta,
        _ => beta_coeffs(link, kmax, 4 * kmax)?,
    };
    Ok(SpectralProfile::assemble(
        kmax,
        beta,
        lambda_sq,
        vec![0.0; kmax],
        vec![0.0; kmax],
        Threshold::Absolute(DEFAULT_TOL),
    ))
}

/// Max over `ygrid` of `|S(y) − S(y_0)|` with
/// `S(y) = Σ_{σ(z)=y} γ(z) h_{k−1}(z) sign σ'(z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstancyCheck {
    pub max_deviation: f64,
    pub reference: f64,
    /// Levels skipped as near-critical.
    pub skipped: Vec<f64>,
}

pub fn level_set_constancy_check(link: &LinkFunction, k: usize, ygrid: &[f64]) -> Result<ConstancyCheck> {
    if k == 0 {
        return Err(Error::invalid("constancy check needs k >= 1"));
    }
    let opts = QuadratureOptions::default();
    let solver = match link {
        LinkFunction::Tabulated(_) => None,
        _ => Some(LevelSetSolver::new(link, opts.domain, opts.grid)?),
    };
    let mut values = Vec::new();
    let mut skipped = Vec::new();
    for &y in ygrid {
        let level = match (link, &solver) {
            (LinkFunction::Tabulated(t), _) => table_level_set(t, y, t.key_from_level(y)),
            (_, Some(s)) => s.solve(y),
            _ => unreachable!(),
        };
        match level {
            Ok(l) => values.push(
                l.roots
                    .iter()
                    .map(|r| gaussian_pdf(r.z) * eval_hermite(HermiteKind::Normalized, k - 1, r.z) * r.slope_sign)
                    .sum::<f64>(),
            ),
            Err(Error::NearCritical { .. }) => skipped.push(y),
            Err(e) => return Err(e),
        }
    }
    let reference = values.first().copied().unwrap_or(0.0);
    let max_deviation = values.iter().map(|v| (v - reference).abs()).fold(0.0, f64::max);
    Ok(ConstancyCheck { max_deviation, reference, skipped })
}

/// Sample-based estimates for noisy channels.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedEstimate {
    pub kmax: usize,
    pub n: usize,
    /// Largest label in each bin, ascending.
    pub bin_upper: Vec<f64>,
    pub bin_mass: Vec<f64>,
    /// `zeta[b][k−1]`: mean of `h_k(z)` in bin `b`.
    pub zeta: Vec<Vec<f64>>,
    pub lambda_sq: Vec<f64>,
    pub lambda_sq_se: Vec<f64>,
    pub beta: Vec<f64>,
    pub beta_se: Vec<f64>,
}

impl BinnedEstimate {
    pub fn profile(&self, se_multiple: f64) -> SpectralProfile {
        SpectralProfile::assemble(
            self.kmax,
            Coefficients { values: self.beta.clone(), converged: vec![true; self.kmax], method: Method::Binned },
            Coefficients { values: self.lambda_sq.clone(), converged: vec![true; self.kmax], method: Method::Binned },
            self.lambda_sq_se.clone(),
            self.beta_se.clone(),
            Threshold::StandardErrors(se_multiple),
        )
    }

    /// Bin-wise `ζ̂_k(y)`: the estimate of the bin containing `y`.
    pub fn zeta_lookup(&self, k: usize, y: f64) -> f64 {
        let b = self.bin_upper.partition_point(|&u| u < y).min(self.bin_upper.len() - 1);
        self.zeta[b][k - 1]
    }
}

/// Default bin count `⌈n^{1/3}⌉`, capped at [`MAX_BINS`].
pub fn default_bins(n: usize) -> usize {
    ((n as f64).cbrt().ceil() as usize).clamp(1, MAX_BINS)
}

/// Equal-mass partition of sorted labels that never splits a run of ties.
fn tie_aware_bins(sorted_y: &[f64], bins: usize) -> Vec<usize> {
    let n = sorted_y.len();
    let mut ends = Vec::with_capacity(bins);
    let mut start = 0;
    for b in 1..=bins {
        let mut end = (b * n / bins).max(start);
        if end <= start {
            continue;
        }
        while end < n && sorted_y[end] == sorted_y[end - 1] {
            end += 1;
        }
        if end > start {
            ends.push(end);
            start = end;
        }
        if start >= n {
            break;
        }
    }
    if ends.last() != Some(&n) {
        ends.push(n);
    }
    ends
}

struct BinStats {
    lambda_sq: Vec<f64>,
    beta: Vec<f64>,
}

fn bin_statistics(
    counts: &[f64],
    sums: &[Vec<f64>],
    sqs: &[Vec<f64>],
    beta_sum: &[f64],
    n: f64,
    kmax: usize,
) -> BinStats {
    let mut lambda_sq = vec![0.0; kmax];
    for b in 0..counts.len() {
        let m = counts[b];
        if m < 2.0 {
            continue;
        }
        for k in 0..kmax {
            let mean = sums[b][k] / m;
            let var = (sqs[b][k] - m * mean * mean) / (m - 1.0);
            lambda_sq[k] += (m / n) * (mean * mean - var / m);
        }
    }
    BinStats { lambda_sq, beta: beta_sum.iter().map(|s| s / n).collect() }
}

/// `λ̂_k²` from equal-mass label bins with within-bin variance debiasing
/// and bootstrap standard errors; `samples` are `(z, y)` pairs.
pub fn lambda_coeffs_binned(
    samples: &[(f64, f64)],
    kmax: usize,
    bins: Option<usize>,
    seed: u64,
) -> Result<BinnedEstimate> {
    let n = samples.len();
    if kmax == 0 || kmax > MAX_DEGREE {
        return Err(Error::invalid(format!("kmax must be in 1..={MAX_DEGREE}")));
    }
    let bins = bins.unwrap_or_else(|| default_bins(n));
    if bins == 0 || n < MIN_PER_BIN * bins {
        return Err(Error::InsufficientSamples(format!(
            "{n} samples for {bins} bins (need {MIN_PER_BIN} per bin on average)"
        )));
    }
    if samples.iter().any(|(z, y)| !z.is_finite() || !y.is_finite()) {
        return Err(Error::invalid("non-finite sample"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| samples[a].1.total_cmp(&samples[b].1));
    let sorted_y: Vec<f64> = order.iter().map(|&i| samples[i].1).collect();
    let ends = tie_aware_bins(&sorted_y, bins);
    let nb = ends.len();
    let mut bin_of = vec![0u32; n];
    let mut start = 0;
    for (b, &end) in ends.iter().enumerate() {
        for &i in &order[start..end] {
            bin_of[i] = b as u32;
        }
        start = end;
    }
    // h_1..h_kmax per sample, row-major
    let table: Vec<f64> = samples
        .par_iter()
        .flat_map_iter(|&(z, _)| hermite_table(HermiteKind::Normalized, kmax, z).into_iter().skip(1))
        .collect();

    let accumulate = |weights: &dyn Fn(usize) -> f64| -> BinStats {
        let mut counts = vec![0.0; nb];
        let mut sums = vec![vec![0.0; kmax]; nb];
        let mut sqs = vec![vec![0.0; kmax]; nb];
        let mut beta_sum = vec![0.0; kmax];
        for i in 0..n {
            let w = weights(i);
            if w == 0.0 {
                continue;
            }
            let b = bin_of[i] as usize;
            counts[b] += w;
            let row = &table[i * kmax..(i + 1) * kmax];
            let y = samples[i].1;
            for k in 0..kmax {
                sums[b][k] += w * row[k];
                sqs[b][k] += w * row[k] * row[k];
                beta_sum[k] += w * y * row[k];
            }
        }
        bin_statistics(&counts, &sums, &sqs, &beta_sum, n as f64, kmax)
    };

    let point = accumulate(&|_| 1.0);
    let replicates: Vec<BinStats> = (0..BOOTSTRAP_RESAMPLES)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, Domain::Bootstrap, r as u64);
            let mut w = vec![0u32; n];
            for _ in 0..n {
                w[rng.random_range(0..n)] += 1;
            }
            accumulate(&|i| w[i] as f64)
        })
        .collect();
    let sd = |f: &dyn Fn(&BinStats) -> f64| -> f64 {
        let vals: Vec<f64> = replicates.iter().map(f).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64).sqrt()
    };
    let lambda_sq_se = (0..kmax).map(|k| sd(&|s: &BinStats| s.lambda_sq[k])).collect();
    let beta_se = (0..kmax).map(|k| sd(&|s: &BinStats| s.beta[k])).collect();

    let mut bin_upper = Vec::with_capacity(nb);
    let mut bin_mass = Vec::with_capacity(nb);
    let mut zeta = Vec::with_capacity(nb);
    let mut start = 0;
    for &end in &ends {
        bin_upper.push(sorted_y[end - 1]);
        bin_mass.push((end - start) as f64 / n as f64);
        let mut means = vec![0.0; kmax];
        for &i in &order[start..end] {
            for k in 0..kmax {
                means[k] += table[i * kmax + k];
            }
        }
        means.iter_mut().for_each(|m| *m /= (end - start) as f64);
        zeta.push(means);
        start = end;
    }
    Ok(BinnedEstimate {
        kmax,
        n,
        bin_upper,
        bin_mass,
        zeta,
        lambda_sq: point.lambda_sq,
        lambda_sq_se,
        beta: point.beta,
        beta_se,
    })
}
