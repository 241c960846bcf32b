//! Closed-form sample-complexity calculators.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hermite::{double_factorial, ln_double_factorial};

/// Largest polynomial degree accepted by [`ld_norm_exact`].
pub const MAX_LD_DEGREE: usize = 200;

/// Inputs shared by the low-degree and SQ calculators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundsQuery {
    /// `λ_{k⋆}`.
    pub lambda: f64,
    pub kstar: usize,
    pub d: f64,
    pub n: f64,
    /// Polynomial degree `D`.
    pub degree: usize,
    /// Query exponent: `q = d^r` queries.
    pub r: f64,
}

impl BoundsQuery {
    /// Query at `n = δ d^{k⋆/2}`.
    pub fn at_delta(lambda: f64, kstar: usize, d: f64, delta: f64, degree: usize) -> Self {
        Self { lambda, kstar, d, n: delta * d.powf(kstar as f64 / 2.0), degree, r: 1.0 }
    }

    /// `δ = n / d^{k⋆/2}`.
    pub fn delta(&self) -> f64 {
        self.n / self.d.powf(self.kstar as f64 / 2.0)
    }

    /// True when `D/λ² ≪ √d` plausibly holds (ratio below 1/10).
    pub fn in_regime(&self) -> bool {
        self.degree as f64 / (self.lambda * self.lambda) < 0.1 * self.d.sqrt()
    }

    fn validate(&self) -> Result<()> {
        let finite = [self.lambda, self.d, self.n, self.r].iter().all(|v| v.is_finite() && *v >= 0.0);
        if !finite || self.kstar == 0 || self.d < 1.0 {
            return Err(Error::invalid("bounds query needs kstar >= 1, d >= 1 and finite nonnegative inputs"));
        }
        Ok(())
    }
}

fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// `ln ∏_{i=0}^{m−1} (d + 2i)`.
fn ln_rising_even(d: f64, m: usize) -> f64 {
    (0..m).map(|i| (d + 2.0 * i as f64).ln()).sum()
}

/// `E[(w·w′)^p]` for independent uniform unit vectors in `R^d`.
pub fn sphere_moment(p: usize, d: usize) -> f64 {
    if p % 2 == 1 {
        return 0.0;
    }
    if p == 0 {
        return 1.0;
    }
    (ln_double_factorial(p as i64 - 1) - ln_rising_even(d as f64, p / 2)).exp()
}

/// Terms `j = 0..=⌊D/k⋆⌋` whose parity allows a nonzero moment.
fn ld_terms(q: &BoundsQuery) -> impl Iterator<Item = usize> + '_ {
    (0..=q.degree / q.kstar).filter(move |j| (q.kstar * j).is_multiple_of(2))
}

/// `Σ_j C(n,j) λ^{2j} (k⋆j−1)!! / ∏_{i<k⋆j/2}(d+2i)`, the squared norm of
/// the degree-`D` likelihood ratio restricted to the leading degree.
pub fn ld_norm_exact(q: &BoundsQuery) -> Result<f64> {
    q.validate()?;
    if q.degree > MAX_LD_DEGREE {
        return Err(Error::invalid(format!("degree {} exceeds {MAX_LD_DEGREE}", q.degree)));
    }
    let mut total = 0.0;
    for j in ld_terms(q) {
        if j == 0 {
            total += 1.0;
            continue;
        }
        if (j as f64) > q.n || q.lambda == 0.0 {
            continue;
        }
        let kj = q.kstar * j;
        let ln_binom = ln_gamma(q.n + 1.0) - ln_gamma(j as f64 + 1.0) - ln_gamma(q.n - j as f64 + 1.0);
        let ln_term = ln_binom + 2.0 * j as f64 * q.lambda.ln() + ln_double_factorial(kj as i64 - 1)
            - ln_rising_even(q.d, kj / 2);
        total += ln_term.exp();
    }
    if !total.is_finite() {
        return Err(Error::NoConvergence { what: "low-degree norm (overflow)", residual: total });
    }
    Ok(total)
}

/// `Σ_j (k⋆j−1)!! (λ²δ)^j / j!` over `j ≤ ⌊D/k⋆⌋`.
pub fn ld_norm_asymptotic(q: &BoundsQuery) -> Result<f64> {
    q.validate()?;
    let x = q.lambda * q.lambda * q.delta();
    let mut total = 0.0;
    for j in ld_terms(q) {
        if j == 0 {
            total += 1.0;
            continue;
        }
        if x == 0.0 {
            continue;
        }
        let ln_term = ln_double_factorial((q.kstar * j) as i64 - 1) + j as f64 * x.ln() - ln_gamma(j as f64 + 1.0);
        total += ln_term.exp();
    }
    Ok(total)
}

/// Sample size at the strong-detection boundary `d^{k⋆/2} / D^{k⋆/2−1}`.
pub fn strong_detection_samples(d: f64, kstar: usize, degree: usize) -> f64 {
    let h = kstar as f64 / 2.0;
    d.powf(h) / (degree as f64).powf(h - 1.0)
}

/// `c_k / λ² · (d/r²)^{k⋆/2}`.
pub fn sq_bound(q: &BoundsQuery, c_k: f64) -> Result<f64> {
    q.validate()?;
    if q.r <= 0.0 || q.lambda == 0.0 {
        return Err(Error::invalid("SQ bound needs r > 0 and lambda > 0"));
    }
    Ok(c_k / (q.lambda * q.lambda) * (q.d / (q.r * q.r)).powf(q.kstar as f64 / 2.0))
}

/// Spiked-matrix predictions for the even-`k` partial-trace estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BbpPrediction {
    /// Semicircle radius parameter `R`.
    pub r: f64,
    /// Bulk edge `2R`.
    pub edge: f64,
    /// `β + R²/β`; absent when `β = 0`.
    pub outlier: Option<f64>,
    /// `max(0, 1 − (R/β)²)`; absent when `β = 0`.
    pub overlap: Option<f64>,
    /// `E[Y²] / (β² k (k−1)!!)`; absent when `β = 0`.
    pub delta_star: Option<f64>,
}

/// Predictions at sample size `n` for labels with second moment `ey2` and
/// Hermite coefficient `beta` at even degree `k ≥ 4`.
pub fn bbp_predictions(beta: f64, ey2: f64, k: usize, d: f64, n: f64) -> Result<BbpPrediction> {
    if k < 4 || k % 2 == 1 {
        return Err(Error::invalid(format!("BBP predictions need even k >= 4, got {k}")));
    }
    if !(ey2 >= 0.0 && d >= 1.0 && n > 0.0 && beta.is_finite()) {
        return Err(Error::invalid("BBP predictions need E[Y^2] >= 0, d >= 1 and n > 0"));
    }
    let kf = k as f64 * double_factorial(k as i64 - 1);
    let r = (ey2 / kf * d.powf(k as f64 / 2.0) / n).sqrt();
    let (outlier, overlap, delta_star) = if beta == 0.0 {
        (None, None, None)
    } else {
        (Some(beta + r * r / beta), Some((1.0 - (r / beta).powi(2)).max(0.0)), Some(ey2 / (beta * beta * kf)))
    };
    Ok(BbpPrediction { r, edge: 2.0 * r, outlier, overlap, delta_star })
}
