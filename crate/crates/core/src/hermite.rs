//! Scalar Hermite machinery.
//!
//! Probabilists' Hermite polynomials `He_k` and their orthonormal version
//! `h_k = He_k / sqrt(k!)`, the monic chi-square orthogonal polynomials
//! `p_k^{(d)}`, Gauss-Hermite rules for the standard Gaussian measure, and the
//! symmetric functions `Q(u) = E_z prod_i (u_i + z)` and `v(u)` used to move
//! level-set points without changing low-order Hermite moments.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub const MAX_DEGREE: usize = 64;
pub const DEFAULT_MIN_GAP: f64 = 1e-8;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const LOG_EVAL_THRESHOLD: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HermiteKind {
    /// `h_k`, orthonormal under the standard Gaussian.
    Normalized,
    /// `He_k`, monic.
    Unnormalized,
}

/// Standard Gaussian density.
#[inline]
pub fn gaussian_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard Gaussian CDF, accurate in both tails.
pub fn gaussian_cdf(z: f64) -> f64 {
    if z.is_infinite() {
        return if z > 0.0 { 1.0 } else { 0.0 };
    }
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

pub fn ln_factorial(k: usize) -> f64 {
    (1..=k).map(|i| (i as f64).ln()).sum()
}

/// `(2m-1)!!` for the odd argument `n = 2m-1`; `(-1)!! = 1`. Even `n` is
/// also accepted and gives the even double factorial.
pub fn double_factorial(n: i64) -> f64 {
    if n <= 0 {
        return 1.0;
    }
    let mut acc = 1.0;
    let mut i = n;
    while i > 1 {
        acc *= i as f64;
        i -= 2;
    }
    acc
}

/// `ln((n)!!)`, same conventions as [`double_factorial`].
pub fn ln_double_factorial(n: i64) -> f64 {
    let mut acc = 0.0;
    let mut i = n;
    while i > 1 {
        acc += (i as f64).ln();
        i -= 2;
    }
    acc
}

/// Evaluates `He_k(z)` or `h_k(z)` by the three-term recurrence.
///
/// For `|z| > 10` the recurrence runs on a rescaled representation and the
/// result is rebuilt from its log-magnitude, so large degrees do not overflow
/// in intermediate steps.
pub fn eval_hermite(kind: HermiteKind, k: usize, z: f64) -> f64 {
    if z.abs() > LOG_EVAL_THRESHOLD {
        let (log_abs, sign) = log_abs_hermite(k, z);
        let log_abs = match kind {
            HermiteKind::Unnormalized => log_abs,
            HermiteKind::Normalized => log_abs - 0.5 * ln_factorial(k),
        };
        return sign * log_abs.exp();
    }
    match kind {
        HermiteKind::Unnormalized => {
            let (mut prev, mut cur) = (0.0, 1.0);
            for j in 0..k {
                let next = z * cur - j as f64 * prev;
                prev = cur;
                cur = next;
            }
            cur
        }
        HermiteKind::Normalized => {
            let (mut prev, mut cur) = (0.0, 1.0);
            for j in 0..k {
                let jf = j as f64;
                let next = (z * cur - jf.sqrt() * prev) / (jf + 1.0).sqrt();
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// `(ln |He_k(z)|, sign He_k(z))`. A zero value returns `(-inf, 0.0)`.
pub fn log_abs_hermite(k: usize, z: f64) -> (f64, f64) {
    let (mut prev, mut cur) = (0.0f64, 1.0f64);
    let mut log_scale = 0.0;
    for j in 0..k {
        let next = z * cur - j as f64 * prev;
        prev = cur;
        cur = next;
        let m = cur.abs().max(prev.abs());
        if m > 1e100 {
            prev /= m;
            cur /= m;
            log_scale += m.ln();
        }
    }
    if cur == 0.0 {
        (f64::NEG_INFINITY, 0.0)
    } else {
        (log_scale + cur.abs().ln(), cur.signum())
    }
}

/// Values `[P_0(z), ..., P_kmax(z)]` of the requested family.
pub fn hermite_table(kind: HermiteKind, kmax: usize, z: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(kmax + 1);
    out.push(1.0);
    if kmax == 0 {
        return out;
    }
    out.push(z);
    for j in 1..kmax {
        let jf = j as f64;
        let next = match kind {
            HermiteKind::Unnormalized => z * out[j] - jf * out[j - 1],
            HermiteKind::Normalized => (z * out[j] - jf.sqrt() * out[j - 1]) / (jf + 1.0).sqrt(),
        };
        out.push(next);
    }
    out
}

/// Monic chi-square orthogonal polynomial
/// `p_k^{(d)}(r) = sum_j C(k,j) r^j (-1)^{k-j} prod_{i=j}^{k-1} (d + 2i)`.
pub fn chi2_poly(k: usize, d: usize, r: f64) -> f64 {
    let df = d as f64;
    let mut total = 0.0;
    let mut binom = 1.0;
    for j in 0..=k {
        if j > 0 {
            binom *= (k - j + 1) as f64 / j as f64;
        }
        let tail: f64 = (j..k).map(|i| df + 2.0 * i as f64).product();
        let sign = if (k - j).is_multiple_of(2) { 1.0 } else { -1.0 };
        total += binom * r.powi(j as i32) * sign * tail;
    }
    total
}

/// A quadrature rule for the standard Gaussian measure.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `sum_i w_i f(r_i)`, i.e. `E_{z~N(0,1)} f(z)` for polynomials of degree `< 2n`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&r, &w)| w * f(r)).sum()
    }
}

/// Gauss-Hermite rule with `n` nodes for the standard Gaussian.
///
/// Nodes are the eigenvalues of the symmetric Jacobi matrix of the `He`
/// recurrence, polished by Newton on `He_n`; weights are the Christoffel
/// numbers `1 / sum_{k<n} h_k(r_i)^2`.
pub fn gauss_hermite_rule(n: usize) -> Result<QuadratureRule> {
    if n == 0 || n > MAX_DEGREE {
        return Err(Error::invalid(format!("Gauss-Hermite node count must be in 1..={MAX_DEGREE}, got {n}")));
    }
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let off = (k as f64).sqrt();
        jacobi[(k - 1, k)] = off;
        jacobi[(k, k - 1)] = off;
    }
    let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.total_cmp(b));

    let mut weights = Vec::with_capacity(n);
    for r in nodes.iter_mut() {
        let mut step = f64::INFINITY;
        for _ in 0..4 {
            let h = hermite_table(HermiteKind::Normalized, n, *r);
            // He_n / He_n' = h_n / (sqrt(n) h_{n-1})
            step = h[n] / ((n as f64).sqrt() * h[n - 1]);
            *r -= step;
            if step.abs() < 1e-14 * r.abs().max(1.0) {
                break;
            }
        }
        if !(step.abs() < 1e-12 * r.abs().max(1.0)) {
            return Err(Error::NoConvergence { what: "Gauss-Hermite root polish", residual: step.abs() });
        }
        let h = hermite_table(HermiteKind::Normalized, n - 1, *r);
        weights.push(1.0 / h.iter().map(|v| v * v).sum::<f64>());
    }
    // symmetry of the rule is exact in exact arithmetic; enforce it numerically
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let node = 0.5 * (nodes[j] - nodes[i]);
        let weight = 0.5 * (weights[i] + weights[j]);
        nodes[i] = -node;
        nodes[j] = node;
        weights[i] = weight;
        weights[j] = weight;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(QuadratureRule { nodes, weights })
}

/// `n` distinct reals.
#[derive(Debug, Clone, PartialEq)]
pub struct PointConfig {
    points: Vec<f64>,
}

impl PointConfig {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        Self::with_min_gap(points, DEFAULT_MIN_GAP)
    }

    pub fn with_min_gap(points: Vec<f64>, min_gap: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("point configuration is empty"));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("point configuration has non-finite entries"));
        }
        let gap = min_pairwise_gap(&points);
        if gap <= min_gap {
            return Err(Error::CoincidentPoints { gap, tol: min_gap });
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.points
    }
}

fn min_pairwise_gap(points: &[f64]) -> f64 {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    sorted.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

/// `[e_0(u), ..., e_n(u)]`.
pub fn elementary_symmetric(u: &[f64]) -> Vec<f64> {
    let mut e = vec![0.0; u.len() + 1];
    e[0] = 1.0;
    for (m, &x) in u.iter().enumerate() {
        for j in (1..=m + 1).rev() {
            e[j] += x * e[j - 1];
        }
    }
    e
}

/// `Q(u) = sum_i (2i-1)!! e_{n-2i}(u)`, the Gaussian expectation of `prod (u_i + z)`.
pub fn sym_poly_q_slice(u: &[f64]) -> f64 {
    let n = u.len();
    let e = elementary_symmetric(u);
    (0..=n / 2).map(|i| double_factorial(2 * i as i64 - 1) * e[n - 2 * i]).sum()
}

pub fn sym_poly_q(u: &PointConfig) -> f64 {
    sym_poly_q_slice(u.points())
}

/// `v(u)_i = Q(u without u_i) / prod_{j != i} (u_j - u_i)`.
///
/// Solves `sum_i He_k(u_i) v_i = [k == 0]` for `k < n`.
pub fn vandermonde_weights(u: &PointConfig) -> Vec<f64> {
    vandermonde_weights_slice(u.points())
}

pub(crate) fn vandermonde_weights_slice(u: &[f64]) -> Vec<f64> {
    let n = u.len();
    let mut rest = Vec::with_capacity(n.saturating_sub(1));
    (0..n)
        .map(|i| {
            rest.clear();
            rest.extend(u.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &x)| x));
            let denom: f64 = rest.iter().map(|&x| x - u[i]).product();
            sym_poly_q_slice(&rest) / denom
        })
        .collect()
}
