//! Hermite-tensor contractions in `R^d`.
//!
//! All contractions here are on the unnormalized `He` scale. Estimators that
//! need `h_k = He_k / sqrt(k!)` apply the factor once when they build an
//! accumulator.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hermite::{chi2_poly, eval_hermite, ln_factorial, HermiteKind};

/// Entry cap for [`dense_hermite_tensor`].
pub const DENSE_ENTRY_LIMIT: u128 = 10_000_000;

/// Rows per work item in parallel reductions. Fixed so that the summation
/// order, and therefore every bit of the result, is independent of the
/// number of worker threads.
pub const CHUNK_ROWS: usize = 512;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Scales `v` to unit length and returns the original norm.
pub fn normalize(v: &mut [f64]) -> f64 {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// `He_k(x)[v^{⊗(k-1)}] = x He_{k-1}(x·v) − (k−1) v He_{k-2}(x·v)`.
pub fn power_step_contract(x: &[f64], v: &[f64], k: usize) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::invalid(format!("power step needs k >= 2, got {k}")));
    }
    if x.len() != v.len() {
        return Err(Error::invalid("power step: dimension mismatch"));
    }
    if (norm(v) - 1.0).abs() > 1e-8 {
        return Err(Error::invalid("power step: v must be a unit vector"));
    }
    let t = dot(x, v);
    let a = eval_hermite(HermiteKind::Unnormalized, k - 1, t);
    let b = (k - 1) as f64 * eval_hermite(HermiteKind::Unnormalized, k - 2, t);
    Ok(x.iter().zip(v).map(|(xi, vi)| a * xi - b * vi).collect())
}

/// Result of contracting `He_k(x)` against as many identities as possible.
#[derive(Debug, Clone, PartialEq)]
pub enum PartialTrace {
    /// Odd `k = 2j+1`: the vector `p_j^{(d+2)}(|x|²) x`.
    Vector(Vec<f64>),
    /// Even `k = 2j+2`: the matrix `a x xᵀ − b I`, kept implicit.
    Matrix { a: f64, b: f64 },
}

/// `He_k(x)[I^{⊗⌊(k−1)/2⌋}]` in closed form.
pub fn partial_trace_contract(x: &[f64], k: usize) -> Result<PartialTrace> {
    if k == 0 {
        return Err(Error::invalid("partial trace needs k >= 1"));
    }
    let d = x.len();
    let r = dot(x, x);
    if k % 2 == 1 {
        let c = chi2_poly((k - 1) / 2, d + 2, r);
        Ok(PartialTrace::Vector(x.iter().map(|xi| c * xi).collect()))
    } else {
        let j = (k - 2) / 2;
        Ok(PartialTrace::Matrix { a: chi2_poly(j, d + 4, r), b: chi2_poly(j, d + 2, r) })
    }
}

/// Dense symmetric tensor in row-major index order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    pub dim: usize,
    pub order: usize,
    pub data: Vec<f64>,
}

impl DenseTensor {
    fn strides(&self) -> usize {
        self.dim.pow(self.order.saturating_sub(1) as u32)
    }

    /// Contracts the leading index with `v`.
    pub fn contract_vector(&self, v: &[f64]) -> DenseTensor {
        assert!(self.order >= 1 && v.len() == self.dim);
        let block = self.strides();
        let mut data = vec![0.0; block];
        for (i, vi) in v.iter().enumerate() {
            let slab = &self.data[i * block..(i + 1) * block];
            data.iter_mut().zip(slab).for_each(|(o, s)| *o += vi * s);
        }
        DenseTensor { dim: self.dim, order: self.order - 1, data }
    }

    /// Contracts the two leading indices with the identity.
    pub fn contract_identity(&self) -> DenseTensor {
        assert!(self.order >= 2);
        let d = self.dim;
        let block = d.pow(self.order as u32 - 2);
        let mut data = vec![0.0; block];
        for i in 0..d {
            let slab = &self.data[(i * d + i) * block..(i * d + i + 1) * block];
            data.iter_mut().zip(slab).for_each(|(o, s)| *o += s);
        }
        DenseTensor { dim: d, order: self.order - 2, data }
    }

    pub fn scalar(&self) -> Option<f64> {
        (self.order == 0).then(|| self.data[0])
    }
}

/// Materializes `He_k(x)`: the entry at `(i_1..i_k)` is `prod_j He_{m_j}(x_j)`
/// where `m_j` counts occurrences of `j` in the index. Test oracle only.
pub fn dense_hermite_tensor(x: &[f64], k: usize) -> Result<DenseTensor> {
    let d = x.len();
    let entries = (d as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
    if entries > DENSE_ENTRY_LIMIT {
        return Err(Error::SizeGuard { entries, limit: DENSE_ENTRY_LIMIT });
    }
    let table: Vec<Vec<f64>> =
        x.iter().map(|&xi| crate::hermite::hermite_table(HermiteKind::Unnormalized, k, xi)).collect();
    let total = entries as usize;
    let mut data = Vec::with_capacity(total);
    let mut index = vec![0usize; k];
    let mut counts = vec![0usize; d];
    for _ in 0..total {
        counts.iter_mut().for_each(|c| *c = 0);
        index.iter().for_each(|&i| counts[i] += 1);
        data.push(counts.iter().enumerate().map(|(j, &m)| table[j][m]).product());
        for slot in index.iter_mut().rev() {
            *slot += 1;
            if *slot < d {
                break;
            }
            *slot = 0;
        }
    }
    Ok(DenseTensor { dim: d, order: k, data })
}

/// Symmetric operator `u ↦ M u` on `R^d`.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, v: &[f64], out: &mut [f64]);
}

/// Dense symmetric matrix as an operator.
impl LinearOperator for nalgebra::DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let r = self * nalgebra::DVector::from_column_slice(v);
        out.copy_from_slice(r.as_slice());
    }
}

/// Implicit `M = (1/n) Σ y_i (a_i x_i x_iᵀ − b_i I)`, borrowing the rows.
#[derive(Debug, Clone)]
pub struct PartialTraceAccum<'a> {
    d: usize,
    rows: &'a [f64],
    labels: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl<'a> PartialTraceAccum<'a> {
    /// Explicit entries; `rows` is row-major `n × d`.
    pub fn from_parts(d: usize, rows: &'a [f64], labels: Vec<f64>, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let n = labels.len();
        if d == 0 || rows.len() != n * d || a.len() != n || b.len() != n {
            return Err(Error::invalid("partial-trace accumulator: inconsistent sizes"));
        }
        if n == 0 {
            return Err(Error::invalid("partial-trace accumulator needs n >= 1"));
        }
        Ok(Self { d, rows, labels, a, b })
    }

    /// Accumulator of `y_i h_k(x_i)[I^{⊗(k−2)/2}]` for even `k`.
    /// The `1/sqrt(k!)` normalization is folded into `a_i, b_i` here.
    pub fn hermite(d: usize, rows: &'a [f64], labels: &[f64], k: usize) -> Result<Self> {
        if k < 2 || k % 2 == 1 {
            return Err(Error::invalid(format!("partial-trace matrix needs even k >= 2, got {k}")));
        }
        if d == 0 || rows.len() != labels.len() * d {
            return Err(Error::invalid("partial-trace accumulator: inconsistent sizes"));
        }
        let scale = (-0.5 * ln_factorial(k)).exp();
        let j = (k - 2) / 2;
        let (a, b): (Vec<f64>, Vec<f64>) = rows
            .par_chunks(d)
            .map(|x| {
                let r = dot(x, x);
                (scale * chi2_poly(j, d + 4, r), scale * chi2_poly(j, d + 2, r))
            })
            .unzip();
        Self::from_parts(d, rows, labels.to_vec(), a, b)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Scales every label, e.g. to flip the sign of the signal.
    pub fn scale_labels(&mut self, c: f64) {
        self.labels.iter_mut().for_each(|y| *y *= c);
    }

    /// `d × d` dense copy (test oracle / small instances).
    pub fn densify(&self) -> nalgebra::DMatrix<f64> {
        let d = self.d;
        let n = self.len() as f64;
        let mut m = nalgebra::DMatrix::<f64>::zeros(d, d);
        let mut shift = 0.0;
        for (i, x) in self.rows.chunks(d).enumerate() {
            let c = self.labels[i] * self.a[i] / n;
            shift += self.labels[i] * self.b[i] / n;
            for p in 0..d {
                for q in 0..d {
                    m[(p, q)] += c * x[p] * x[q];
                }
            }
        }
        for p in 0..d {
            m[(p, p)] -= shift;
        }
        m
    }
}

impl LinearOperator for PartialTraceAccum<'_> {
    fn dim(&self) -> usize {
        self.d
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let d = self.d;
        let n = self.len();
        let partials: Vec<(Vec<f64>, f64)> = (0..n.div_ceil(CHUNK_ROWS))
            .into_par_iter()
            .map(|c| {
                let lo = c * CHUNK_ROWS;
                let hi = (lo + CHUNK_ROWS).min(n);
                let mut acc = vec![0.0; d];
                let mut shift = 0.0;
                for i in lo..hi {
                    let x = &self.rows[i * d..(i + 1) * d];
                    let coef = self.labels[i] * self.a[i] * dot(x, v);
                    acc.iter_mut().zip(x).for_each(|(o, xi)| *o += coef * xi);
                    shift += self.labels[i] * self.b[i];
                }
                (acc, shift)
            })
            .collect();
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut shift = 0.0;
        for (acc, s) in &partials {
            out.iter_mut().zip(acc).for_each(|(o, a)| *o += a);
            shift += s;
        }
        let inv_n = 1.0 / n as f64;
        out.iter_mut().zip(v).for_each(|(o, vi)| *o = (*o - shift * vi) * inv_n);
    }
}

/// Ordered, thread-count independent sum of per-row vectors:
/// `Σ_i f(i, row_i)` over row-major `rows`.
pub fn chunked_row_sum<F>(rows: &[f64], d: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &[f64], &mut [f64]) + Sync,
{
    let n = rows.len() / d;
    let partials: Vec<Vec<f64>> = (0..n.div_ceil(CHUNK_ROWS))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK_ROWS;
            let hi = (lo + CHUNK_ROWS).min(n);
            let mut acc = vec![0.0; d];
            for i in lo..hi {
                f(i, &rows[i * d..(i + 1) * d], &mut acc);
            }
            acc
        })
        .collect();
    let mut out = vec![0.0; d];
    for p in &partials {
        out.iter_mut().zip(p).for_each(|(o, a)| *o += a);
    }
    out
}
