//! Matrix-free Lanczos with full reorthogonalization.

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{stream, Domain};
use crate::tensor::{dot, normalize, LinearOperator};

pub const MAX_KRYLOV: usize = 200;

#[derive(Debug, Clone)]
pub struct EigenEstimate {
    /// Unit eigenvector for the eigenvalue of largest magnitude.
    pub vector: Vec<f64>,
    pub value: f64,
    /// Extreme Ritz values; the one that is not `value` bounds the bulk.
    pub ritz_min: f64,
    pub ritz_max: f64,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
}

impl EigenEstimate {
    /// Largest-magnitude Ritz value on the opposite side of the spectrum.
    pub fn bulk_edge(&self) -> f64 {
        if self.value >= 0.0 {
            self.ritz_min.abs()
        } else {
            self.ritz_max.abs()
        }
    }
}

/// Top eigenpair by absolute value of a symmetric operator.
///
/// `iters` caps the Krylov dimension (also capped by `d` and
/// [`MAX_KRYLOV`]). Convergence means the Ritz residual `|β_m s_m|` fell
/// below `tol · |θ|`; otherwise the best iterate is returned with
/// `converged = false`.
pub fn top_eigvec_abs<O: LinearOperator + ?Sized>(op: &O, iters: usize, tol: f64, seed: u64) -> Result<EigenEstimate> {
    let d = op.dim();
    if d == 0 {
        return Err(Error::invalid("Lanczos on an empty operator"));
    }
    let m_max = iters.min(d).min(MAX_KRYLOV).max(1);
    let mut rng = stream(seed, Domain::Lanczos, d as u64);
    let mut q: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    normalize(&mut q);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m_max);
    let mut alpha = Vec::with_capacity(m_max);
    let mut beta: Vec<f64> = Vec::with_capacity(m_max);
    let mut w = vec![0.0; d];
    let mut best: Option<(Vec<f64>, f64, f64, f64, f64)> = None;
    let mut converged = false;

    for j in 0..m_max {
        op.apply(&q, &mut w);
        let a = dot(&q, &w);
        basis.push(q.clone());
        alpha.push(a);
        // two passes of classical Gram-Schmidt against the whole basis
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&w, b);
                w.iter_mut().zip(b).for_each(|(wi, bi)| *wi -= c * bi);
            }
        }
        let b_next = crate::tensor::norm(&w);

        let m = j + 1;
        let check =
            m == m_max || b_next <= 1e-14 * alpha.iter().fold(0.0f64, |s, x| s.max(x.abs())).max(1e-300) || m % 5 == 0;
        if check {
            let mut t = DMatrix::<f64>::zeros(m, m);
            for i in 0..m {
                t[(i, i)] = alpha[i];
                if i + 1 < m {
                    t[(i, i + 1)] = beta[i];
                    t[(i + 1, i)] = beta[i];
                }
            }
            let eig = SymmetricEigen::new(t);
            let (mut top, mut lo, mut hi) = (0usize, f64::INFINITY, f64::NEG_INFINITY);
            for i in 0..m {
                let th = eig.eigenvalues[i];
                lo = lo.min(th);
                hi = hi.max(th);
                if th.abs() > eig.eigenvalues[top].abs() {
                    top = i;
                }
            }
            let theta = eig.eigenvalues[top];
            let s = eig.eigenvectors.column(top);
            let residual = (b_next * s[m - 1]).abs();
            let mut v = vec![0.0; d];
            for (i, bvec) in basis.iter().enumerate() {
                v.iter_mut().zip(bvec).for_each(|(vi, bi)| *vi += s[i] * bi);
            }
            normalize(&mut v);
            best = Some((v, theta, lo, hi, residual));
            if residual <= tol * theta.abs().max(1e-300) || b_next <= 1e-14 * theta.abs().max(1e-300) {
                converged = true;
                break;
            }
        }
        if b_next == 0.0 {
            break;
        }
        beta.push(b_next);
        q = w.iter().map(|x| x / b_next).collect();
    }

    let (vector, value, ritz_min, ritz_max, residual) = best.expect("at least one Ritz check runs");
    Ok(EigenEstimate { vector, value, ritz_min, ritz_max, converged, iterations: alpha.len(), residual })
}
