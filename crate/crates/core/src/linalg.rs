//! Small dense minimum-norm solver (one-sided Jacobi SVD).

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Condition number above which a system counts as rank deficient.
pub const CONDITION_LIMIT: f64 = 1e10;
/// Condition number above which a successful solve carries a warning.
pub const CONDITION_WARN: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct LeastNorm<T> {
    pub x: Vec<T>,
    /// Ratio of the largest to smallest singular value (infinite when rank deficient).
    pub condition: T,
    pub rank: usize,
    /// Euclidean norm of `A x − b`.
    pub residual: T,
    pub warning: Option<String>,
}

/// Singular values and right singular vectors of `a` (rows × cols).
///
/// Returns `(u, sigma, v)` where column `j` of `a·v` is `u[j]`, so `u[j]` has norm `sigma[j]`.
fn jacobi<T: Scalar>(a: &[Vec<T>], cols: usize) -> (Vec<Vec<T>>, Vec<T>, Vec<Vec<T>>) {
    let rows = a.len();
    let mut u: Vec<Vec<T>> = (0..cols).map(|j| (0..rows).map(|i| a[i][j]).collect()).collect();
    let mut v: Vec<Vec<T>> = (0..cols)
        .map(|j| (0..cols).map(|i| if i == j { T::one() } else { T::zero() }).collect())
        .collect();
    let dot = |x: &[T], y: &[T]| x.iter().zip(y).map(|(&p, &q)| p * q).sum::<T>();
    let rotate = |m: &mut Vec<Vec<T>>, p: usize, q: usize, c: T, s: T| {
        for k in 0..m[p].len() {
            let (xp, xq) = (m[p][k], m[q][k]);
            m[p][k] = c * xp - s * xq;
            m[q][k] = s * xp + c * xq;
        }
    };
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha = dot(&u[p], &u[p]);
                let beta = dot(&u[q], &u[q]);
                let gamma = dot(&u[p], &u[q]);
                if gamma == T::zero() || gamma.abs() <= T::epsilon() * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(&mut u, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let sigma = u.iter().map(|col| dot(col, col).sqrt()).collect();
    (u, sigma, v)
}

/// Minimum-norm least-squares solution of `a x = b`.
///
/// Fails with `SingularSystem` when the numerically rank-deficient system
/// has no exact solution.
pub fn solve_min_norm<T: Scalar>(a: &[Vec<T>], b: &[T]) -> Result<LeastNorm<T>> {
    let rows = a.len();
    if rows == 0 || b.len() != rows {
        return Err(Error::DimensionMismatch {
            expected: rows,
            got: b.len(),
        });
    }
    let cols = a[0].len();
    if cols == 0 {
        return Err(Error::InvalidArgument("system has no unknowns".into()));
    }
    if let Some(bad) = a.iter().find(|r| r.len() != cols) {
        return Err(Error::DimensionMismatch {
            expected: cols,
            got: bad.len(),
        });
    }

    let (u, sigma, v) = jacobi(a, cols);
    let smax = sigma.iter().copied().fold(T::zero(), T::max);
    let rel_cut = T::lit(1.0 / CONDITION_LIMIT).max(T::lit(10.0) * T::epsilon());
    let cut = smax * rel_cut;
    let mut x = vec![T::zero(); cols];
    let mut rank = 0;
    let mut smin = T::infinity();
    for j in 0..cols {
        if sigma[j] > cut && sigma[j] > T::zero() {
            rank += 1;
            smin = smin.min(sigma[j]);
            let coef = u[j].iter().zip(b).map(|(&p, &q)| p * q).sum::<T>() / (sigma[j] * sigma[j]);
            for (xi, &vi) in x.iter_mut().zip(&v[j]) {
                *xi = *xi + coef * vi;
            }
        }
    }
    let full = rows.min(cols);
    let condition = if rank < full || rank == 0 { T::infinity() } else { smax / smin };

    let residual = a
        .iter()
        .zip(b)
        .map(|(row, &bi)| {
            let ax: T = row.iter().zip(&x).map(|(&p, &q)| p * q).sum();
            (ax - bi) * (ax - bi)
        })
        .sum::<T>()
        .sqrt();
    let bnorm = b.iter().map(|&q| q * q).sum::<T>().sqrt();
    let tol = T::lit(1e-8).max(T::lit(100.0) * T::epsilon()) * bnorm.max(T::min_positive_value());
    if residual > tol {
        return Err(Error::SingularSystem {
            condition: condition.as_f64(),
            residual: residual.as_f64(),
        });
    }
    let warning = if rank < full {
        Some(format!(
            "rank-deficient system (rank {rank} of {full}); minimum-norm weights returned"
        ))
    } else if condition > T::lit(CONDITION_WARN) {
        Some(format!("ill-conditioned system (condition {:.3e})", condition.as_f64()))
    } else {
        None
    };
    Ok(LeastNorm {
        x,
        condition,
        rank,
        residual,
        warning,
    })
}
