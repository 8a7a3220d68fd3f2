//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{FusionError, Result};

/// Cholesky factorization; on failure retries once with `1e-10 * mean(diag)`
/// added to the diagonal.
pub fn cholesky_with_jitter(m: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let n = m.nrows();
    let jitter = 1e-10 * m.diagonal().sum() / n.max(1) as f64;
    match Cholesky::new(m.clone()) {
        Some(c) => Ok(c),
        None => {
            let mut m = m;
            for i in 0..n {
                m[(i, i)] += jitter;
            }
            Cholesky::new(m).ok_or_else(|| {
                FusionError::Factorization(format!(
                    "{n}x{n} matrix not positive definite after jitter"
                ))
            })
        }
    }
}

/// `log |A|` from a Cholesky factor of `A`.
pub fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Rank via singular values, relative tolerance `max(n, p) * eps * s_max`.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    let tol = m.nrows().max(m.ncols()) as f64 * f64::EPSILON * smax;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Residual sum of squares of the least-squares projection of `y` on the
/// column space of `x` (generalized inverse, so rank deficiency is allowed).
pub fn projection_sse(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let tol = x.nrows().max(x.ncols()) as f64 * f64::EPSILON * smax;
    let coef = svd
        .solve(y, tol)
        .map_err(|e| FusionError::Factorization(e.to_string()))?;
    let resid = y - x * coef;
    Ok(resid.norm_squared())
}
