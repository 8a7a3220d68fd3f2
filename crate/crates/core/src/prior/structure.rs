use nalgebra::{Cholesky, DMatrix, DMatrixViewMut};

use super::IndicatorState;
use crate::design::CovariateSpec;
use crate::error::{FusionError, Result};

/// Structure matrix `Q(delta)` of one covariate together with `gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureMatrix {
    pub q: DMatrix<f64>,
    pub gamma: f64,
    pub r: f64,
}

impl StructureMatrix {
    pub fn c(&self) -> usize {
        self.q.nrows()
    }
}

/// Writes `Q(delta)` into `out` (a `c x c` view, overwritten).
///
/// Each fusable pair `(k, j)` contributes `kappa_kj` to `q_kk`, and for
/// `j > 0` also to `q_jj` and `-kappa_kj` to `q_kj = q_jk`.
pub fn fill_structure_matrix(delta: &IndicatorState, r: f64, mut out: DMatrixViewMut<'_, f64>) {
    out.fill(0.0);
    for (i, &(k, j)) in delta.pattern().pairs().iter().enumerate() {
        let kappa = delta.kappa(i, r);
        out[(k - 1, k - 1)] += kappa;
        if j > 0 {
            out[(j - 1, j - 1)] += kappa;
            out[(k - 1, j - 1)] -= kappa;
            out[(j - 1, k - 1)] -= kappa;
        }
    }
}

fn check_inputs(spec: &CovariateSpec, delta: &IndicatorState, r: f64) -> Result<()> {
    if delta.pattern() != &spec.pattern {
        return Err(FusionError::PatternMismatch);
    }
    if !(r > 1.0) {
        return Err(FusionError::Config(format!("r must exceed 1, got {r}")));
    }
    if !spec.pattern.is_connected() {
        return Err(FusionError::SingularStructure(spec.name.clone()));
    }
    Ok(())
}

/// Builds `Q(delta)` and `gamma` for a covariate, verifying positive
/// definiteness.
pub fn build_structure_matrix(
    spec: &CovariateSpec,
    delta: &IndicatorState,
    r: f64,
) -> Result<StructureMatrix> {
    check_inputs(spec, delta, r)?;
    let c = spec.c();
    let mut q = DMatrix::zeros(c, c);
    fill_structure_matrix(delta, r, q.as_view_mut());
    if Cholesky::new(q.clone()).is_none() {
        return Err(FusionError::Factorization(format!(
            "structure matrix of `{}` is not positive definite",
            spec.name
        )));
    }
    Ok(StructureMatrix {
        q,
        gamma: spec.gamma(),
        r,
    })
}

/// Builds `Q(delta)` from the linear restrictions among effect differences:
/// `Q = kappa_0 + U' kappa_rest U`, where row `(k, j)` (`j > 0`) of `U`
/// encodes `theta_kj = theta_k0 - theta_j0`.
pub fn structure_matrix_via_restriction(
    spec: &CovariateSpec,
    delta: &IndicatorState,
    r: f64,
) -> Result<StructureMatrix> {
    check_inputs(spec, delta, r)?;
    let c = spec.c();
    let pairs = spec.pattern.pairs();
    let rest: Vec<usize> = (0..pairs.len()).filter(|&i| pairs[i].1 > 0).collect();

    let mut kappa0 = DMatrix::zeros(c, c);
    for (i, &(k, j)) in pairs.iter().enumerate() {
        if j == 0 {
            kappa0[(k - 1, k - 1)] = delta.kappa(i, r);
        }
    }
    let mut u = DMatrix::zeros(rest.len(), c);
    let mut kappa_rest = DMatrix::zeros(rest.len(), rest.len());
    for (row, &i) in rest.iter().enumerate() {
        let (k, j) = pairs[i];
        u[(row, k - 1)] = 1.0;
        u[(row, j - 1)] = -1.0;
        kappa_rest[(row, row)] = delta.kappa(i, r);
    }
    let q = kappa0 + u.transpose() * kappa_rest * u;
    Ok(StructureMatrix {
        q,
        gamma: spec.gamma(),
        r,
    })
}

/// `sum_{(k,j) in pattern} kappa_kj (beta_k - beta_j)^2` with `beta_0 = 0`;
/// equals `beta' Q(delta) beta`. `beta` holds levels `1..=c`.
pub fn quadratic_form_by_pairs(delta: &IndicatorState, r: f64, beta: &[f64]) -> f64 {
    let level = |k: usize| if k == 0 { 0.0 } else { beta[k - 1] };
    delta
        .pattern()
        .pairs()
        .iter()
        .enumerate()
        .map(|(i, &(k, j))| delta.kappa(i, r) * (level(k) - level(j)).powi(2))
        .sum()
}

/// Matrix `A` with `beta_tilde = A beta` when the baseline moves from level 0
/// to level `b` (`1..=c`): `beta_tilde_k = beta_k - beta_b` for `k != b` and
/// `beta_tilde_b = -beta_b`, the effect of the old baseline. `A` is its own
/// inverse.
pub fn baseline_swap_matrix(c: usize, b: usize) -> DMatrix<f64> {
    assert!((1..=c).contains(&b), "new baseline must be a level in 1..=c");
    let mut a = DMatrix::identity(c, c);
    for k in 0..c {
        a[(k, b - 1)] = -1.0;
    }
    a
}

/// `Q` of the effects relative to baseline `b`: `A'^-1 Q A^-1`.
pub fn change_baseline(q: &DMatrix<f64>, b: usize) -> DMatrix<f64> {
    let a = baseline_swap_matrix(q.nrows(), b);
    // A^-1 = A
    a.transpose() * q * &a
}

/// Indicators after exchanging the labels of levels 0 and `b`, so that pair
/// `(k, j)` of the result carries the indicator of the original pair with
/// `0` and `b` swapped. The pattern must be closed under the swap (true for
/// the unrestricted pattern).
pub fn relabel_baseline(delta: &IndicatorState, b: usize) -> Result<IndicatorState> {
    let pattern = delta.pattern();
    let swap = |l: usize| match l {
        0 => b,
        l if l == b => 0,
        l => l,
    };
    let mut bits = vec![true; pattern.len()];
    for (i, &(k, j)) in pattern.pairs().iter().enumerate() {
        let (sk, sj) = (swap(k), swap(j));
        let src = pattern
            .index_of(sk.max(sj), sk.min(sj))
            .ok_or(FusionError::PatternMismatch)?;
        bits[i] = delta.bits()[src];
    }
    IndicatorState::from_bits(pattern, bits)
}

/// Prior partial precisions and partial correlations of the level effects.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialMoments {
    /// `Prec(beta_k | rest) = q_kk / (gamma tau2)`.
    pub precision: Vec<f64>,
    /// `Corr(beta_k, beta_j | rest) = -q_kj / sqrt(q_kk q_jj)`, unit diagonal.
    pub correlation: DMatrix<f64>,
}

pub fn partial_moments(sm: &StructureMatrix, tau2: f64) -> PartialMoments {
    let c = sm.c();
    let precision = (0..c).map(|k| sm.q[(k, k)] / (sm.gamma * tau2)).collect();
    let correlation = DMatrix::from_fn(c, c, |k, j| {
        if k == j {
            1.0
        } else {
            -sm.q[(k, j)] / (sm.q[(k, k)] * sm.q[(j, j)]).sqrt()
        }
    });
    PartialMoments {
        precision,
        correlation,
    }
}
