use nalgebra::{Cholesky, DMatrix};

use super::structure::fill_structure_matrix;
use super::IndicatorState;
use crate::design::{CovariateSpec, FusionPattern, ScaleType};
use crate::error::{FusionError, Result};
use crate::linalg;
use crate::rng;

/// Bound on `|log L|` before exponentiation.
const LOG_CLAMP: f64 = 700.0;

fn log_det_q(delta: &IndicatorState, r: f64) -> Result<f64> {
    let c = delta.pattern().c();
    let mut q = DMatrix::zeros(c, c);
    fill_structure_matrix(delta, r, q.as_view_mut());
    let chol = Cholesky::new(q)
        .ok_or_else(|| FusionError::Factorization("structure matrix not positive definite".into()))?;
    Ok(linalg::log_det(&chol))
}

/// Unnormalized `log p(delta) = -log|Q(delta)|/2 + (#zeros/2) log r`.
pub fn log_indicator_weight(delta: &IndicatorState, r: f64) -> Result<f64> {
    Ok(-0.5 * log_det_q(delta, r)? + 0.5 * delta.count_zeros() as f64 * r.ln())
}

/// Closed form `c(c-1)/2 * log r` for `log p(delta = 0) / p(delta = 1)` under
/// the unrestricted pattern.
///
/// Note: with `d = c(c+1)/2` pairs the determinant ratio
/// `r^(-c/2) r^(d/2)` evaluates to `r^(c(c-1)/4)`, half this exponent; see
/// [`log_prior_odds_by_determinant`] for the value implied by `p(delta)`.
pub fn log_prior_odds_null_vs_full(c: usize, r: f64) -> f64 {
    let c = c as f64;
    c * (c - 1.0) / 2.0 * r.ln()
}

/// The same odds evaluated through the determinants of `Q(1)` and `Q(0)`.
pub fn log_prior_odds_by_determinant(c: usize, r: f64) -> Result<f64> {
    let pattern = FusionPattern::nominal(c);
    let ones = IndicatorState::all_ones(&pattern);
    let zeros = IndicatorState::from_mask(&pattern, 0);
    Ok(log_indicator_weight(&zeros, r)? - log_indicator_weight(&ones, r)?)
}

/// Checks that `|Q(delta)|^(-1/2) r^(#zeros/2)` does not depend on `delta`
/// for restricted patterns; returns its relative spread `(max - min) / max`.
///
/// All `2^c` configurations are visited for `c <= 12`, otherwise 512 seeded
/// random ones.
pub fn indicator_prior_is_uniform(spec: &CovariateSpec, r: f64) -> Result<f64> {
    if spec.scale == ScaleType::Nominal {
        return Err(FusionError::UniformityRequiresRestricted);
    }
    let d = spec.pattern.len();
    let masks: Vec<u64> = if d <= 12 {
        (0..1u64 << d).collect()
    } else {
        use rand::Rng;
        let mut g = rng::stream(0, &[rng::tag::UNIFORMITY, d as u64]);
        (0..512)
            .map(|_| g.random::<u64>() & ((1u64 << d.min(63)) - 1))
            .collect()
    };
    let logs = masks
        .iter()
        .map(|&m| log_indicator_weight(&IndicatorState::from_mask(&spec.pattern, m), r))
        .collect::<Result<Vec<_>>>()?;
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = logs.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(1.0 - (min - max).exp())
}

/// `p(delta_kj = 1 | theta, tau2) = 1 / (1 + L)` with
/// `L = sqrt(r) exp(-(r - 1) theta^2 / (2 gamma tau2))`, i.e. the slab
/// `N(0, gamma tau2)` against the spike `N(0, gamma tau2 / r)`.
pub fn conditional_delta_probability(theta: f64, tau2: f64, gamma: f64, r: f64) -> f64 {
    let log_l = 0.5 * r.ln() - (r - 1.0) * theta * theta / (2.0 * gamma * tau2);
    1.0 / (1.0 + log_l.clamp(-LOG_CLAMP, LOG_CLAMP).exp())
}

/// Student-t log kernel with `nu` degrees of freedom (normalizer omitted; it
/// cancels in the spike/slab ratio).
fn t_log_kernel(x: f64, nu: f64) -> f64 {
    -(nu + 1.0) / 2.0 * (x * x / nu).ln_1p()
}

/// Marginal fusion probability `P(delta = 0 | theta)` after integrating out
/// `tau2 ~ InvGamma(g0, G0)`: spike and slab are scaled t with `2 g0` degrees
/// of freedom and scales `sigma / sqrt(r)` and `sigma = sqrt(G0 / g0)`.
pub fn fusion_probability(theta: f64, g0: f64, big_g0: f64, r: f64) -> f64 {
    let sigma = (big_g0 / g0).sqrt();
    let nu = 2.0 * g0;
    let x = theta / sigma;
    let log_ratio = t_log_kernel(x, nu) - 0.5 * r.ln() - t_log_kernel(r.sqrt() * x, nu);
    1.0 / (1.0 + log_ratio.clamp(-LOG_CLAMP, LOG_CLAMP).exp())
}

/// `(theta, P(delta = 0 | theta))` over a grid.
pub fn fusion_probability_curve(grid: &[f64], g0: f64, big_g0: f64, r: f64) -> Vec<(f64, f64)> {
    grid.iter().map(|&t| (t, fusion_probability(t, g0, big_g0, r))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normal_pdf(x: f64, var: f64) -> f64 {
        (-x * x / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    }

    #[test]
    fn delta_probability_at_zero() {
        let p = conditional_delta_probability(0.0, 1.0, 1.0, 1e4);
        assert!((p - 1.0 / 101.0).abs() < 1e-15);
    }

    #[test]
    fn delta_probability_matches_density_ratio() {
        let (theta, tau2, gamma, r) = (0.05, 1.0, 1.5, 20_000.0);
        let slab = normal_pdf(theta, gamma * tau2);
        let spike = normal_pdf(theta, gamma * tau2 / r);
        let direct = slab / (slab + spike);
        let p = conditional_delta_probability(theta, tau2, gamma, r);
        assert!((p - direct).abs() < 1e-12, "{p} vs {direct}");
    }

    #[test]
    fn delta_probability_extremes_are_finite() {
        for &theta in &[0.0, 1e-300, 1.0, 1e3, 1e6] {
            for &r in &[1.5, 1e4, 1e6] {
                let p = conditional_delta_probability(theta, 1.0, 1.0, r);
                assert!(p.is_finite() && (0.0..=1.0).contains(&p));
            }
        }
        assert_eq!(conditional_delta_probability(1e6, 1.0, 1.0, 1e6), 1.0);
        assert!(1.0 - conditional_delta_probability(10.0, 1.0, 1.0, 2e4) < 1e-12);
    }

    #[test]
    fn odds_closed_form() {
        assert!((log_prior_odds_null_vs_full(3, 1e4) - 3.0 * 1e4_f64.ln()).abs() < 1e-12);
        assert_eq!(log_prior_odds_null_vs_full(1, 123.0), 0.0);
    }

    #[test]
    fn odds_by_determinant() {
        // |Q(0)| = r^c |Q(1)| and d = c(c+1)/2 give exponent (d - c)/2 = c(c-1)/4
        for c in 1..=6 {
            for r in [100.0_f64, 2e4] {
                let num = log_prior_odds_by_determinant(c, r).unwrap();
                let cf = c as f64;
                assert!((num - cf * (cf - 1.0) / 4.0 * r.ln()).abs() < 1e-9, "c={c} r={r}");
            }
        }
    }

    #[test]
    fn uniformity_restricted_patterns() {
        let ord = CovariateSpec::with_level_count("o", 5, ScaleType::Ordinal).unwrap();
        assert!(indicator_prior_is_uniform(&ord, 20_000.0).unwrap() < 1e-9);
        let sel = CovariateSpec::with_level_count("s", 6, ScaleType::Selection).unwrap();
        assert!(indicator_prior_is_uniform(&sel, 200.0).unwrap() < 1e-12);
        let nom = CovariateSpec::with_level_count("n", 4, ScaleType::Nominal).unwrap();
        assert!(matches!(
            indicator_prior_is_uniform(&nom, 10.0),
            Err(FusionError::UniformityRequiresRestricted)
        ));
    }

    #[test]
    fn uniformity_sampled_for_long_ordinal() {
        let ord = CovariateSpec::with_level_count("o", 15, ScaleType::Ordinal).unwrap();
        assert!(indicator_prior_is_uniform(&ord, 100.0).unwrap() < 1e-9);
    }

    #[test]
    fn fusion_curve_at_zero_and_monotone() {
        let r: f64 = 20_000.0;
        let grid: Vec<f64> = (0..=200).map(|i| i as f64 * 0.01).collect();
        let curve = fusion_probability_curve(&grid, 5.0, 2.0, r);
        assert!((curve[0].1 - r.sqrt() / (1.0 + r.sqrt())).abs() < 1e-14);
        for w in curve.windows(2) {
            assert!(w[1].1 <= w[0].1 + 1e-15);
        }
    }

    #[test]
    fn fusion_probability_decreases_with_r() {
        let ps: Vec<f64> = [2e3, 2e4, 2e5]
            .iter()
            .map(|&r| fusion_probability(0.5, 5.0, 2.0, r))
            .collect();
        assert!(ps[0] > ps[1] && ps[1] > ps[2], "{ps:?}");
    }
}
