use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use super::structure::fill_structure_matrix;
use super::{log_indicator_weight, G0Prior, HyperParams, IndicatorState};
use crate::design::CovariateSpec;
use crate::dist;
use crate::error::{FusionError, Result};
use crate::exec::Exec;
use crate::rng;

const MAX_ENUMERATED: usize = 20;

/// Draws from the marginal prior of one covariate's level effects.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorDraws {
    /// One `c`-vector per draw (levels `1..=c`).
    pub beta: Vec<Vec<f64>>,
    pub tau2: Vec<f64>,
    /// Indicator configuration of each draw as a bit mask over pattern order.
    pub delta: Vec<u64>,
    /// Normalized `p(delta)` over all masks `0..2^d` (0 for masks that
    /// violate a soft restriction).
    pub delta_probabilities: Vec<f64>,
}

/// Exact normalized prior over indicator configurations.
fn indicator_distribution(spec: &CovariateSpec, r: f64, exec: Exec) -> Result<Vec<f64>> {
    let d = spec.pattern.len();
    if d > MAX_ENUMERATED {
        return Err(FusionError::EnumerationInfeasible(d));
    }
    let frozen_mask: u64 = spec
        .frozen
        .iter()
        .filter_map(|&(k, j)| spec.pattern.index_of(k, j))
        .fold(0, |m, i| m | 1 << i);
    let logs = exec.try_map(1usize << d, |m| {
        let m = m as u64;
        if m & frozen_mask != frozen_mask {
            return Ok(f64::NEG_INFINITY);
        }
        log_indicator_weight(&IndicatorState::from_mask(&spec.pattern, m), r)
    })?;
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// Simulates `(delta, tau2, beta)` from the prior: `delta` from the exactly
/// normalized `p(delta)` (requires `d <= 20`), `tau2 ~ InvGamma(g0, G0)` (with
/// `G0` first drawn from its hyperprior when one is set) and
/// `beta ~ N(0, gamma tau2 Q(delta)^-1)`.
pub fn simulate_prior(
    spec: &CovariateSpec,
    hyper: &HyperParams,
    n_draws: usize,
    seed: u64,
    exec: Exec,
) -> Result<PriorDraws> {
    hyper.validate()?;
    let probs = indicator_distribution(spec, hyper.r, exec)?;
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in &probs {
        acc += p;
        cdf.push(acc);
    }
    let c = spec.c();
    let gamma = spec.gamma();

    let draws = exec.try_map(n_draws, |i| -> Result<(u64, f64, Vec<f64>)> {
        let mut g = rng::stream(seed, &[rng::tag::PRIOR, i as u64]);
        let u: f64 = g.random::<f64>() * acc;
        let mask = cdf.partition_point(|&x| x <= u).min(cdf.len() - 1) as u64;
        let big_g0 = match hyper.g0_prior {
            G0Prior::Fixed(v) => v,
            G0Prior::Exponential { mean } => dist::exponential_mean(&mut g, mean),
        };
        let tau2 = dist::inv_gamma(&mut g, hyper.g0, big_g0);
        let delta = IndicatorState::from_mask(&spec.pattern, mask);
        let mut q = DMatrix::zeros(c, c);
        fill_structure_matrix(&delta, hyper.r, q.as_view_mut());
        let chol = Cholesky::new(q)
            .ok_or_else(|| FusionError::Factorization("structure matrix".into()))?;
        // Q = L L'; beta = sqrt(gamma tau2) L'^-1 z has covariance gamma tau2 Q^-1
        let z = DVector::from_fn(c, |_, _| dist::std_normal(&mut g));
        let beta = chol
            .l_dirty()
            .tr_solve_lower_triangular(&z)
            .ok_or_else(|| FusionError::Factorization("triangular solve".into()))?
            * (gamma * tau2).sqrt();
        Ok((mask, tau2, beta.as_slice().to_vec()))
    })?;

    let mut out = PriorDraws {
        beta: Vec::with_capacity(n_draws),
        tau2: Vec::with_capacity(n_draws),
        delta: Vec::with_capacity(n_draws),
        delta_probabilities: probs,
    };
    for (mask, tau2, beta) in draws {
        out.delta.push(mask);
        out.tau2.push(tau2);
        out.beta.push(beta);
    }
    Ok(out)
}

/// Mass of the `(beta_1, beta_2)` scatter near the axes and the diagonal,
/// against the same bands under independent normals with the draws'
/// marginal variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConcentrationCheck {
    pub band: f64,
    pub prior_mass: f64,
    pub reference_mass: f64,
}

impl ConcentrationCheck {
    pub fn passed(&self) -> bool {
        self.prior_mass > self.reference_mass
    }
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `P(|b1| < a or |b2| < a or |b1 - b2| < a)` for independent
/// `b1 ~ N(0, s1^2)`, `b2 ~ N(0, s2^2)`, computed as one minus the
/// complement, which is integrated over `b1 > a` by Simpson's rule.
fn reference_band_mass(a: f64, s1: f64, s2: f64) -> f64 {
    let interval = |lo: f64, hi: f64| normal_cdf(hi / s2) - normal_cdf(lo / s2);
    // probability that b2 falls in one of the bands at this b1
    let covered = |b1: f64| {
        if b1 >= 2.0 * a {
            interval(-a, a) + interval(b1 - a, b1 + a)
        } else {
            interval(-a, b1 + a)
        }
    };
    let density = |b1: f64| (-0.5 * (b1 / s1).powi(2)).exp() / (s1 * (2.0 * std::f64::consts::PI).sqrt());
    let f = |b1: f64| density(b1) * (1.0 - covered(b1)).max(0.0);
    let n = 4000;
    let h = 12.0 * s1 / n as f64;
    let mut acc = f(a) + f(a + n as f64 * h);
    for i in 1..n {
        acc += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    // symmetric in b1
    1.0 - 2.0 * acc * h / 3.0
}

/// Concentration of the first two level effects of `draws` within `band`.
pub fn concentration_check(draws: &PriorDraws, band: f64) -> Result<ConcentrationCheck> {
    let n = draws.beta.len();
    if n < 2 || draws.beta[0].len() < 2 {
        return Err(FusionError::Config(
            "concentration check needs at least two draws of two effects".into(),
        ));
    }
    let var = |k: usize| {
        let m = draws.beta.iter().map(|b| b[k]).sum::<f64>() / n as f64;
        draws.beta.iter().map(|b| (b[k] - m).powi(2)).sum::<f64>() / (n - 1) as f64
    };
    let hits = draws
        .beta
        .iter()
        .filter(|b| b[0].abs() < band || b[1].abs() < band || (b[0] - b[1]).abs() < band)
        .count();
    Ok(ConcentrationCheck {
        band,
        prior_mass: hits as f64 / n as f64,
        reference_mass: reference_band_mass(band, var(0).sqrt(), var(1).sqrt()),
    })
}
