use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;

use super::{ChainState, Model};
use crate::dist;
use crate::error::{FusionError, Result};
use crate::linalg;
use crate::prior::{
    conditional_delta_probability, fill_structure_matrix, quadratic_form_by_pairs, G0Prior,
};

/// Posterior precision `B^-1 = B0^-1 + X'X / sigma2` and mean
/// `b = B X'y / sigma2` of `beta` given the rest, where `B0^-1` is block
/// diagonal with `1/M0` for the intercept and the current prior precision
/// blocks. Returns the Cholesky factor of `B^-1` along with `b`.
pub fn beta_conditional(model: &Model, state: &ChainState) -> Result<(DVector<f64>, Cholesky<f64, Dyn>)> {
    let mut prec: DMatrix<f64> = &model.xtx / state.sigma2;
    prec[(0, 0)] += 1.0 / model.m0;
    for (h, block) in model.blocks.iter().enumerate() {
        let mut view = prec.view_mut((block.start, block.start), (block.len(), block.len()));
        view += &state.prior_precision[h];
    }
    let rhs: DVector<f64> = &model.xty / state.sigma2;
    let chol = linalg::cholesky_with_jitter(prec)?;
    Ok((chol.solve(&rhs), chol))
}

/// `beta ~ N(b, B)`, see [`beta_conditional`].
pub fn sample_beta<R: Rng + ?Sized>(model: &Model, state: &mut ChainState, rng: &mut R) -> Result<()> {
    let (mean, chol) = beta_conditional(model, state)?;
    let z = DVector::from_fn(model.n_coef(), |_, _| dist::std_normal(rng));
    // B^-1 = L L' so L'^-1 z has covariance B
    let noise = chol
        .l_dirty()
        .tr_solve_lower_triangular(&z)
        .ok_or_else(|| FusionError::Factorization("triangular solve in beta step".into()))?;
    state.beta = mean + noise;
    Ok(())
}

/// `sigma2 ~ InvGamma(s0 + n/2, S0 + RSS/2)`. Without observations the
/// value is left unchanged.
pub fn sample_sigma2<R: Rng + ?Sized>(model: &Model, state: &mut ChainState, rng: &mut R) -> Result<()> {
    if model.n() == 0 {
        return Ok(());
    }
    let resid = &model.y - &model.x * &state.beta;
    let rss = resid.norm_squared();
    let shape = model.s0 + model.n() as f64 / 2.0;
    let scale = model.big_s0 + rss / 2.0;
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(FusionError::DegenerateResiduals);
    }
    state.sigma2 = dist::inv_gamma(rng, shape, scale);
    Ok(())
}

/// `tau2_h ~ InvGamma(g0 + c/2, G0 + beta_h' Q beta_h / (2 gamma))`.
pub fn sample_tau2<R: Rng + ?Sized>(model: &Model, state: &mut ChainState, rng: &mut R) {
    for (h, spec) in model.specs.iter().enumerate() {
        let hyper = &model.hypers[h];
        let beta_h = &state.beta.as_slice()[model.blocks[h].clone()];
        let q = quadratic_form_by_pairs(&state.delta[h], hyper.r, beta_h);
        let shape = hyper.g0 + spec.c() as f64 / 2.0;
        let scale = state.g0_scale[h] + q / (2.0 * spec.gamma());
        state.tau2[h] = dist::inv_gamma(rng, shape, scale);
    }
}

/// `G0_h ~ Gamma(g0 + 1, rate = 1/lambda + 1/tau2_h)` for covariates with an
/// exponential hyperprior of mean `lambda`; fixed `G0` draws nothing.
pub fn sample_g0<R: Rng + ?Sized>(model: &Model, state: &mut ChainState, rng: &mut R) {
    for (h, hyper) in model.hypers.iter().enumerate() {
        if let G0Prior::Exponential { mean } = hyper.g0_prior {
            let rate = 1.0 / mean + 1.0 / state.tau2[h];
            state.g0_scale[h] = dist::gamma_rate(rng, hyper.g0 + 1.0, rate);
        }
    }
}

/// Each non-frozen indicator independently, in covariate then pattern order,
/// one uniform per pair.
pub fn sample_delta<R: Rng + ?Sized>(model: &Model, state: &mut ChainState, rng: &mut R) {
    for (h, spec) in model.specs.iter().enumerate() {
        let r = model.hypers[h].r;
        let gamma = spec.gamma();
        let tau2 = state.tau2[h];
        let beta_h = &state.beta.as_slice()[model.blocks[h].clone()];
        let level = |k: usize| if k == 0 { 0.0 } else { beta_h[k - 1] };
        let delta = &mut state.delta[h];
        for (i, &(k, j)) in spec.pattern.pairs().iter().enumerate() {
            if delta.is_frozen(i) {
                continue;
            }
            let p1 = conditional_delta_probability(level(k) - level(j), tau2, gamma, r);
            let u: f64 = rng.random();
            delta.set_index(i, u < p1);
        }
    }
}

/// Refreshes the prior blocks. They are kept as precisions
/// `Q_h(delta_h) / (gamma_h tau2_h)`; the covariance is never formed.
pub fn update_prior_covariance(model: &Model, state: &mut ChainState) {
    for (h, spec) in model.specs.iter().enumerate() {
        let block = &mut state.prior_precision[h];
        fill_structure_matrix(&state.delta[h], model.hypers[h].r, block.as_view_mut());
        *block /= spec.gamma() * state.tau2[h];
    }
}
