//! Gibbs sampler for the linear model under the effect fusion prior.
//!
//! One sweep runs, in this order:
//! 1. `beta | sigma2, delta, tau2, y` (Gaussian, full dimension),
//! 2. `sigma2 | beta, y` (inverse gamma),
//! 3. `tau2_h | beta_h, delta_h` for every covariate (inverse gamma),
//! 4. `G0_h | tau2_h` for covariates with a hyperprior on `G0` (gamma),
//! 5. `delta_h | beta_h, tau2_h`, every non-frozen pair independently,
//! 6. refresh of the prior precision blocks `Q_h(delta_h) / (gamma_h tau2_h)`.

mod draws;
mod iat;
mod steps;

pub use draws::{spec_hash, DrawsFormat, DrawsMeta, PosteriorDraws};
pub use iat::{integrated_autocorrelation_time, IatStats, IatSummary};
pub use steps::{
    beta_conditional, sample_beta, sample_delta, sample_g0, sample_sigma2, sample_tau2, update_prior_covariance,
};

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::{CovariateSpec, DesignMatrix};
use crate::error::{FusionError, Result};
use crate::exec::Exec;
use crate::prior::{HyperParams, IndicatorState};
use crate::rng::{self, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub n_burnin: usize,
    pub n_iter: usize,
    /// Leading burn-in sweeps with every indicator held at 1.
    pub unrestricted_warm_start: usize,
    pub seed: u64,
    pub thinning: usize,
    /// Prior variance of the intercept.
    pub m0: f64,
    /// Inverse-gamma prior on `sigma2`; `s0 = S0 = 0` is `p(sigma2) ∝ 1/sigma2`.
    pub s0: f64,
    #[serde(rename = "S0")]
    pub big_s0: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_burnin: 5000,
            n_iter: 10_000,
            unrestricted_warm_start: 500,
            seed: 1,
            thinning: 1,
            m0: 10_000.0,
            s0: 0.0,
            big_s0: 0.0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iter == 0 {
            return Err(FusionError::Config("n_iter must be positive".into()));
        }
        if self.thinning == 0 {
            return Err(FusionError::Config("thinning must be at least 1".into()));
        }
        if self.unrestricted_warm_start > self.n_burnin {
            return Err(FusionError::Config("unrestricted_warm_start cannot exceed n_burnin".into()));
        }
        if !(self.m0 > 0.0) || self.s0 < 0.0 || self.big_s0 < 0.0 {
            return Err(FusionError::Config("need m0 > 0 and s0, S0 >= 0".into()));
        }
        Ok(())
    }

    pub fn n_kept(&self) -> usize {
        self.n_iter / self.thinning
    }
}

/// Data plus prior specification, with the cross products precomputed.
#[derive(Debug, Clone)]
pub struct Model {
    pub(crate) x: DMatrix<f64>,
    pub(crate) y: DVector<f64>,
    pub(crate) specs: Vec<CovariateSpec>,
    pub(crate) hypers: Vec<HyperParams>,
    pub(crate) blocks: Vec<Range<usize>>,
    pub(crate) xtx: DMatrix<f64>,
    pub(crate) xty: DVector<f64>,
    pub(crate) m0: f64,
    pub(crate) s0: f64,
    pub(crate) big_s0: f64,
}

impl Model {
    pub fn new(
        design: &DesignMatrix,
        y: &DVector<f64>,
        specs: &[CovariateSpec],
        hypers: &[HyperParams],
        config: &SamplerConfig,
    ) -> Result<Self> {
        if design.nrows() != y.len() {
            return Err(FusionError::Config("response length differs from design rows".into()));
        }
        if design.n_covariates() != specs.len() || specs.len() != hypers.len() {
            return Err(FusionError::Config("one spec and one hyperparameter set per covariate".into()));
        }
        for (h, (spec, b)) in specs.iter().zip(design.blocks()).enumerate() {
            if b.len() != spec.c() {
                return Err(FusionError::Config(format!("block {h} does not match its spec")));
            }
        }
        Self::assemble(design.x.clone(), y.clone(), specs, hypers, design.blocks().to_vec(), config)
    }

    /// Model without observations: every full conditional reduces to the prior.
    pub fn prior_only(specs: &[CovariateSpec], hypers: &[HyperParams], config: &SamplerConfig) -> Result<Self> {
        let mut blocks = Vec::new();
        let mut col = 1;
        for s in specs {
            blocks.push(col..col + s.c());
            col += s.c();
        }
        Self::assemble(DMatrix::zeros(0, col), DVector::zeros(0), specs, hypers, blocks, config)
    }

    fn assemble(
        x: DMatrix<f64>,
        y: DVector<f64>,
        specs: &[CovariateSpec],
        hypers: &[HyperParams],
        blocks: Vec<Range<usize>>,
        config: &SamplerConfig,
    ) -> Result<Self> {
        config.validate()?;
        for h in hypers {
            h.validate()?;
        }
        let xtx = x.tr_mul(&x);
        let xty = x.tr_mul(&y);
        Ok(Model {
            x,
            y,
            specs: specs.to_vec(),
            hypers: hypers.to_vec(),
            blocks,
            xtx,
            xty,
            m0: config.m0,
            s0: config.s0,
            big_s0: config.big_s0,
        })
    }

    /// Replaces the response, keeping the design.
    pub fn set_response(&mut self, y: DVector<f64>) -> Result<()> {
        if y.len() != self.x.nrows() {
            return Err(FusionError::Config("response length differs from design rows".into()));
        }
        self.xty = self.x.tr_mul(&y);
        self.y = y;
        Ok(())
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn specs(&self) -> &[CovariateSpec] {
        &self.specs
    }

    pub fn hypers(&self) -> &[HyperParams] {
        &self.hypers
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn n_coef(&self) -> usize {
        self.x.ncols()
    }

    pub fn block(&self, h: usize) -> Range<usize> {
        self.blocks[h].clone()
    }

    /// Starting state: all indicators 1, `tau2` at its prior mean, `sigma2`
    /// at the sample variance of `y`, `beta = 0`.
    pub fn initial_state(&self) -> Result<ChainState> {
        let mut delta = Vec::with_capacity(self.specs.len());
        for s in &self.specs {
            let mut d = IndicatorState::all_ones(&s.pattern);
            d.freeze(&s.frozen)?;
            delta.push(d);
        }
        let g0_scale: Vec<f64> = self.hypers.iter().map(|h| h.g0_prior.initial()).collect();
        let tau2 = self
            .hypers
            .iter()
            .zip(&g0_scale)
            .map(|(h, &g)| if h.g0 > 1.0 { g / (h.g0 - 1.0) } else { g })
            .collect();
        let n = self.n() as f64;
        let sigma2 = if self.n() >= 2 {
            let m = self.y.mean();
            let v = self.y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
            if v > 0.0 {
                v
            } else {
                1.0
            }
        } else {
            1.0
        };
        let mut state = ChainState {
            beta: DVector::zeros(self.n_coef()),
            sigma2,
            tau2,
            delta,
            g0_scale,
            prior_precision: self.blocks.iter().map(|b| DMatrix::zeros(b.len(), b.len())).collect(),
        };
        update_prior_covariance(self, &mut state);
        Ok(state)
    }
}

/// Current values of all unknowns plus the derived prior precision blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    /// Intercept followed by the level effects in design order.
    pub beta: DVector<f64>,
    pub sigma2: f64,
    pub tau2: Vec<f64>,
    pub delta: Vec<IndicatorState>,
    /// Current `G0_h` (constant unless a hyperprior is set).
    pub g0_scale: Vec<f64>,
    /// `Q_h(delta_h) / (gamma_h tau2_h)` per covariate.
    pub prior_precision: Vec<DMatrix<f64>>,
}

/// Labels for the six sampling steps, reported through [`Sampler::sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Beta,
    Sigma2,
    Tau2,
    G0,
    Delta,
    PriorCovariance,
}

/// A single chain.
pub struct Sampler<'m> {
    model: &'m Model,
    pub state: ChainState,
    rng: StreamRng,
}

impl<'m> Sampler<'m> {
    pub fn new(model: &'m Model, seed: u64, chain: u64) -> Result<Self> {
        Ok(Sampler {
            model,
            state: model.initial_state()?,
            rng: rng::stream(seed, &[rng::tag::CHAIN, chain]),
        })
    }

    /// One sweep. With `update_delta = false` the indicators are held fixed
    /// (warm start). `trace` sees each step as it completes.
    pub fn sweep(&mut self, update_delta: bool, mut trace: impl FnMut(Step)) -> Result<()> {
        let (m, s, g) = (self.model, &mut self.state, &mut self.rng);
        sample_beta(m, s, g)?;
        trace(Step::Beta);
        sample_sigma2(m, s, g)?;
        trace(Step::Sigma2);
        sample_tau2(m, s, g);
        trace(Step::Tau2);
        sample_g0(m, s, g);
        trace(Step::G0);
        if update_delta {
            sample_delta(m, s, g);
        }
        trace(Step::Delta);
        update_prior_covariance(m, s);
        trace(Step::PriorCovariance);
        Ok(())
    }

    pub fn rng(&mut self) -> &mut StreamRng {
        &mut self.rng
    }
}

/// Runs warm start, burn-in and `n_iter` kept sweeps (thinned) of chain
/// `chain`. Deterministic given `config.seed` and `chain`.
pub fn run_chain(model: &Model, config: &SamplerConfig, chain: u64) -> Result<PosteriorDraws> {
    config.validate()?;
    let mut sampler = Sampler::new(model, config.seed, chain)?;
    let mut draws = PosteriorDraws::with_capacity(DrawsMeta::new(model, config, chain), config.n_kept());
    let total = config.n_burnin + config.n_iter;
    for sweep in 0..total {
        let update_delta = sweep >= config.unrestricted_warm_start;
        sampler
            .sweep(update_delta, |_| {})
            .map_err(|e| FusionError::Sweep {
                sweep,
                source: Box::new(e),
            })?;
        if sweep >= config.n_burnin && (sweep - config.n_burnin + 1) % config.thinning == 0 {
            draws.push(&sampler.state);
        }
    }
    Ok(draws)
}

/// Independent chains `0..n_chains`, each on its own stream.
pub fn run_chains(model: &Model, config: &SamplerConfig, n_chains: usize, exec: Exec) -> Result<Vec<PosteriorDraws>> {
    exec.try_map(n_chains, |c| run_chain(model, config, c as u64))
}
