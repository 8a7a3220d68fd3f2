//! The effect fusion prior.
//!
//! For one covariate with levels `0..=c` the level effects get the prior
//!
//! ```text
//! beta | delta, tau2 ~ N(0, gamma * tau2 * Q(delta)^-1)
//! tau2               ~ InvGamma(g0, G0)
//! p(delta)           ∝ |Q(delta)|^(-1/2) * r^(#zeros(delta) / 2)
//! ```
//!
//! where `Q(delta)` is a grounded graph Laplacian over the fusion pattern with
//! edge weight `kappa = 1` (slab, `delta = 1`) or `kappa = r` (spike,
//! `delta = 0`). The determinant in `p(delta)` cancels against the Normal
//! normalizer, so conditional on `tau2` the pairs `(theta_kj, delta_kj)` are
//! independent.

mod indicator;
mod simulate;
mod structure;

pub use indicator::{
    conditional_delta_probability, fusion_probability, fusion_probability_curve,
    indicator_prior_is_uniform, log_indicator_weight, log_prior_odds_by_determinant,
    log_prior_odds_null_vs_full,
};
pub use simulate::{concentration_check, simulate_prior, ConcentrationCheck, PriorDraws};
pub use structure::{
    baseline_swap_matrix, build_structure_matrix, change_baseline, fill_structure_matrix,
    partial_moments, quadratic_form_by_pairs, relabel_baseline, structure_matrix_via_restriction, PartialMoments, StructureMatrix,
};

use serde::{Deserialize, Serialize};

use crate::design::{FusionPattern, ScaleType};
use crate::error::{FusionError, Result};

/// Prior on the scale `G0` of the inverse-gamma prior on `tau2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum G0Prior {
    Fixed(f64),
    /// `G0 ~ Exp` with the given mean.
    Exponential { mean: f64 },
}

impl G0Prior {
    /// Value used when the chain starts.
    pub fn initial(&self) -> f64 {
        match *self {
            G0Prior::Fixed(g) => g,
            G0Prior::Exponential { mean } => mean,
        }
    }
}

/// Per-covariate hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Precision ratio between spike and slab.
    pub r: f64,
    /// Shape `g0` of the inverse-gamma prior on `tau2`.
    pub g0: f64,
    /// Scale `G0` of the inverse-gamma prior on `tau2`.
    pub g0_prior: G0Prior,
}

pub const DEFAULT_R: f64 = 20_000.0;
pub const DEFAULT_G0_SHAPE: f64 = 5.0;

impl HyperParams {
    /// `g0 = 5`, `r = 2e4`; `G0 = 2` for nominal and `G0 = 20` otherwise.
    pub fn default_for(scale: ScaleType) -> Self {
        let g = match scale {
            ScaleType::Nominal => 2.0,
            ScaleType::Ordinal | ScaleType::Selection => 20.0,
        };
        HyperParams {
            r: DEFAULT_R,
            g0: DEFAULT_G0_SHAPE,
            g0_prior: G0Prior::Fixed(g),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r > 1.0 && self.r.is_finite()) {
            return Err(FusionError::Config(format!("r must exceed 1, got {}", self.r)));
        }
        if !(self.g0 > 0.0) {
            return Err(FusionError::Config(format!("g0 must be positive, got {}", self.g0)));
        }
        match self.g0_prior {
            G0Prior::Fixed(g) if !(g > 0.0) => {
                Err(FusionError::Config(format!("G0 must be positive, got {g}")))
            }
            G0Prior::Exponential { mean } if !(mean > 0.0) => Err(FusionError::Config(format!(
                "G0 hyperprior mean must be positive, got {mean}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Binary indicators over the pairs of a fusion pattern, in pattern order.
/// `true` (1) means the pair's difference is drawn from the slab.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IndicatorState {
    pattern: FusionPattern,
    bits: Vec<bool>,
    frozen: Vec<bool>,
}

impl IndicatorState {
    pub fn all_ones(pattern: &FusionPattern) -> Self {
        IndicatorState {
            pattern: pattern.clone(),
            bits: vec![true; pattern.len()],
            frozen: vec![false; pattern.len()],
        }
    }

    pub fn from_bits(pattern: &FusionPattern, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != pattern.len() {
            return Err(FusionError::PatternMismatch);
        }
        Ok(IndicatorState {
            pattern: pattern.clone(),
            bits,
            frozen: vec![false; pattern.len()],
        })
    }

    /// Bits taken from the low `d` bits of `mask` (bit `i` ↔ pair `i`).
    pub fn from_mask(pattern: &FusionPattern, mask: u64) -> Self {
        let bits = (0..pattern.len()).map(|i| mask >> i & 1 == 1).collect();
        IndicatorState {
            pattern: pattern.clone(),
            bits,
            frozen: vec![false; pattern.len()],
        }
    }

    /// Marks pairs as soft-restricted: their bit is set to 1 and never resampled.
    pub fn freeze(&mut self, pairs: &[(usize, usize)]) -> Result<()> {
        for &(k, j) in pairs {
            let i = self.pattern.index_of(k, j).ok_or(FusionError::PatternMismatch)?;
            self.frozen[i] = true;
            self.bits[i] = true;
        }
        Ok(())
    }

    pub fn pattern(&self) -> &FusionPattern {
        &self.pattern
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn is_frozen(&self, i: usize) -> bool {
        self.frozen[i]
    }

    pub fn get(&self, k: usize, j: usize) -> Option<bool> {
        self.pattern.index_of(k, j).map(|i| self.bits[i])
    }

    pub fn set(&mut self, k: usize, j: usize, value: bool) -> Result<()> {
        let i = self.pattern.index_of(k, j).ok_or(FusionError::PatternMismatch)?;
        if self.frozen[i] && !value {
            return Err(FusionError::Config(format!("pair ({k}, {j}) is frozen at 1")));
        }
        self.bits[i] = value;
        Ok(())
    }

    /// Sets bit `i` directly; frozen bits are left untouched.
    pub(crate) fn set_index(&mut self, i: usize, value: bool) {
        if !self.frozen[i] {
            self.bits[i] = value;
        }
    }

    pub fn reset_to_ones(&mut self) {
        self.bits.iter_mut().for_each(|b| *b = true);
    }

    pub fn count_zeros(&self) -> usize {
        self.bits.iter().filter(|b| !**b).count()
    }

    /// `kappa = delta + r (1 - delta)` for pair `i`.
    pub fn kappa(&self, i: usize, r: f64) -> f64 {
        if self.bits[i] {
            1.0
        } else {
            r
        }
    }
}
