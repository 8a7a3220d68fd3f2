use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::Partition;
use crate::design::{CovariateSpec, DesignMatrix};
use crate::dist;
use crate::error::{FusionError, Result};
use crate::linalg;
use crate::rng;

/// Flat-prior refit: `beta ~ N(0, b0 I)` on every coefficient, `sigma2`
/// inverse gamma, sampled by two-block Gibbs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefitConfig {
    pub b0: f64,
    pub n_burnin: usize,
    pub n_iter: usize,
    pub seed: u64,
    pub s0: f64,
    #[serde(rename = "S0")]
    pub big_s0: f64,
    pub hpd_mass: f64,
}

impl Default for RefitConfig {
    fn default() -> Self {
        RefitConfig {
            b0: 10_000.0,
            n_burnin: 1000,
            n_iter: 3000,
            seed: 1,
            s0: 0.0,
            big_s0: 0.0,
            hpd_mass: 0.95,
        }
    }
}

impl RefitConfig {
    fn validate(&self) -> Result<()> {
        if !(self.b0 > 0.0) || self.n_iter == 0 || !(self.hpd_mass > 0.0 && self.hpd_mass < 1.0) {
            return Err(FusionError::Config("refit needs b0 > 0, n_iter > 0, 0 < hpd_mass < 1".into()));
        }
        if self.s0 < 0.0 || self.big_s0 < 0.0 {
            return Err(FusionError::Config("refit needs s0, S0 >= 0".into()));
        }
        Ok(())
    }
}

/// Draws of a flat-prior fit, row-major `n_iter x n_coef`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatFit {
    pub n_coef: usize,
    pub beta: Vec<f64>,
    pub sigma2: Vec<f64>,
}

impl FlatFit {
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.beta.iter().skip(j).step_by(self.n_coef).copied().collect()
    }

    pub fn mean(&self, j: usize) -> f64 {
        let c = self.column(j);
        c.iter().sum::<f64>() / c.len() as f64
    }

    pub fn means(&self) -> Vec<f64> {
        (0..self.n_coef).map(|j| self.mean(j)).collect()
    }
}

/// Two-block Gibbs sampler for `y = X beta + e` under `N(0, b0 I)`.
pub fn flat_prior_fit(x: &DMatrix<f64>, y: &DVector<f64>, config: &RefitConfig) -> Result<FlatFit> {
    config.validate()?;
    let (n, p) = x.shape();
    let xtx = x.tr_mul(x);
    let xty = x.tr_mul(y);
    let mut g = rng::stream(config.seed, &[rng::tag::REFIT]);
    let mut sigma2 = if n >= 2 {
        let m = y.mean();
        let v = y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        if v > 0.0 {
            v
        } else {
            1.0
        }
    } else {
        1.0
    };
    let mut out = FlatFit {
        n_coef: p,
        beta: Vec::with_capacity(config.n_iter * p),
        sigma2: Vec::with_capacity(config.n_iter),
    };
    for sweep in 0..config.n_burnin + config.n_iter {
        let mut prec = &xtx / sigma2;
        for i in 0..p {
            prec[(i, i)] += 1.0 / config.b0;
        }
        let chol = linalg::cholesky_with_jitter(prec)?;
        let mean = chol.solve(&(&xty / sigma2));
        let z = DVector::from_fn(p, |_, _| dist::std_normal(&mut g));
        let beta = mean
            + chol
                .l_dirty()
                .tr_solve_lower_triangular(&z)
                .ok_or_else(|| FusionError::Factorization("refit triangular solve".into()))?;
        let rss = (y - x * &beta).norm_squared();
        let scale = config.big_s0 + rss / 2.0;
        if !(scale > 0.0) {
            return Err(FusionError::DegenerateResiduals);
        }
        sigma2 = dist::inv_gamma(&mut g, config.s0 + n as f64 / 2.0, scale);
        if sweep >= config.n_burnin {
            out.beta.extend(beta.iter());
            out.sigma2.push(sigma2);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefitCoefficient {
    /// `None` for the intercept.
    pub covariate: Option<String>,
    /// Level labels of the fused cluster.
    pub levels: Vec<String>,
    pub mean: f64,
    pub hpd_lower: f64,
    pub hpd_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefitSummary {
    /// Intercept first, then one entry per non-baseline cluster.
    pub coefficients: Vec<RefitCoefficient>,
    pub sigma2_mean: f64,
    pub sigma2_hpd: (f64, f64),
    /// Posterior mean effect of every level (0 in the baseline cluster).
    pub level_effects: Vec<Vec<f64>>,
}

impl RefitSummary {
    pub fn intercept(&self) -> f64 {
        self.coefficients[0].mean
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["covariate", "levels", "mean", "hpd_lower", "hpd_upper"])?;
        for c in &self.coefficients {
            w.write_record([
                c.covariate.as_deref().unwrap_or("(intercept)"),
                &c.levels.join("+"),
                &c.mean.to_string(),
                &c.hpd_lower.to_string(),
                &c.hpd_upper.to_string(),
            ])?;
        }
        w.flush().map_err(|e| FusionError::io(path, e))
    }
}

/// Fused design: intercept plus, per covariate, one column for each
/// cluster other than the one holding level 0 (summing its level dummies).
fn fused_design(
    design: &DesignMatrix,
    specs: &[CovariateSpec],
    partitions: &[Partition],
) -> Result<(DMatrix<f64>, Vec<(usize, Vec<usize>)>)> {
    if partitions.len() != specs.len() || design.n_covariates() != specs.len() {
        return Err(FusionError::Config("need one partition per covariate".into()));
    }
    let mut cols: Vec<DVector<f64>> = vec![design.x.column(0).into_owned()];
    let mut owners = vec![(usize::MAX, vec![])];
    for (h, (spec, part)) in specs.iter().zip(partitions).enumerate() {
        if part.n_levels() != spec.c() + 1 {
            return Err(FusionError::Config(format!(
                "partition for `{}` covers {} levels, expected {}",
                spec.name,
                part.n_levels(),
                spec.c() + 1
            )));
        }
        let block = design.block(h);
        for cluster in part.clusters().into_iter().skip(1) {
            let mut col = DVector::zeros(design.nrows());
            for &level in &cluster {
                col += design.x.column(block.start + level - 1);
            }
            cols.push(col);
            owners.push((h, cluster));
        }
    }
    Ok((DMatrix::from_columns(&cols), owners))
}

/// Refits the model implied by one partition per covariate under a flat
/// `N(0, b0 I)` prior.
pub fn refit_selected(
    design: &DesignMatrix,
    y: &DVector<f64>,
    specs: &[CovariateSpec],
    partitions: &[Partition],
    config: &RefitConfig,
) -> Result<RefitSummary> {
    let (x, owners) = fused_design(design, specs, partitions)?;
    let label = |(h, levels): &(usize, Vec<usize>)| -> String {
        if *h == usize::MAX {
            return "(intercept)".into();
        }
        let names: Vec<&str> = levels.iter().map(|&l| specs[*h].levels[l].as_str()).collect();
        format!("{}{{{}}}", specs[*h].name, names.join(","))
    };
    if linalg::numerical_rank(&x) < x.ncols() {
        // columns that add nothing to the span of the ones before them
        let mut offending = Vec::new();
        let mut rank = 0;
        for j in 0..x.ncols() {
            let r = linalg::numerical_rank(&x.columns(0, j + 1).into_owned());
            if r == rank {
                offending.push(label(&owners[j]));
            }
            rank = r;
        }
        return Err(FusionError::FusedRankDeficient(offending.join(", ")));
    }

    let fit = flat_prior_fit(&x, y, config)?;
    let mut coefficients = Vec::with_capacity(x.ncols());
    let mut level_effects: Vec<Vec<f64>> = specs.iter().map(|s| vec![0.0; s.c() + 1]).collect();
    for (j, (h, levels)) in owners.iter().enumerate() {
        let col = fit.column(j);
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let (lo, hi) = dist::hpd_interval(&col, config.hpd_mass);
        if *h != usize::MAX {
            for &l in levels {
                level_effects[*h][l] = mean;
            }
        }
        coefficients.push(RefitCoefficient {
            covariate: (*h != usize::MAX).then(|| specs[*h].name.clone()),
            levels: if *h == usize::MAX {
                vec![]
            } else {
                levels.iter().map(|&l| specs[*h].levels[l].clone()).collect()
            },
            mean,
            hpd_lower: lo,
            hpd_upper: hi,
        });
    }
    let sigma2_mean = fit.sigma2.iter().sum::<f64>() / fit.sigma2.len() as f64;
    Ok(RefitSummary {
        coefficients,
        sigma2_mean,
        sigma2_hpd: dist::hpd_interval(&fit.sigma2, config.hpd_mass),
        level_effects,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::ScaleType;

    fn setup() -> (DesignMatrix, DVector<f64>, Vec<CovariateSpec>) {
        let specs = vec![CovariateSpec::with_level_count("a", 4, ScaleType::Nominal).unwrap()];
        let codes = vec![(0..40).map(|i| i % 4).collect::<Vec<_>>()];
        let d = DesignMatrix::from_codes(&specs, &codes).unwrap();
        let effects = [0.0, 2.0, 2.0, -1.0];
        let y = DVector::from_fn(40, |i, _| 1.0 + effects[i % 4] + 0.3 * ((i * 7) as f64).sin());
        (d, y, specs)
    }

    #[test]
    fn singletons_reproduce_full_fit() {
        let (d, y, specs) = setup();
        let cfg = RefitConfig::default();
        let s = refit_selected(&d, &y, &specs, &[Partition::singletons(4)], &cfg).unwrap();
        let full = flat_prior_fit(&d.x, &y, &cfg).unwrap();
        for (j, c) in s.coefficients.iter().enumerate() {
            assert!((c.mean - full.mean(j)).abs() < 1e-10);
        }
        assert_eq!(s.coefficients.len(), 4);
    }

    #[test]
    fn fused_cluster_and_labels() {
        let (d, y, specs) = setup();
        let p = Partition::from_labels(&[0, 1, 1, 2]);
        let s = refit_selected(&d, &y, &specs, &[p], &RefitConfig::default()).unwrap();
        assert_eq!(s.coefficients.len(), 3);
        assert_eq!(s.coefficients[1].levels, vec!["1", "2"]);
        assert!((s.coefficients[1].mean - 2.0).abs() < 0.15);
        assert_eq!(s.level_effects[0][1], s.level_effects[0][2]);
        assert_eq!(s.level_effects[0][0], 0.0);
        let c = &s.coefficients[1];
        assert!(c.hpd_lower < c.mean && c.mean < c.hpd_upper);
    }

    #[test]
    fn excluded_covariate_has_no_coefficients() {
        let (d, y, specs) = setup();
        let s = refit_selected(&d, &y, &specs, &[Partition::single_cluster(4)], &RefitConfig::default())
            .unwrap();
        assert_eq!(s.coefficients.len(), 1);
        assert!(s.level_effects[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rank_deficiency_names_clusters() {
        // two covariates with identical coding: fusing nothing leaves collinear columns
        let specs = vec![
            CovariateSpec::with_level_count("a", 2, ScaleType::Nominal).unwrap(),
            CovariateSpec::with_level_count("b", 2, ScaleType::Nominal).unwrap(),
        ];
        let codes = vec![vec![0, 1, 0, 1], vec![0, 1, 1, 0]];
        let d = DesignMatrix::from_codes(&specs, &codes).unwrap();
        let mut x = d.x.clone();
        x.set_column(2, &d.x.column(1).into_owned());
        let d2 = DesignMatrix { x, ..d };
        let y = DVector::from_vec(vec![0.0, 1.0, 0.2, 0.9]);
        let parts = [Partition::singletons(2), Partition::singletons(2)];
        match refit_selected(&d2, &y, &specs, &parts, &RefitConfig::default()) {
            Err(FusionError::FusedRankDeficient(msg)) => assert!(msg.contains("b{1}"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }
}
