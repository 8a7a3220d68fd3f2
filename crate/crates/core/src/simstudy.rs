//! Synthetic benchmark: four ordinal and four nominal covariates, a sparse
//! true effect structure, and the scores used to judge a fitted model
//! (selection rates over fusable pairs, estimation and prediction error).
//!
//! Covariate draws depend only on the master seed and the replicate index, so
//! a replicate has the same design under every hyperparameter setting.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::design::{CovariateSpec, DesignMatrix, FusionPattern, ScaleType};
use crate::dist;
use crate::error::{FusionError, Result};
use crate::exec::Exec;
use crate::gibbs::{run_chain, Model, SamplerConfig};
use crate::prior::{G0Prior, HyperParams, DEFAULT_G0_SHAPE, DEFAULT_R};
use crate::rng;
use crate::select::{
    flat_prior_fit, minimize_binder, posterior_similarity, refit_selected, Partition, RefitConfig,
};

/// One covariate of the synthetic design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimCovariate {
    pub name: String,
    pub scale: ScaleType,
    /// True effects of levels `1..=c` (the baseline effect is 0).
    pub beta: Vec<f64>,
    /// Level probabilities of levels `0..=c`.
    pub probabilities: Vec<f64>,
}

impl SimCovariate {
    pub fn c(&self) -> usize {
        self.beta.len()
    }

    pub fn spec(&self) -> Result<CovariateSpec> {
        CovariateSpec::with_level_count(self.name.clone(), self.c() + 1, self.scale)
    }

    fn effect(&self, level: usize) -> f64 {
        if level == 0 {
            0.0
        } else {
            self.beta[level - 1]
        }
    }

    /// Levels with equal true effect share a cluster.
    pub fn true_partition(&self) -> Partition {
        let effects: Vec<f64> = (0..=self.c()).map(|l| self.effect(l)).collect();
        let labels: Vec<usize> = effects
            .iter()
            .map(|e| effects.iter().position(|f| f == e).unwrap())
            .collect();
        Partition::from_labels(&labels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationDesign {
    pub n: usize,
    /// Size of the independent test set used for prediction error.
    pub n_test: usize,
    pub intercept: f64,
    pub error_sd: f64,
    pub n_replicates: usize,
    pub seed: u64,
    pub covariates: Vec<SimCovariate>,
}

const PROBS_8: [f64; 8] = [0.1, 0.1, 0.2, 0.05, 0.2, 0.1, 0.2, 0.05];
const PROBS_4: [f64; 4] = [0.1, 0.4, 0.2, 0.3];

impl SimulationDesign {
    /// Eight covariates (1-4 ordinal, 5-8 nominal; 8, 8, 4, 4 levels within
    /// each type), effects on covariates 1, 3, 5, 7 only, `n = 500`, unit
    /// error variance, intercept 1, ten replicates.
    pub fn paper_default() -> Self {
        let cov = |i: usize, scale, beta: &[f64]| SimCovariate {
            name: format!("x{i}"),
            scale,
            beta: beta.to_vec(),
            probabilities: if beta.len() == 7 { PROBS_8.to_vec() } else { PROBS_4.to_vec() },
        };
        use ScaleType::{Nominal, Ordinal};
        SimulationDesign {
            n: 500,
            n_test: 500,
            intercept: 1.0,
            error_sd: 1.0,
            n_replicates: 10,
            seed: 1,
            covariates: vec![
                cov(1, Ordinal, &[0., 1., 1., 2., 2., 4., 4.]),
                cov(2, Ordinal, &[0.; 7]),
                cov(3, Ordinal, &[0., -2., -2.]),
                cov(4, Ordinal, &[0.; 3]),
                cov(5, Nominal, &[0., 1., 1., 1., 1., -2., -2.]),
                cov(6, Nominal, &[0.; 7]),
                cov(7, Nominal, &[0., 2., 2.]),
                cov(8, Nominal, &[0.; 3]),
            ],
        }
    }

    pub fn p(&self) -> usize {
        self.covariates.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n_test == 0 || self.n_replicates == 0 {
            return Err(FusionError::Config("n, n_test and n_replicates must be positive".into()));
        }
        if !(self.error_sd >= 0.0) {
            return Err(FusionError::Config("error_sd must be nonnegative".into()));
        }
        for c in &self.covariates {
            if c.beta.is_empty() || c.probabilities.len() != c.beta.len() + 1 {
                return Err(FusionError::Config(format!(
                    "`{}`: need one probability per level and one effect per non-baseline level",
                    c.name
                )));
            }
            let total: f64 = c.probabilities.iter().sum();
            if c.probabilities.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                return Err(FusionError::Config(format!(
                    "`{}`: level probabilities must be nonnegative and sum to 1",
                    c.name
                )));
            }
        }
        Ok(())
    }

    pub fn specs(&self) -> Result<Vec<CovariateSpec>> {
        self.covariates.iter().map(SimCovariate::spec).collect()
    }

    pub fn true_partitions(&self) -> Vec<Partition> {
        self.covariates.iter().map(SimCovariate::true_partition).collect()
    }

    /// `mu + sum_h beta_h[level]` for each row of `codes`.
    pub fn true_mean(&self, codes: &[Vec<usize>]) -> DVector<f64> {
        let n = codes.first().map_or(0, Vec::len);
        DVector::from_fn(n, |i, _| {
            self.intercept
                + self
                    .covariates
                    .iter()
                    .zip(codes)
                    .map(|(c, col)| c.effect(col[i]))
                    .sum::<f64>()
        })
    }

    fn draw(&self, n: usize, seed_path: &[u64], noise_path: &[u64]) -> Result<SimulatedData> {
        self.validate()?;
        let mut g = rng::stream(self.seed, seed_path);
        let codes: Vec<Vec<usize>> = self
            .covariates
            .iter()
            .map(|c| {
                (0..n)
                    .map(|_| {
                        let u: f64 = g.random();
                        let mut acc = 0.0;
                        for (l, p) in c.probabilities.iter().enumerate() {
                            acc += p;
                            if u < acc {
                                return l;
                            }
                        }
                        c.probabilities.len() - 1
                    })
                    .collect()
            })
            .collect();
        let design = DesignMatrix::from_codes(&self.specs()?, &codes)?;
        let mean = self.true_mean(&codes);
        let mut e = rng::stream(self.seed, noise_path);
        let y = mean.map(|m| m + self.error_sd * dist::std_normal(&mut e));
        Ok(SimulatedData {
            design,
            y,
            mean,
            codes,
        })
    }
}

impl Default for SimulationDesign {
    fn default() -> Self {
        Self::paper_default()
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub design: DesignMatrix,
    pub y: DVector<f64>,
    /// Noise-free mean `mu + X beta`.
    pub mean: DVector<f64>,
    pub codes: Vec<Vec<usize>>,
}

/// Training data of one replicate. Covariates come from stream
/// `[COVARIATES, replicate]`, noise from `[NOISE, replicate]`.
pub fn generate_dataset(design: &SimulationDesign, replicate: usize) -> Result<SimulatedData> {
    let r = replicate as u64;
    design.draw(design.n, &[rng::tag::COVARIATES, r], &[rng::tag::NOISE, r])
}

/// Independent test set of `n_test` rows for one replicate.
pub fn generate_test_set(design: &SimulationDesign, replicate: usize) -> Result<SimulatedData> {
    let r = replicate as u64;
    design.draw(
        design.n_test,
        &[rng::tag::TEST_SET, rng::tag::COVARIATES, r],
        &[rng::tag::TEST_SET, rng::tag::NOISE, r],
    )
}

/// `(1/c) sum_k (estimate_k - truth_k)^2` over the non-baseline levels.
pub fn mse(estimate: &[f64], truth: &[f64]) -> f64 {
    assert_eq!(estimate.len(), truth.len(), "effect vectors differ in length");
    estimate.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / truth.len() as f64
}

/// Mean squared prediction error over a test set.
pub fn mspe(predictions: &DVector<f64>, response: &DVector<f64>) -> f64 {
    assert_eq!(predictions.len(), response.len(), "prediction and response lengths differ");
    (predictions - response).norm_squared() / response.len() as f64
}

/// Predictions from an intercept and per-covariate level effects (baseline
/// included) for rows given as level codes.
pub fn predict(intercept: f64, level_effects: &[Vec<f64>], codes: &[Vec<usize>]) -> DVector<f64> {
    let n = codes.first().map_or(0, Vec::len);
    DVector::from_fn(n, |i, _| {
        intercept
            + level_effects
                .iter()
                .zip(codes)
                .map(|(eff, col)| eff[col[i]])
                .sum::<f64>()
    })
}

/// Ground truth over the fusable pairs of one covariate: positives have a
/// nonzero effect difference, negatives a zero one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTruth {
    pub positives: Vec<(usize, usize)>,
    pub negatives: Vec<(usize, usize)>,
}

impl SelectionTruth {
    pub fn new(pattern: &FusionPattern, truth: &Partition) -> Self {
        let (negatives, positives) = pattern
            .pairs()
            .iter()
            .partition(|&&(k, j)| truth.same_cluster(k, j));
        SelectionTruth {
            positives,
            negatives,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SelectionCounts {
    pub tp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub fp: usize,
}

/// Rates in percent; `None` where the denominator is empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionMetrics {
    pub counts: SelectionCounts,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
}

impl SelectionMetrics {
    pub fn fnr(&self) -> Option<f64> {
        self.tpr.map(|t| 100.0 - t)
    }

    pub fn fpr(&self) -> Option<f64> {
        self.tnr.map(|t| 100.0 - t)
    }
}

fn percent(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

/// A pair counts as fused when both levels share a cluster of `selected`;
/// a detected (positive) pair is one left unfused.
pub fn selection_metrics(selected: &Partition, truth: &SelectionTruth) -> SelectionMetrics {
    let mut c = SelectionCounts::default();
    for &(k, j) in &truth.positives {
        if selected.same_cluster(k, j) {
            c.fn_ += 1;
        } else {
            c.tp += 1;
        }
    }
    for &(k, j) in &truth.negatives {
        if selected.same_cluster(k, j) {
            c.tn += 1;
        } else {
            c.fp += 1;
        }
    }
    let has_pos = !truth.positives.is_empty();
    SelectionMetrics {
        counts: c,
        tpr: percent(c.tp, c.tp + c.fn_),
        tnr: percent(c.tn, c.tn + c.fp),
        ppv: if has_pos { percent(c.tp, c.tp + c.fp) } else { None },
        npv: percent(c.tn, c.tn + c.fn_),
    }
}

/// Hyperparameters applied to every covariate of the study, by scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperSetting {
    pub name: String,
    pub r: f64,
    pub g0: f64,
    pub ordinal: G0Prior,
    pub nominal: G0Prior,
}

impl Default for HyperSetting {
    fn default() -> Self {
        HyperSetting {
            name: "default".into(),
            r: DEFAULT_R,
            g0: DEFAULT_G0_SHAPE,
            ordinal: G0Prior::Fixed(20.0),
            nominal: G0Prior::Fixed(2.0),
        }
    }
}

impl HyperSetting {
    pub fn for_scale(&self, scale: ScaleType) -> HyperParams {
        HyperParams {
            r: self.r,
            g0: self.g0,
            g0_prior: match scale {
                ScaleType::Nominal => self.nominal,
                ScaleType::Ordinal | ScaleType::Selection => self.ordinal,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub design: SimulationDesign,
    pub sampler: SamplerConfig,
    pub refit: RefitConfig,
    pub settings: Vec<HyperSetting>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            design: SimulationDesign::paper_default(),
            sampler: SamplerConfig::default(),
            refit: RefitConfig::default(),
            settings: vec![HyperSetting::default()],
        }
    }
}

/// Selection outcome of one covariate in one replicate under one setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSelection {
    pub replicate: usize,
    pub setting: String,
    pub covariate: String,
    pub partition: Partition,
    pub excluded: bool,
    pub metrics: SelectionMetrics,
}

/// One row of the long error table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub replicate: usize,
    /// Empty for methods that do not depend on the hyperparameters.
    pub setting: String,
    /// `fusion`, `full`, `true` or `oracle` (true mean, prediction only).
    pub method: String,
    /// Covariate name for `mse`, `all` for `mspe`.
    pub covariate: String,
    pub metric: String,
    pub value: f64,
}

/// Per-covariate averages over replicates, as in the selection tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub setting: String,
    pub covariate: String,
    pub tpr: Option<f64>,
    pub fnr: Option<f64>,
    pub tnr: Option<f64>,
    pub fpr: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    /// Replicates in which every level was fused with the baseline.
    pub excluded: usize,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub metrics: Vec<MetricsRow>,
    pub selections: Vec<ReplicateSelection>,
    pub errors: Vec<ErrorRecord>,
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl StudyReport {
    pub fn metrics_for(&self, setting: &str, covariate: &str) -> Option<&MetricsRow> {
        self.metrics
            .iter()
            .find(|m| m.setting == setting && m.covariate == covariate)
    }

    /// Mean over replicates of one error metric for a method (all
    /// covariates pooled for `mse`).
    pub fn mean_error(&self, setting: &str, method: &str, metric: &str) -> Option<f64> {
        let v: Vec<f64> = self
            .errors
            .iter()
            .filter(|e| e.method == method && e.metric == metric)
            .filter(|e| e.setting.is_empty() || e.setting == setting)
            .map(|e| e.value)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Writes `metrics.csv`, `selections.csv`, `errors.csv` and `study.json`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let metrics = dir.join("metrics.csv");
        let mut w = csv::Writer::from_path(&metrics)?;
        for m in &self.metrics {
            w.serialize(m)?;
        }
        w.flush().map_err(|e| FusionError::io(&metrics, e))?;

        let selections = dir.join("selections.csv");
        let mut w = csv::Writer::from_path(&selections)?;
        w.write_record([
            "replicate", "setting", "covariate", "partition", "excluded", "tp", "fn", "tn", "fp",
        ])?;
        for s in &self.selections {
            let labels: Vec<String> = s.partition.labels().iter().map(|l| l.to_string()).collect();
            let c = s.metrics.counts;
            w.write_record([
                s.replicate.to_string(),
                s.setting.clone(),
                s.covariate.clone(),
                labels.join(" "),
                s.excluded.to_string(),
                c.tp.to_string(),
                c.fn_.to_string(),
                c.tn.to_string(),
                c.fp.to_string(),
            ])?;
        }
        w.flush().map_err(|e| FusionError::io(&selections, e))?;

        let errors = dir.join("errors.csv");
        let mut w = csv::Writer::from_path(&errors)?;
        for e in &self.errors {
            w.serialize(e)?;
        }
        w.flush().map_err(|e| FusionError::io(&errors, e))?;

        let json = dir.join("study.json");
        let f = File::create(&json).map_err(|e| FusionError::io(&json, e))?;
        serde_json::to_writer_pretty(BufWriter::new(f), self)?;
        Ok(vec![metrics, selections, errors, json])
    }
}

fn derived_seed(master: u64, path: &[u64]) -> u64 {
    rng::stream(master, path).random()
}

struct FusionRun {
    selections: Vec<ReplicateSelection>,
    errors: Vec<ErrorRecord>,
}

fn fusion_run(cfg: &StudyConfig, replicate: usize, s: usize) -> Result<FusionRun> {
    let design = &cfg.design;
    let setting = &cfg.settings[s];
    let data = generate_dataset(design, replicate)?;
    let test = generate_test_set(design, replicate)?;
    let specs = design.specs()?;
    let hypers: Vec<HyperParams> = specs.iter().map(|sp| setting.for_scale(sp.scale)).collect();
    let path = [rng::tag::CHAIN, replicate as u64, s as u64];
    let sampler = SamplerConfig {
        seed: derived_seed(design.seed, &path),
        ..cfg.sampler.clone()
    };
    let model = Model::new(&data.design, &data.y, &specs, &hypers, &sampler)?;
    let draws = run_chain(&model, &sampler, 0)?;

    let mut partitions = Vec::with_capacity(specs.len());
    let mut selections = Vec::with_capacity(specs.len());
    for (h, (spec, cov)) in specs.iter().zip(&design.covariates).enumerate() {
        let pi = posterior_similarity(&draws, h)?;
        let part = minimize_binder(&pi, spec.scale == ScaleType::Ordinal);
        let truth = SelectionTruth::new(&spec.pattern, &cov.true_partition());
        selections.push(ReplicateSelection {
            replicate,
            setting: setting.name.clone(),
            covariate: spec.name.clone(),
            excluded: part.is_excluded(),
            metrics: selection_metrics(&part, &truth),
            partition: part.clone(),
        });
        partitions.push(part);
    }
    let refit_cfg = RefitConfig {
        seed: derived_seed(design.seed, &[rng::tag::REFIT, replicate as u64, s as u64]),
        ..cfg.refit.clone()
    };
    let refit = refit_selected(&data.design, &data.y, &specs, &partitions, &refit_cfg)?;
    let errors = method_errors(
        design,
        replicate,
        &setting.name,
        "fusion",
        refit.intercept(),
        &refit.level_effects,
        &test,
    );
    Ok(FusionRun { selections, errors })
}

fn method_errors(
    design: &SimulationDesign,
    replicate: usize,
    setting: &str,
    method: &str,
    intercept: f64,
    level_effects: &[Vec<f64>],
    test: &SimulatedData,
) -> Vec<ErrorRecord> {
    let record = |covariate: &str, metric: &str, value| ErrorRecord {
        replicate,
        setting: setting.into(),
        method: method.into(),
        covariate: covariate.into(),
        metric: metric.into(),
        value,
    };
    let mut out: Vec<ErrorRecord> = design
        .covariates
        .iter()
        .zip(level_effects)
        .map(|(c, eff)| record(&c.name, "mse", mse(&eff[1..], &c.beta)))
        .collect();
    let pred = predict(intercept, level_effects, &test.codes);
    out.push(record("all", "mspe", mspe(&pred, &test.y)));
    out
}

/// Full model, true model and the true-mean predictor for one replicate.
fn reference_runs(cfg: &StudyConfig, replicate: usize) -> Result<Vec<ErrorRecord>> {
    let design = &cfg.design;
    let data = generate_dataset(design, replicate)?;
    let test = generate_test_set(design, replicate)?;
    let specs = design.specs()?;
    let refit_cfg = RefitConfig {
        seed: derived_seed(design.seed, &[rng::tag::REFIT, replicate as u64, u64::MAX]),
        ..cfg.refit.clone()
    };
    let full = flat_prior_fit(&data.design.x, &data.y, &refit_cfg)?;
    let (mu, effects) = data.design.level_effects(&full.means());
    let mut out = method_errors(design, replicate, "", "full", mu, &effects, &test);

    let truth = refit_selected(&data.design, &data.y, &specs, &design.true_partitions(), &refit_cfg)?;
    out.extend(method_errors(
        design,
        replicate,
        "",
        "true",
        truth.intercept(),
        &truth.level_effects,
        &test,
    ));
    out.push(ErrorRecord {
        replicate,
        setting: String::new(),
        method: "oracle".into(),
        covariate: "all".into(),
        metric: "mspe".into(),
        value: mspe(&test.mean, &test.y),
    });
    Ok(out)
}

/// Runs every (replicate, setting) pair: sampler, Binder selection per
/// covariate and refit, scored against the truth and an independent test
/// set. Each unit owns streams derived from the master seed, the replicate
/// and the setting index, so the report does not depend on `exec`.
pub fn run_study(cfg: &StudyConfig, exec: Exec) -> Result<StudyReport> {
    cfg.design.validate()?;
    cfg.sampler.validate()?;
    if cfg.settings.is_empty() {
        return Err(FusionError::Config("at least one hyperparameter setting required".into()));
    }
    for s in &cfg.settings {
        s.for_scale(ScaleType::Nominal).validate()?;
        s.for_scale(ScaleType::Ordinal).validate()?;
    }
    let n_rep = cfg.design.n_replicates;
    let n_set = cfg.settings.len();
    let runs = exec.try_map(n_rep * n_set, |u| fusion_run(cfg, u / n_set, u % n_set))?;
    let references = exec.try_map(n_rep, |rep| reference_runs(cfg, rep))?;

    let mut selections = Vec::new();
    let mut errors = Vec::new();
    for run in runs {
        selections.extend(run.selections);
        errors.extend(run.errors);
    }
    errors.extend(references.into_iter().flatten());

    let mut metrics = Vec::new();
    for setting in &cfg.settings {
        for cov in &cfg.design.covariates {
            let rows: Vec<&ReplicateSelection> = selections
                .iter()
                .filter(|s| s.setting == setting.name && s.covariate == cov.name)
                .collect();
            let tpr = mean_defined(rows.iter().map(|r| r.metrics.tpr));
            let tnr = mean_defined(rows.iter().map(|r| r.metrics.tnr));
            metrics.push(MetricsRow {
                setting: setting.name.clone(),
                covariate: cov.name.clone(),
                tpr,
                fnr: tpr.map(|t| 100.0 - t),
                tnr,
                fpr: tnr.map(|t| 100.0 - t),
                ppv: mean_defined(rows.iter().map(|r| r.metrics.ppv)),
                npv: mean_defined(rows.iter().map(|r| r.metrics.npv)),
                excluded: rows.iter().filter(|r| r.excluded).count(),
                replicates: rows.len(),
            });
        }
    }
    Ok(StudyReport {
        config: cfg.clone(),
        metrics,
        selections,
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_design_is_valid() {
        let d = SimulationDesign::paper_default();
        d.validate().unwrap();
        assert_eq!(d.p(), 8);
        assert_eq!(d.covariates[0].true_partition().labels(), &[0, 0, 1, 1, 2, 2, 3, 3]);
        assert_eq!(d.covariates[4].true_partition().labels(), &[0, 0, 1, 1, 1, 1, 2, 2]);
        assert!(d.covariates[1].true_partition().is_excluded());
    }

    #[test]
    fn invalid_probabilities_rejected() {
        let mut d = SimulationDesign::paper_default();
        d.covariates[2].probabilities[0] = 0.2;
        assert!(d.validate().is_err());
        let mut d = SimulationDesign::paper_default();
        d.covariates[2].beta.push(1.0);
        assert!(d.validate().is_err());
    }

    #[test]
    fn replicate_is_reproducible() {
        let d = SimulationDesign::paper_default();
        let a = generate_dataset(&d, 0).unwrap();
        let b = generate_dataset(&d, 0).unwrap();
        assert_eq!(a.codes, b.codes);
        assert_eq!(a.y, b.y);
        let c = generate_dataset(&d, 1).unwrap();
        assert_ne!(a.codes, c.codes);
    }

    #[test]
    fn noise_free_response_is_the_mean() {
        let d = SimulationDesign {
            error_sd: 0.0,
            ..SimulationDesign::paper_default()
        };
        let data = generate_dataset(&d, 3).unwrap();
        assert_eq!(data.y, data.mean);
        // the mean is also X beta with the stacked true effects
        let mut beta = vec![d.intercept];
        for c in &d.covariates {
            beta.extend(&c.beta);
        }
        let xb = &data.design.x * DVector::from_vec(beta);
        assert!((xb - &data.y).amax() < 1e-12);
    }

    #[test]
    fn mse_basics() {
        let t = [1.0, -2.0, 0.5];
        assert_eq!(mse(&t, &t), 0.0);
        assert_eq!(mse(&[2.0, -1.0, 1.5], &t), 1.0);
    }

    #[test]
    fn mspe_basics() {
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(mspe(&y, &y), 0.0);
        assert!((mspe(&y.add_scalar(0.5), &y) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn metrics_perfect_and_singletons() {
        let d = SimulationDesign::paper_default();
        let cov = &d.covariates[4];
        let spec = cov.spec().unwrap();
        let truth = SelectionTruth::new(&spec.pattern, &cov.true_partition());
        let m = selection_metrics(&cov.true_partition(), &truth);
        assert_eq!((m.tpr, m.tnr, m.ppv, m.npv), (Some(100.0), Some(100.0), Some(100.0), Some(100.0)));
        let m = selection_metrics(&Partition::singletons(8), &truth);
        assert_eq!((m.tpr, m.tnr), (Some(100.0), Some(0.0)));
    }

    #[test]
    fn metrics_hand_example() {
        let pattern = FusionPattern::nominal(3);
        let truth = SelectionTruth::new(&pattern, &Partition::from_labels(&[0, 0, 1, 1]));
        assert_eq!(truth.positives, vec![(2, 0), (2, 1), (3, 0), (3, 1)]);
        assert_eq!(truth.negatives, vec![(1, 0), (3, 2)]);
        let m = selection_metrics(&Partition::from_labels(&[0, 0, 0, 1]), &truth);
        assert_eq!(m.counts, SelectionCounts { tp: 2, fn_: 2, tn: 1, fp: 1 });
        assert_eq!((m.tpr, m.tnr), (Some(50.0), Some(50.0)));
        assert_eq!(m.fnr(), Some(50.0));
    }

    #[test]
    fn metrics_without_positives_are_undefined() {
        let pattern = FusionPattern::ordinal(3);
        let truth = SelectionTruth::new(&pattern, &Partition::single_cluster(4));
        let m = selection_metrics(&Partition::singletons(4), &truth);
        assert_eq!((m.tpr, m.ppv, m.tnr), (None, None, Some(0.0)));
        assert_eq!(m.fnr(), None);
    }
}
