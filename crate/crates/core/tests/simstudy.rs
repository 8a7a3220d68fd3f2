use effect_fusion::design::FusionPattern;
use effect_fusion::gibbs::SamplerConfig;
use effect_fusion::select::{Partition, RefitConfig};
use effect_fusion::simstudy::{
    generate_dataset, mse, run_study, selection_metrics, HyperSetting, SelectionTruth,
    SimulationDesign, StudyConfig,
};
use effect_fusion::Exec;
use proptest::prelude::*;

#[test]
fn level_frequencies_match_probabilities() {
    let d = SimulationDesign::paper_default();
    let mut counts = [0usize; 8];
    let reps = 100;
    for rep in 0..reps {
        for &l in &generate_dataset(&d, rep).unwrap().codes[0] {
            counts[l] += 1;
        }
    }
    let n = (d.n * reps) as f64;
    for (l, &p) in d.covariates[0].probabilities.iter().enumerate() {
        let freq = counts[l] as f64 / n;
        let se = (p * (1.0 - p) / n).sqrt();
        assert!((freq - p).abs() < 3.0 * se, "level {l}: {freq} vs {p}");
    }
}

fn small_study() -> StudyConfig {
    StudyConfig {
        design: SimulationDesign {
            n_replicates: 2,
            ..SimulationDesign::paper_default()
        },
        sampler: SamplerConfig {
            n_burnin: 300,
            n_iter: 400,
            unrestricted_warm_start: 100,
            ..SamplerConfig::default()
        },
        refit: RefitConfig {
            n_burnin: 100,
            n_iter: 300,
            ..RefitConfig::default()
        },
        settings: vec![
            HyperSetting::default(),
            HyperSetting {
                name: "r200".into(),
                r: 200.0,
                ..HyperSetting::default()
            },
        ],
    }
}

#[test]
fn study_is_reproducible_in_both_modes() {
    let cfg = small_study();
    let a = run_study(&cfg, Exec::Parallel).unwrap();
    let b = run_study(&cfg, Exec::Sequential).unwrap();
    assert_eq!(a, b);
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let files_a = a.write(dir_a.path()).unwrap();
    let files_b = run_study(&cfg, Exec::Parallel).unwrap().write(dir_b.path()).unwrap();
    for (fa, fb) in files_a.iter().zip(&files_b) {
        assert_eq!(std::fs::read(fa).unwrap(), std::fs::read(fb).unwrap(), "{fa:?}");
    }
    // 2 settings x 8 covariates, each averaged over 2 replicates
    assert_eq!(a.metrics.len(), 16);
    for m in &a.metrics {
        assert_eq!(m.replicates, 2);
        if let (Some(t), Some(f)) = (m.tpr, m.fnr) {
            assert_eq!(t + f, 100.0);
        }
        if let (Some(t), Some(f)) = (m.tnr, m.fpr) {
            assert_eq!(t + f, 100.0);
        }
    }
    // zero-effect covariates have no positives
    assert!(a.metrics_for("default", "x2").unwrap().tpr.is_none());
    let header = std::fs::read_to_string(dir_a.path().join("errors.csv")).unwrap();
    assert!(header.starts_with("replicate,setting,method,covariate,metric,value"));
}

#[test]
fn oracle_predictor_beats_fitted_models() {
    let report = run_study(&small_study(), Exec::Parallel).unwrap();
    let oracle = report.mean_error("default", "oracle", "mspe").unwrap();
    for method in ["fusion", "full", "true"] {
        let m = report.mean_error("default", method, "mspe").unwrap();
        assert!(oracle <= m + 0.05, "{method}: {m} vs oracle {oracle}");
    }
}

fn mse_by_loop(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        s += d * d;
    }
    s / a.len() as f64
}

proptest! {
    #[test]
    fn mse_matches_second_implementation(pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..12)) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        prop_assert!((mse(&a, &b) - mse_by_loop(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn counts_are_exhaustive(truth in prop::collection::vec(0usize..4, 5), sel in prop::collection::vec(0usize..4, 5), nominal in any::<bool>()) {
        let pattern = if nominal { FusionPattern::nominal(4) } else { FusionPattern::ordinal(4) };
        let t = SelectionTruth::new(&pattern, &Partition::from_labels(&truth));
        prop_assert_eq!(t.positives.len() + t.negatives.len(), pattern.len());
        let m = selection_metrics(&Partition::from_labels(&sel), &t);
        prop_assert_eq!(m.counts.tp + m.counts.fn_, t.positives.len());
        prop_assert_eq!(m.counts.tn + m.counts.fp, t.negatives.len());
        if let Some(tpr) = m.tpr {
            prop_assert_eq!(tpr + m.fnr().unwrap(), 100.0);
        }
        if let Some(tnr) = m.tnr {
            prop_assert_eq!(tnr + m.fpr().unwrap(), 100.0);
        }
    }
}
