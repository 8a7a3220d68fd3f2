use effect_fusion::design::{CovariateSpec, DesignMatrix, ScaleType};
use effect_fusion::dist;
use effect_fusion::gibbs::{
    beta_conditional, integrated_autocorrelation_time, sample_beta, sample_delta, sample_g0,
    sample_sigma2, sample_tau2, update_prior_covariance, ChainState, Model, SamplerConfig,
};
use effect_fusion::prior::{simulate_prior, G0Prior, HyperParams};
use effect_fusion::rng;
use effect_fusion::Exec;
use nalgebra::{DMatrix, DVector};

const N_DRAWS: usize = 100_000;

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

fn assert_within_se(label: &str, got: f64, expected: f64, se: f64, k: f64) {
    assert!(
        (got - expected).abs() < k * se,
        "{label}: got {got}, expected {expected}, se {se}"
    );
}

fn spec() -> CovariateSpec {
    CovariateSpec::with_level_count("x", 3, ScaleType::Nominal).unwrap()
}

fn toy(config: &SamplerConfig, hyper: HyperParams) -> (Model, DMatrix<f64>) {
    let specs = vec![spec()];
    let codes = vec![vec![0, 1, 2, 0, 1, 2]];
    let d = DesignMatrix::from_codes(&specs, &codes).unwrap();
    let y = DVector::from_vec(vec![0.3, 1.4, -0.2, 0.1, 1.1, -0.6]);
    let m = Model::new(&d, &y, &specs, &[hyper], config).unwrap();
    (m, d.x.clone())
}

fn state_with(model: &Model, beta: &[f64], sigma2: f64, tau2: f64) -> ChainState {
    let mut s = model.initial_state().unwrap();
    s.beta = DVector::from_column_slice(beta);
    s.sigma2 = sigma2;
    s.tau2 = vec![tau2];
    update_prior_covariance(model, &mut s);
    s
}

#[test]
fn beta_matches_closed_form() {
    let cfg = SamplerConfig::default();
    let (m, x) = toy(&cfg, HyperParams::default_for(ScaleType::Nominal));
    let (sigma2, tau2) = (0.5, 1.0);
    let mut s = state_with(&m, &[0.0; 3], sigma2, tau2);

    // independent closed form; nominal c = 2 has gamma = 1 and Q(1) = [[2,-1],[-1,2]]
    let mut prior = DMatrix::zeros(3, 3);
    prior[(0, 0)] = 1.0 / cfg.m0;
    prior[(1, 1)] = 2.0 / tau2;
    prior[(2, 2)] = 2.0 / tau2;
    prior[(1, 2)] = -1.0 / tau2;
    prior[(2, 1)] = -1.0 / tau2;
    let prec = prior + x.transpose() * &x / sigma2;
    let cov = prec.clone().try_inverse().unwrap();
    let b = &cov * x.transpose() * m.y() / sigma2;

    let mut g = rng::stream(21, &[1]);
    let mut draws = vec![Vec::with_capacity(N_DRAWS); 3];
    for _ in 0..N_DRAWS {
        sample_beta(&m, &mut s, &mut g).unwrap();
        for i in 0..3 {
            draws[i].push(s.beta[i]);
        }
    }
    let n = N_DRAWS as f64;
    let means: Vec<f64> = draws.iter().map(|d| mean_var(d).0).collect();
    for i in 0..3 {
        assert_within_se(&format!("mean {i}"), means[i], b[i], (cov[(i, i)] / n).sqrt(), 3.0);
        for j in 0..=i {
            let c = draws[i]
                .iter()
                .zip(&draws[j])
                .map(|(a, bb)| (a - means[i]) * (bb - means[j]))
                .sum::<f64>()
                / (n - 1.0);
            let se = ((cov[(i, i)] * cov[(j, j)] + cov[(i, j)].powi(2)) / n).sqrt();
            assert_within_se(&format!("cov {i}{j}"), c, cov[(i, j)], se, 3.0);
        }
    }
}

#[test]
fn beta_without_data_is_prior() {
    let cfg = SamplerConfig::default();
    let h = HyperParams::default_for(ScaleType::Nominal);
    let m = Model::prior_only(&[spec()], &[h], &cfg).unwrap();
    let s = state_with(&m, &[0.0; 3], 1.0, 0.8);
    let (mean, chol) = beta_conditional(&m, &s).unwrap();
    assert!(mean.iter().all(|v| *v == 0.0));
    let prec = chol.l() * chol.l().transpose();
    let mut expected = DMatrix::zeros(3, 3);
    expected[(0, 0)] = 1.0 / cfg.m0;
    expected.view_mut((1, 1), (2, 2)).copy_from(&(DMatrix::from_row_slice(2, 2, &[2., -1., -1., 2.]) / 0.8));
    assert!((prec - expected).abs().max() < 1e-12);
}

#[test]
fn beta_small_sigma_approaches_least_squares() {
    let cfg = SamplerConfig::default();
    let (m, x) = toy(&cfg, HyperParams::default_for(ScaleType::Nominal));
    let s = state_with(&m, &[0.0; 3], 1e-8, 1.0);
    let (mean, _) = beta_conditional(&m, &s).unwrap();
    let ls = (x.transpose() * &x).try_inverse().unwrap() * x.transpose() * m.y();
    for i in 0..3 {
        assert!((mean[i] - ls[i]).abs() <= 1e-4 * ls[i].abs().max(1e-3), "{mean} vs {ls}");
    }
}

#[test]
fn sigma2_exact_fit_and_residual_mean() {
    let cfg = SamplerConfig {
        s0: 1.0,
        big_s0: 1.0,
        ..Default::default()
    };
    let (mut m, x) = toy(&cfg, HyperParams::default_for(ScaleType::Nominal));
    let beta = [0.5, 1.0, -1.0];
    m.set_response(&x * DVector::from_column_slice(&beta)).unwrap();
    let mut s = state_with(&m, &beta, 1.0, 1.0);
    let mut g = rng::stream(22, &[1]);
    let draws: Vec<f64> = (0..N_DRAWS)
        .map(|_| {
            sample_sigma2(&m, &mut s, &mut g).unwrap();
            s.sigma2
        })
        .collect();
    // InvGamma(1 + 3, 1): mean 1/3, variance 1/18
    let (mean, _) = mean_var(&draws);
    assert_within_se("exact fit", mean, 1.0 / 3.0, (1.0 / 18.0 / N_DRAWS as f64).sqrt(), 3.0);

    let cfg0 = SamplerConfig::default();
    let (m, _) = toy(&cfg0, HyperParams::default_for(ScaleType::Nominal));
    let mut s = state_with(&m, &[0.2, 0.4, -0.1], 1.0, 1.0);
    let rss = (m.y() - m.x() * &s.beta).norm_squared();
    let (shape, scale) = (3.0, rss / 2.0);
    let draws: Vec<f64> = (0..N_DRAWS)
        .map(|_| {
            sample_sigma2(&m, &mut s, &mut g).unwrap();
            s.sigma2
        })
        .collect();
    let expected = scale / (shape - 1.0);
    let sd = expected / (shape - 2.0_f64).sqrt();
    assert_within_se("residual", mean_var(&draws).0, expected, sd / (N_DRAWS as f64).sqrt(), 3.0);
}

#[test]
fn sigma2_degenerate_residuals() {
    let cfg = SamplerConfig::default();
    let (mut m, x) = toy(&cfg, HyperParams::default_for(ScaleType::Nominal));
    let beta = [0.5, 1.0, -1.0];
    m.set_response(&x * DVector::from_column_slice(&beta)).unwrap();
    let mut s = state_with(&m, &beta, 1.0, 1.0);
    let mut g = rng::stream(1, &[1]);
    assert!(matches!(
        sample_sigma2(&m, &mut s, &mut g),
        Err(effect_fusion::FusionError::DegenerateResiduals)
    ));
}

#[test]
fn tau2_with_zero_effects() {
    let cfg = SamplerConfig::default();
    let h = HyperParams::default_for(ScaleType::Nominal);
    let (m, _) = toy(&cfg, h);
    let mut s = state_with(&m, &[0.0; 3], 1.0, 1.0);
    let mut g = rng::stream(23, &[1]);
    let draws: Vec<f64> = (0..N_DRAWS)
        .map(|_| {
            sample_tau2(&m, &mut s, &mut g);
            s.tau2[0]
        })
        .collect();
    // InvGamma(5 + 1, 2)
    let (shape, scale) = (6.0, 2.0);
    let expected = scale / (shape - 1.0);
    let sd = expected / (shape - 2.0_f64).sqrt();
    assert_within_se("tau2", mean_var(&draws).0, expected, sd / (N_DRAWS as f64).sqrt(), 3.0);
}

#[test]
fn g0_hyperprior_mean() {
    let cfg = SamplerConfig::default();
    let lambda = 3.0;
    let h = HyperParams {
        g0_prior: G0Prior::Exponential { mean: lambda },
        ..HyperParams::default_for(ScaleType::Nominal)
    };
    let (m, _) = toy(&cfg, h);
    let tau2 = 0.7;
    let mut s = state_with(&m, &[0.0; 3], 1.0, tau2);
    let mut g = rng::stream(24, &[1]);
    let draws: Vec<f64> = (0..N_DRAWS)
        .map(|_| {
            sample_g0(&m, &mut s, &mut g);
            s.g0_scale[0]
        })
        .collect();
    let (shape, rate) = (h.g0 + 1.0, 1.0 / lambda + 1.0 / tau2);
    let sd = shape.sqrt() / rate;
    assert_within_se("G0", mean_var(&draws).0, shape / rate, sd / (N_DRAWS as f64).sqrt(), 3.0);

    // fixed G0 is never touched
    let (m, _) = toy(&cfg, HyperParams::default_for(ScaleType::Nominal));
    let mut s = state_with(&m, &[0.0; 3], 1.0, tau2);
    sample_g0(&m, &mut s, &mut g);
    assert_eq!(s.g0_scale[0], 2.0);
}

#[test]
fn delta_frequencies_match_density_ratio() {
    let cfg = SamplerConfig::default();
    let h = HyperParams::default_for(ScaleType::Nominal);
    let (m, _) = toy(&cfg, h);
    let beta = [0.0, 0.02, 0.03];
    let mut s = state_with(&m, &beta, 1.0, 1.0);
    let mut g = rng::stream(25, &[1]);
    let mut ones = [0usize; 3];
    for _ in 0..N_DRAWS {
        sample_delta(&m, &mut s, &mut g);
        for (i, b) in s.delta[0].bits().iter().enumerate() {
            ones[i] += *b as usize;
        }
    }
    let normal = |x: f64, v: f64| (-x * x / (2.0 * v)).exp() / v.sqrt();
    // pairs (1,0), (2,0), (2,1); gamma = 1
    for (i, theta) in [0.02, 0.03, 0.01].into_iter().enumerate() {
        let slab = normal(theta, 1.0);
        let p = slab / (slab + normal(theta, 1.0 / h.r));
        let freq = ones[i] as f64 / N_DRAWS as f64;
        assert_within_se(&format!("pair {i}"), freq, p, (p * (1.0 - p) / N_DRAWS as f64).sqrt(), 3.0);
    }
}

#[test]
fn flipping_one_indicator_changes_four_entries() {
    let cfg = SamplerConfig::default();
    let h = HyperParams::default_for(ScaleType::Nominal);
    let specs = vec![CovariateSpec::with_level_count("x", 4, ScaleType::Nominal).unwrap()];
    let m = Model::prior_only(&specs, &[h], &cfg).unwrap();
    let tau2 = 0.6;
    let mut s = m.initial_state().unwrap();
    s.tau2 = vec![tau2];
    update_prior_covariance(&m, &mut s);
    let before = s.prior_precision[0].clone();
    s.delta[0].set(3, 1, false).unwrap();
    update_prior_covariance(&m, &mut s);
    let diff = &s.prior_precision[0] - &before;
    let step = (h.r - 1.0) / (specs[0].gamma() * tau2);
    let mut changed = 0;
    for i in 0..3 {
        for j in 0..3 {
            if diff[(i, j)] != 0.0 {
                changed += 1;
                let sign = if i == j { 1.0 } else { -1.0 };
                assert!((diff[(i, j)] - sign * step).abs() < 1e-9 * step);
            }
        }
    }
    assert_eq!(changed, 4);
    assert!(diff[(2, 0)] != 0.0 && diff[(0, 0)] != 0.0 && diff[(2, 2)] != 0.0);

    let cov = s.prior_precision[0].clone().try_inverse().unwrap();
    assert!((&s.prior_precision[0] * cov - DMatrix::identity(3, 3)).abs().max() < 1e-8);
}

/// Forward draws from the joint prior against a successive-conditional
/// chain that alternates a Gibbs sweep with a fresh `y | theta`.
#[test]
fn geweke_joint_distribution() {
    let cfg = SamplerConfig {
        m0: 1.0,
        s0: 3.0,
        big_s0: 2.0,
        ..Default::default()
    };
    let h = HyperParams {
        r: 100.0,
        g0: 5.0,
        g0_prior: G0Prior::Fixed(2.0),
    };
    let specs = vec![spec()];
    let codes = vec![(0..10).map(|i| i % 3).collect::<Vec<_>>()];
    let d = DesignMatrix::from_codes(&specs, &codes).unwrap();
    let mut m = Model::new(&d, &DVector::zeros(10), &specs, &[h], &cfg).unwrap();

    let n_fwd = 40_000;
    let prior = simulate_prior(&specs[0], &h, n_fwd, 31, Exec::Parallel).unwrap();
    let mut g = rng::stream(32, &[1]);
    let mut fwd: Vec<[f64; 5]> = Vec::with_capacity(n_fwd);
    for i in 0..n_fwd {
        let sigma2 = dist::inv_gamma(&mut g, cfg.s0, cfg.big_s0);
        let _mu = dist::std_normal(&mut g) * cfg.m0.sqrt();
        fwd.push([
            prior.beta[i][0],
            prior.beta[i][1],
            sigma2,
            prior.tau2[i],
            prior.delta[i].count_ones() as f64,
        ]);
    }

    let n_sc = 100_000;
    let mut s = m.initial_state().unwrap();
    let mut g = rng::stream(33, &[1]);
    let mut sc: Vec<[f64; 5]> = Vec::with_capacity(n_sc);
    for _ in 0..n_sc {
        let noise = DVector::from_fn(10, |_, _| dist::std_normal(&mut g) * s.sigma2.sqrt());
        m.set_response(m.x() * &s.beta + noise).unwrap();
        sample_beta(&m, &mut s, &mut g).unwrap();
        sample_sigma2(&m, &mut s, &mut g).unwrap();
        sample_tau2(&m, &mut s, &mut g);
        sample_g0(&m, &mut s, &mut g);
        sample_delta(&m, &mut s, &mut g);
        update_prior_covariance(&m, &mut s);
        let ones = s.delta[0].bits().iter().filter(|b| **b).count() as f64;
        sc.push([s.beta[1], s.beta[2], s.sigma2, s.tau2[0], ones]);
    }

    let names = ["beta1", "beta2", "sigma2", "tau2", "sum delta"];
    for k in 0..5 {
        let a: Vec<f64> = fwd.iter().map(|r| r[k]).collect();
        let b: Vec<f64> = sc[1000..].iter().map(|r| r[k]).collect();
        let (ma, va) = mean_var(&a);
        let (mb, vb) = mean_var(&b);
        let iat = integrated_autocorrelation_time(&b);
        let se = (va / a.len() as f64 + vb * iat / b.len() as f64).sqrt();
        assert!((ma - mb).abs() < 4.0 * se, "{}: forward {ma}, chain {mb}, se {se}", names[k]);
    }
}
