use effect_fusion::design::{CovariateSpec, DesignMatrix, FusionPattern, ScaleType};
use effect_fusion::prior::{
    build_structure_matrix, change_baseline, log_indicator_weight, quadratic_form_by_pairs,
    relabel_baseline, structure_matrix_via_restriction, IndicatorState,
};
use nalgebra::{Cholesky, DMatrix, DVector};
use proptest::prelude::*;

fn close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    a.shape() == b.shape()
        && a.iter()
            .zip(b.iter())
            .all(|(x, y)| (x - y).abs() <= tol * x.abs().max(y.abs()).max(1.0))
}

fn scale_of(i: u8) -> ScaleType {
    match i % 3 {
        0 => ScaleType::Nominal,
        1 => ScaleType::Ordinal,
        _ => ScaleType::Selection,
    }
}

/// (spec, delta, r) with `c <= 6` and `r` log-uniform on `[1.01, 1e6]`.
fn case() -> impl Strategy<Value = (CovariateSpec, IndicatorState, f64)> {
    (1usize..=6, 0u8..3, any::<u64>(), 0.0043f64..6.0).prop_map(|(c, s, mask, log_r)| {
        let spec = CovariateSpec::with_level_count("x", c + 1, scale_of(s)).unwrap();
        let delta = IndicatorState::from_mask(&spec.pattern, mask);
        (spec, delta, 10f64.powf(log_r))
    })
}

fn nominal_case() -> impl Strategy<Value = (CovariateSpec, IndicatorState, f64, usize)> {
    (1usize..=6, any::<u64>(), 0.0043f64..6.0, any::<prop::sample::Index>()).prop_map(
        |(c, mask, log_r, b)| {
            let spec = CovariateSpec::with_level_count("x", c + 1, ScaleType::Nominal).unwrap();
            let delta = IndicatorState::from_mask(&spec.pattern, mask);
            (spec, delta, 10f64.powf(log_r), 1 + b.index(c))
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn restriction_route_equals_direct((spec, delta, r) in case()) {
        let direct = build_structure_matrix(&spec, &delta, r).unwrap();
        let via = structure_matrix_via_restriction(&spec, &delta, r).unwrap();
        prop_assert!(close(&direct.q, &via.q, 1e-12), "{}\n{}", direct.q, via.q);
        prop_assert_eq!(direct.gamma, via.gamma);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn quadratic_form_and_definiteness(
        (spec, delta, r) in case(),
        beta in prop::collection::vec(-5.0f64..5.0, 6),
    ) {
        let sm = build_structure_matrix(&spec, &delta, r).unwrap();
        let c = spec.c();
        let b = DVector::from_column_slice(&beta[..c]);
        let direct = (b.transpose() * &sm.q * &b)[(0, 0)];
        let by_pairs = quadratic_form_by_pairs(&delta, r, &beta[..c]);
        prop_assert!((direct - by_pairs).abs() <= 1e-10 * by_pairs.abs().max(1e-300));
        prop_assert!(Cholesky::new(sm.q.clone()).is_some());
        // symmetric, off-diagonals in {0, -1, -r}
        for k in 0..c {
            for j in 0..c {
                prop_assert_eq!(sm.q[(k, j)], sm.q[(j, k)]);
                if k != j {
                    let v = sm.q[(k, j)];
                    prop_assert!(v == 0.0 || v == -1.0 || v == -r);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn baseline_change_keeps_the_form((spec, delta, r, b) in nominal_case()) {
        // integer r keeps every entry of Q exact, so the transform is exact too
        let r = r.round().max(2.0);
        let q = build_structure_matrix(&spec, &delta, r).unwrap().q;
        let moved = relabel_baseline(&delta, b).unwrap();
        let direct = build_structure_matrix(&spec, &moved, r).unwrap().q;
        let moved_q = change_baseline(&q, b);
        prop_assert!(close(&moved_q, &direct, 1e-10), "{}", (&moved_q - &direct).abs().max());
    }

    #[test]
    fn baseline_change_with_real_r((spec, delta, r, b) in nominal_case()) {
        // entries of size 1 are differences of terms of size r, so rounding
        // is bounded by the scale of Q rather than by each entry
        let q = build_structure_matrix(&spec, &delta, r).unwrap().q;
        let moved = relabel_baseline(&delta, b).unwrap();
        let direct = build_structure_matrix(&spec, &moved, r).unwrap().q;
        let scale = q.abs().max();
        prop_assert!((change_baseline(&q, b) - direct).abs().max() <= 1e-10 * scale);
    }

    #[test]
    fn dummy_coding_ignores_row_order(
        codes in prop::collection::vec((0usize..3, 0usize..4), 12..40),
        seed in any::<u64>(),
    ) {
        let specs = vec![
            CovariateSpec::with_level_count("a", 3, ScaleType::Nominal).unwrap(),
            CovariateSpec::with_level_count("b", 4, ScaleType::Ordinal).unwrap(),
        ];
        let split = |rows: &[(usize, usize)]| {
            vec![rows.iter().map(|r| r.0).collect::<Vec<_>>(), rows.iter().map(|r| r.1).collect()]
        };
        let Ok(original) = DesignMatrix::from_codes(&specs, &split(&codes)) else {
            return Ok(());
        };
        let mut perm: Vec<usize> = (0..codes.len()).collect();
        // deterministic shuffle driven by the seed
        let mut s = seed;
        for i in (1..perm.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let shuffled: Vec<_> = perm.iter().map(|&i| codes[i]).collect();
        let permuted = DesignMatrix::from_codes(&specs, &split(&shuffled)).unwrap();
        for (new_row, &old_row) in perm.iter().enumerate() {
            prop_assert_eq!(permuted.x.row(new_row), original.x.row(old_row));
        }
        prop_assert_eq!(permuted.columns, original.columns);
    }
}

fn normal_log_pdf(x: f64, var: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - x * x / (2.0 * var)
}

/// For c = 2 the joint `p(beta, delta | tau2)`, computed from the normalized
/// `p(delta)` and the multivariate normal, differs from the product of
/// per-pair normals `N(theta_kj; 0, gamma tau2 / kappa_kj)` by a constant.
#[test]
fn joint_prior_factorizes_over_pairs() {
    let spec = CovariateSpec::with_level_count("x", 3, ScaleType::Nominal).unwrap();
    let pattern: &FusionPattern = &spec.pattern;
    let (r, tau2, gamma) = (500.0, 0.8, spec.gamma());
    let states: Vec<IndicatorState> = (0..8).map(|m| IndicatorState::from_mask(pattern, m)).collect();
    let log_w: Vec<f64> = states.iter().map(|d| log_indicator_weight(d, r).unwrap()).collect();
    let log_z = log_w.iter().map(|w| w.exp()).sum::<f64>().ln();

    let mut reference = None;
    let mut g = effect_fusion::rng::stream(3, &[]);
    for _ in 0..100 {
        let beta = [
            effect_fusion::dist::std_normal(&mut g),
            effect_fusion::dist::std_normal(&mut g) * 0.1,
        ];
        let level = |k: usize| if k == 0 { 0.0 } else { beta[k - 1] };
        for (d, lw) in states.iter().zip(&log_w) {
            let q = build_structure_matrix(&spec, d, r).unwrap().q;
            let cov_inv = &q / (gamma * tau2);
            let chol = Cholesky::new(cov_inv.clone()).unwrap();
            let log_det_prec: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
            let b = DVector::from_column_slice(&beta);
            let quad = (b.transpose() * &cov_inv * &b)[(0, 0)];
            let full = lw - log_z
                + 0.5 * log_det_prec
                - (2.0 * std::f64::consts::PI).ln()
                - 0.5 * quad;
            let product: f64 = pattern
                .pairs()
                .iter()
                .enumerate()
                .map(|(i, &(k, j))| {
                    normal_log_pdf(level(k) - level(j), gamma * tau2 / d.kappa(i, r))
                })
                .sum();
            let diff = full - product;
            let base = *reference.get_or_insert(diff);
            assert!((diff - base).abs() < 1e-9, "{diff} vs {base}");
        }
    }
}
