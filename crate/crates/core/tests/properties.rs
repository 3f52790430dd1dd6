use ivtest::anderson_rubin::ar_statistic;
use ivtest::prob::empirical_quantile;
use ivtest::stats::{covariance_from_weights, quantile_indicators, sigma_hat, t_statistic, tq_statistic};
use ivtest::{
    psd_factor, test_composite, test_composite_shortcut, test_simple, Dataset, ModelSpec, RngState, SymMatrix,
    TestConfig, ThetaPartition,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn linear_data(seed: u64, n: usize, q: usize, beta: f64) -> Dataset {
    let mut rng = RngState::new(seed);
    let z = DMatrix::from_fn(n, q, |_, _| rng.standard_normal());
    let mut x = DMatrix::zeros(n, 1);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let u = rng.standard_normal();
        x[(i, 0)] = 0.5 * z.row(i).sum() + 0.6 * rng.standard_normal() + 0.75 * u;
        y[i] = beta * x[(i, 0)] + u;
    }
    Dataset::new(y, x, z).unwrap()
}

fn composite_data(seed: u64, n: usize, q: usize, beta1: f64) -> (Dataset, ThetaPartition) {
    let mut rng = RngState::new(seed);
    let mut z = DMatrix::zeros(n, q + 1);
    let mut x = DMatrix::zeros(n, 2);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        for j in 0..q {
            z[(i, j)] = rng.standard_normal();
        }
        let u = rng.standard_normal();
        let x2 = rng.standard_normal();
        z[(i, q)] = x2;
        let x1 = 0.5 * z.row(i).columns(0, q).sum() + 0.6 * rng.standard_normal() + 0.75 * u;
        x[(i, 0)] = x1;
        x[(i, 1)] = x2;
        y[i] = beta1 * x1 + x2 + u;
    }
    (Dataset::new(y, x, z).unwrap(), ThetaPartition::new(2, vec![0], vec![0.0]).unwrap())
}

fn cfg(seed: u64) -> TestConfig {
    TestConfig { draws: 500, ..TestConfig::with_seed(seed) }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn instrument_scaling_by_powers_of_two_is_exact(
        seed in any::<u64>(), n in 10usize..60, q in 1usize..4, beta in -1.0f64..1.0, k in -3i32..4,
    ) {
        let data = linear_data(seed, n, q, beta);
        let c = 2f64.powi(k);
        let scaled = data.scale_instruments(c);
        let model = ModelSpec::linear(1);
        let a = test_simple(&data, &model, &[0.0], &cfg(seed)).unwrap();
        let b = test_simple(&scaled, &model, &[0.0], &cfg(seed)).unwrap();
        prop_assert_eq!(a.reject, b.reject);
        prop_assert_eq!(b.statistic, a.statistic * c * c);
        prop_assert_eq!(b.critical_value, a.critical_value * c * c);
        prop_assert_eq!(a.p_value, b.p_value);
    }

    #[test]
    fn instrument_scaling_preserves_decisions(
        seed in any::<u64>(), n in 10usize..60, q in 1usize..4, beta in -1.0f64..1.0, c in 0.05f64..20.0,
    ) {
        let data = linear_data(seed, n, q, beta);
        let model = ModelSpec::linear(1);
        let a = test_simple(&data, &model, &[0.0], &cfg(seed)).unwrap();
        let b = test_simple(&data.scale_instruments(c), &model, &[0.0], &cfg(seed)).unwrap();
        let margin = (a.statistic - a.critical_value).abs() / a.critical_value.max(1e-300);
        if margin > 1e-9 {
            prop_assert_eq!(a.reject, b.reject);
        }
        prop_assert!((b.statistic - a.statistic * c * c).abs() <= 1e-10 * b.statistic.max(1e-300));
    }

    #[test]
    fn full_composite_rejection_implies_shortcut_rejection(
        seed in any::<u64>(), n in 20usize..60, q in 1usize..3, beta1 in -1.5f64..1.5,
    ) {
        let (data, part) = composite_data(seed, n, q, beta1);
        let model = ModelSpec::linear(2);
        let full = test_composite(&data, &model, &part, &cfg(seed)).unwrap();
        let short = test_composite_shortcut(&data, &model, &part, &cfg(seed)).unwrap();
        if full.reject {
            prop_assert!(short.reject);
        }
        prop_assert!(short.diagnostics.objective >= full.diagnostics.objective - 1e-12);
    }

    #[test]
    fn empirical_quantile_ignores_order(
        (values, shuffled) in prop::collection::vec(-100.0f64..100.0, 1..200)
            .prop_flat_map(|v| (Just(v.clone()), Just(v).prop_shuffle())),
        p in 0.001f64..0.999,
    ) {
        prop_assert_eq!(empirical_quantile(&values, p).unwrap(), empirical_quantile(&shuffled, p).unwrap());
    }

    #[test]
    fn sigma_hat_is_psd(seed in any::<u64>(), n in 2usize..40, q in 1usize..6, theta in -2.0f64..2.0) {
        let data = linear_data(seed, n, q, 0.3);
        let s = sigma_hat(&data, &ModelSpec::linear(1), &[theta]).unwrap();
        let (values, _) = s.matrix.eigen();
        let scale = s.matrix.trace().max(1e-300);
        prop_assert!(values.iter().all(|&l| l >= -1e-10 * scale));
        prop_assert!(s.factor.clipped_mass() <= 1e-10 * scale);
    }

    #[test]
    fn quantile_statistic_is_mean_statistic_of_indicators(
        seed in any::<u64>(), n in 2usize..50, q in 1usize..4, theta in -2.0f64..2.0, a_q in 0.05f64..0.95,
    ) {
        let data = linear_data(seed, n, q, 0.3);
        let model = ModelSpec::linear(1);
        let w = quantile_indicators(&data, &model, &[theta], a_q).unwrap();
        let reduced = Dataset::new(w.clone(), DMatrix::zeros(n, 0), data.z().clone()).unwrap();
        prop_assert_eq!(
            tq_statistic(&data, &model, &[theta], a_q).unwrap(),
            t_statistic(&reduced, &ModelSpec::zero(), &[]).unwrap()
        );
        let sq = covariance_from_weights(data.z(), &w).unwrap();
        let sm = sigma_hat(&reduced, &ModelSpec::zero(), &[]).unwrap();
        prop_assert_eq!(sq.matrix.as_matrix(), sm.matrix.as_matrix());
    }

    #[test]
    fn psd_factor_reconstructs_psd_input(seed in any::<u64>(), q in 1usize..6, rank in 1usize..6) {
        let mut rng = RngState::new(seed);
        let b = DMatrix::from_fn(q, rank, |_, _| rng.standard_normal());
        let m = SymMatrix::new(&b * b.transpose()).unwrap();
        let f = psd_factor(&m).unwrap();
        let err = (f.reconstruct() - m.as_matrix()).abs().max();
        prop_assert!(err <= 1e-10 * (1.0 + m.as_matrix().abs().max()));
    }

    #[test]
    fn ar_statistic_is_invariant_to_instrument_scale(
        seed in any::<u64>(), n in 10usize..60, q in 1usize..4, c in 0.01f64..100.0,
    ) {
        let data = linear_data(seed, n, q, 0.5);
        let a = ar_statistic(&data, &[0.0], &[], 0.05).unwrap();
        let b = ar_statistic(&data.scale_instruments(c), &[0.0], &[], 0.05).unwrap();
        prop_assert!((a.statistic - b.statistic).abs() <= 1e-9 * a.statistic.max(1.0));
    }

    #[test]
    fn critical_value_nonincreasing_in_alpha(seed in any::<u64>(), n in 10usize..40, lo in 0.01f64..0.5, gap in 0.0f64..0.4) {
        let data = linear_data(seed, n, 2, 0.0);
        let model = ModelSpec::linear(1);
        let strict = test_simple(&data, &model, &[0.0], &TestConfig { alpha: lo, ..cfg(seed) }).unwrap();
        let loose = test_simple(&data, &model, &[0.0], &TestConfig { alpha: lo + gap, ..cfg(seed) }).unwrap();
        prop_assert!(loose.critical_value <= strict.critical_value);
    }
}
