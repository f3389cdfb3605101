use proptest::prelude::*;
use stein_wilks::bound::model_blocks;
use stein_wilks::mc::ks_distance;
use stein_wilks::moments::{chisq_central_moment, gamma_mean_central_moment};
use stein_wilks::{
    assemble_bound, exponential_corollary_bound, neg2_log_lambda, Dataset, Exponential, HNorms,
    Normal, OracleSettings, ParametricModel, TestFunction,
};

fn norms() -> impl Strategy<Value = HNorms> {
    (0.0f64..5.0, 0.0f64..5.0, 0.0f64..5.0).prop_map(|(h, h1, h2)| HNorms { h, h1, h2 })
}

fn with_norms(n: HNorms) -> TestFunction {
    TestFunction::new("custom", |_| 0.0, |_| 0.0, |_| 0.0, n).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn terms_are_nonnegative(theta in 0.2f64..20.0, exp in 2u32..9, n in norms()) {
        let b = assemble_bound(&Exponential, &[theta], 10usize.pow(exp), 1, &with_norms(n), None, &OracleSettings::default()).unwrap();
        let t = b.terms;
        prop_assert!(t.r >= 0.0 && t.k1 >= 0.0 && t.k2 >= 0.0);
        prop_assert_eq!(b.total, t.r + t.k1 + t.k1_star + t.k2 + t.k2_star);
    }

    #[test]
    fn normal_terms_are_nonnegative(sigma2 in 0.3f64..5.0, exp in 2u32..8, n in norms()) {
        let b = assemble_bound(&Normal, &[0.0, sigma2], 10usize.pow(exp), 1, &with_norms(n), None, &OracleSettings::default()).unwrap();
        let t = b.terms;
        prop_assert!(t.r >= 0.0 && t.k1 >= 0.0 && t.k1_star >= 0.0 && t.k2 >= 0.0 && t.k2_star >= 0.0);
    }

    #[test]
    fn corollary_is_linear_in_norms(theta in 0.5f64..10.0, n in 10usize..10_000_000, a in norms(), b in norms()) {
        let sum = HNorms { h: a.h + b.h, h1: a.h1 + b.h1, h2: a.h2 + b.h2 };
        let lhs = exponential_corollary_bound(theta, n, &sum, true);
        let rhs = exponential_corollary_bound(theta, n, &a, true) + exponential_corollary_bound(theta, n, &b, true);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn lrt_is_nonnegative(seed in any::<u64>(), n in 2usize..200, theta in 0.5f64..5.0) {
        let data = Exponential.sample(&[theta], n, seed);
        prop_assert!(neg2_log_lambda(&Exponential, &data, 1, &[theta]).unwrap().statistic >= -1e-8);
        let data = Normal.sample(&[0.0, theta], n.max(3), seed);
        prop_assert!(neg2_log_lambda(&Normal, &data, 1, &[0.0, theta]).unwrap().statistic >= -1e-8);
    }

    #[test]
    fn even_moments_are_positive(n in 1u64..10_000, theta in 0.1f64..10.0, nu in 1u64..1000, shift in -50.0f64..50.0) {
        for k in [2, 4, 6, 8] {
            prop_assert!(gamma_mean_central_moment(n, theta, k).unwrap() > 0.0);
            prop_assert!(chisq_central_moment(nu, k, shift).unwrap() > 0.0);
        }
    }

    #[test]
    fn second_moments_are_variances(n in 1u64..10_000, theta in 0.1f64..10.0, nu in 1u64..1000) {
        let v = gamma_mean_central_moment(n, theta, 2).unwrap();
        prop_assert!((v - theta * theta / n as f64).abs() <= 1e-12 * v);
        prop_assert!((chisq_central_moment(nu, 2, nu as f64).unwrap() - 2.0 * nu as f64).abs() <= 1e-9 * nu as f64);
    }

    #[test]
    fn ks_is_a_distance(xs in prop::collection::vec(0.0f64..30.0, 1..200)) {
        let d = ks_distance(&xs, 2).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert!(d >= 0.5 / xs.len() as f64 - 1e-12);
    }

    #[test]
    fn csv_round_trips(values in prop::collection::vec(-1e6f64..1e6, 1..60)) {
        let data = Dataset::new(2, values[..values.len() / 2 * 2].to_vec());
        if let Ok(data) = data {
            let mut buf = Vec::new();
            data.write_csv(&mut buf).unwrap();
            prop_assert_eq!(Dataset::read_csv(buf.as_slice()).unwrap(), data);
        }
    }

    #[test]
    fn simple_null_blocks(theta in 0.1f64..10.0) {
        let blocks = model_blocks(&Exponential, &[theta], 1).unwrap();
        prop_assert_eq!(blocks.nuisance_dim(), 0);
        prop_assert!((blocks.c - 1.0 / (theta * theta)).abs() < 1e-15);
    }
}
