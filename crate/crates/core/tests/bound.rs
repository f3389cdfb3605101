use stein_wilks::bound::{compute_k1, compute_k2, compute_r, model_blocks};
use stein_wilks::{
    assemble_bound, exponential_corollary_bound, logistic_bound_scaling, normal_corollary_bound,
    Exponential, HNorms, Normal, OracleSettings, ParametricModel, TestFunction,
};

fn ht() -> TestFunction {
    TestFunction::ht()
}

fn exp_bound(n: usize, h: &TestFunction) -> stein_wilks::BoundBreakdown {
    assemble_bound(&Exponential, &[3.0], n, 1, h, None, &OracleSettings::default()).unwrap()
}

#[test]
fn exponential_reproduction() {
    let b = exp_bound(100_000, &ht());
    assert!((1.206..=1.226).contains(&b.total), "{}", b.total);
    assert!((b.terms.k1 - 0.008).abs() <= 0.001);
    assert!(b.terms.r <= 0.0041);
    assert!(b.terms.k2 <= 1.205);
    // frozen reference values
    assert!((b.total - 1.212_735_4).abs() < 5e-7);
    assert!((b.terms.k2 - 1.204_447_2).abs() < 5e-7);
    assert_eq!(
        b.total,
        b.terms.r + b.terms.k1 + b.terms.k1_star + b.terms.k2 + b.terms.k2_star
    );
}

#[test]
fn exponential_components_match_closed_forms() {
    let theta0 = 3.0;
    let n = 100_000usize;
    let nf = n as f64;
    let settings = OracleSettings::default();
    let oracle = Exponential.moment_oracle(&[theta0], n, 1, theta0 / 2.0, &settings).unwrap();
    let blocks = model_blocks(&Exponential, &[theta0], 1).unwrap();
    let k1 = compute_k1(&oracle.full, &blocks, n, false).unwrap();
    let expected = 6.0 * (3.0 + 6.0 / nf).sqrt() + 4.0 / nf.sqrt() * (15.0 + 130.0 / nf + 120.0 / (nf * nf)).sqrt();
    assert!((k1 - expected).abs() < 1e-9 * expected, "{k1} vs {expected}");

    let r = compute_r(&oracle.w, &blocks, n).unwrap();
    let published_r = 2f64.sqrt() / (theta0.powi(8) * std::f64::consts::PI.sqrt())
        * (19.0 * theta0.powi(4) + 325.0 * theta0 * theta0 + 2733.0 + 36973.0 / nf);
    assert!(r <= published_r && published_r <= 0.876, "{r} vs {published_r}");

    // leading K2 summand alone: 8 ||h|| / sqrt(n)
    let only_h = HNorms { h: 1.0, h1: 0.0, h2: 0.0 };
    let k2 = compute_k2(&oracle.full, &blocks, n, theta0 / 2.0, &only_h, false).unwrap();
    assert!((k2 - 8.0 / nf.sqrt()).abs() < 1e-12);
}

#[test]
fn exponential_large_n() {
    assert!(exp_bound(1_000_000_000, &ht()).total <= 0.02);
}

#[test]
fn assembled_matches_corollary() {
    for n in [10_000usize, 100_000, 1_000_000, 100_000_000] {
        let a = exp_bound(n, &ht()).total;
        let c = exponential_corollary_bound(3.0, n, &ht().norms, true);
        assert!((a - c).abs() <= 0.005 * c, "n = {n}: {a} vs {c}");
    }
}

#[test]
fn monotone_in_n() {
    let grid: Vec<usize> = (3..=9).map(|e| 10usize.pow(e)).collect();
    for pair in grid.windows(2) {
        assert!(exp_bound(pair[0], &ht()).total > exp_bound(pair[1], &ht()).total);
        let a = assemble_bound(&Normal, &[0.0, 1.0], pair[0], 1, &ht(), None, &OracleSettings::default()).unwrap();
        let b = assemble_bound(&Normal, &[0.0, 1.0], pair[1], 1, &ht(), None, &OracleSettings::default()).unwrap();
        assert!(a.total > b.total);
    }
}

#[test]
fn rate_ratio() {
    for n in [1_000_000usize, 10_000_000] {
        let ratio = exp_bound(100 * n, &ht()).total / exp_bound(n, &ht()).total;
        assert!((0.085..=0.115).contains(&ratio), "{ratio}");
    }
}

#[test]
fn doubling_norms_doubles_terms() {
    let h = ht();
    let doubled = h.with_scaled_norms(2.0);
    for n in [1000usize, 100_000] {
        let a = exp_bound(n, &h);
        let b = exp_bound(n, &doubled);
        assert_eq!(b.terms, a.terms.scaled(2.0));
        assert_eq!(b.total, 2.0 * a.total);
    }
}

#[test]
fn zero_norms_give_zero() {
    let b = exp_bound(100_000, &TestFunction::zero());
    assert_eq!(b.total, 0.0);
    assert_eq!(exponential_corollary_bound(3.0, 100_000, &TestFunction::zero().norms, true), 0.0);
}

#[test]
fn simple_null_has_no_starred_terms() {
    let b = exp_bound(1000, &ht());
    assert_eq!(b.terms.k1_star, 0.0);
    assert_eq!(b.terms.k2_star, 0.0);
}

#[test]
fn normal_terms_respect_the_published_bounds() {
    let settings = OracleSettings::default();
    for n in [100usize, 10_000, 1_000_000] {
        let nf = n as f64;
        let oracle = Normal.moment_oracle(&[0.0, 1.0], n, 1, 0.5, &settings).unwrap();
        let blocks = model_blocks(&Normal, &[0.0, 1.0], 1).unwrap();
        let r = compute_r(&oracle.w, &blocks, n).unwrap();
        assert!(r <= (5729.0 + 89672.0 / nf) / std::f64::consts::PI.sqrt());
        let k1 = compute_k1(&oracle.full, &blocks, n, false).unwrap();
        assert!(k1 < 26.0 + 212.0 / nf.sqrt(), "{k1}");
        let k1s = compute_k1(oracle.restricted.as_ref().unwrap(), &blocks, n, true).unwrap();
        assert!(k1s < 33.0 + 220.0 / nf.sqrt(), "{k1s}");
        let b = assemble_bound(&Normal, &[0.0, 1.0], n, 1, &ht(), Some(0.5), &settings).unwrap();
        assert!(b.total <= normal_corollary_bound(1.0, n, &ht().norms).unwrap());
        assert!(b.terms.k1_star > 0.0 && b.terms.k2_star > 0.0);
    }
}

#[test]
fn normal_corollary_reference() {
    let norms = ht().norms;
    let b = normal_corollary_bound(1.0, 1_000_000, &norms).unwrap();
    let first = 47456.0 * (norms.h1 + norms.h2) / (1e6 * std::f64::consts::PI).sqrt();
    assert!((first - 19.53).abs() < 0.01, "{first}");
    assert!((b - 96_108.374_97).abs() < 1e-4);
    // both maxima switch on away from unit variance
    assert!(normal_corollary_bound(0.5, 1000, &norms).unwrap() > normal_corollary_bound(1.0, 1000, &norms).unwrap());
    assert!(normal_corollary_bound(2.0, 1000, &norms).unwrap() > normal_corollary_bound(1.0, 1000, &norms).unwrap());
}

#[test]
fn logistic_scaling_orders() {
    for d in [1usize, 2, 4, 8, 16, 32] {
        let a = logistic_bound_scaling(d, 1, 10_000, 1.0).unwrap();
        let b = logistic_bound_scaling(2 * d, 1, 10_000, 1.0).unwrap();
        assert!(b.coefficient / a.coefficient <= 128.0);
    }
    let wide = logistic_bound_scaling(100, 1, 1000, 1.0).unwrap();
    assert!(wide.bound > 1.0);
    assert!(!wide.admissible);
}

#[test]
fn epsilon_errors() {
    let model = stein_wilks::Logistic::new(2, Default::default()).unwrap();
    let err = assemble_bound(&model, &[0.0, 0.0], 100, 1, &ht(), None, &OracleSettings::default());
    assert!(matches!(err, Err(stein_wilks::Error::EpsilonRequired(_))));
    let err = assemble_bound(&Exponential, &[3.0], 100, 1, &ht(), Some(-1.0), &OracleSettings::default());
    assert!(matches!(err, Err(stein_wilks::Error::NonpositiveEpsilon(_))));
}
