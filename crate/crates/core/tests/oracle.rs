//! Built-in analytic moment tables against the simulation oracle.

use stein_wilks::models::monte_carlo_oracle;
use stein_wilks::{
    assemble_bound, Covariates, Error, Exponential, Logistic, MomentOracle, MomentSource, Normal,
    OracleSettings, ParametricModel, TestFunction,
};

fn settings(reps: usize) -> OracleSettings {
    OracleSettings {
        reps,
        draws: reps,
        seed: 99,
        min_accepted: 10_000,
    }
}

fn agree(exact: &MomentOracle, mc: &MomentOracle) {
    let pairs = exact
        .full
        .tables()
        .zip(mc.full.tables())
        .chain(exact.w.tables().zip(mc.w.tables()));
    for ((name, a), (_, m)) in pairs {
        for (x, y) in a.entries.iter().zip(&m.entries) {
            let slack = 5.0 * y.stderr + 1e-9 * x.value.abs().max(1.0);
            if a.upper_bound {
                assert!(y.value <= x.value + slack, "{name}: {} > {}", y.value, x.value);
            } else {
                assert!((x.value - y.value).abs() <= slack, "{name}: {} vs {} ± {}", x.value, y.value, y.stderr);
            }
        }
    }
}

#[test]
fn exponential_tables() {
    let s = settings(200_000);
    let exact = Exponential.moment_oracle(&[2.0], 15, 1, 1.0, &s).unwrap();
    assert!(exact.certified());
    assert_eq!(exact.w.cross2.as_ref().unwrap().get(&[0, 0]), 0.25);
    let mc = monte_carlo_oracle(&Exponential, &[2.0], 15, 1, 1.0, &s).unwrap();
    assert!(!mc.certified());
    agree(&exact, &mc);
}

#[test]
fn normal_tables() {
    let s = settings(200_000);
    let exact = Normal.moment_oracle(&[0.0, 1.0], 25, 1, 0.5, &s).unwrap();
    assert_eq!(exact.w.cross2.as_ref().unwrap().get(&[0, 1]), 0.0);
    let q6 = exact.full.eq6.as_ref().unwrap().get(&[1]);
    assert!(q6 < 1060.0 / 25f64.powi(3));
    let mc = monte_carlo_oracle(&Normal, &[0.0, 1.0], 25, 1, 0.5, &s).unwrap();
    agree(&exact, &mc);
}

#[test]
fn logistic_oracle_is_uncertified() {
    let model = Logistic::new(2, Covariates::Rademacher).unwrap();
    let oracle = model.moment_oracle(&[0.0, 0.0], 500, 1, 0.5, &settings(10_000)).unwrap();
    assert!(!oracle.certified());
    assert!(oracle.restricted.is_some());
    let entry = oracle.w.abs1.as_ref().unwrap().entry(&[0]);
    assert_eq!(entry.source, MomentSource::MonteCarlo);
    // |x (y - 1/2)| = 1/2 exactly for Rademacher covariates at theta = 0
    assert!((entry.value - 0.5).abs() < 1e-12);

    let b = assemble_bound(&model, &[0.0, 0.0], 500, 1, &TestFunction::ht(), Some(0.5), &settings(10_000)).unwrap();
    assert!(!b.certified);
    assert!(b.uncertainty >= 0.0);
    assert!(b.terms.k2_star > 0.0);
}

#[test]
fn oracle_rejects_rare_conditioning() {
    // eps far below the MLE spread leaves almost no accepted replicates
    let err = monte_carlo_oracle(&Exponential, &[3.0], 10, 1, 1e-4, &settings(10_000)).unwrap_err();
    assert!(matches!(err, Error::InsufficientConditionalSamples { .. }), "{err}");
}

#[test]
fn oracle_is_deterministic_across_pools() {
    let model = Logistic::new(2, Covariates::Rademacher).unwrap();
    let run = || format!("{:?}", model.moment_oracle(&[0.0, 0.0], 200, 1, 0.5, &settings(20_000)).unwrap());
    let a = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(run);
    let b = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap().install(run);
    assert_eq!(a, b);
}
