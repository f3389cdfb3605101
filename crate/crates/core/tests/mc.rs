use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution};
use statrs::function::gamma::ln_gamma;
use stein_wilks::mc::{
    chisq_expectation, chisq_expectation_fn, estimate_distance, ks_distance, rate_sweep,
    rate_sweep_with, write_sweep_csv, McOptions,
};
use stein_wilks::quadrature::{integrate, integrate_to_infinity};
use stein_wilks::{Exponential, OracleSettings, TestFunction};

#[test]
fn polynomial_expectations_are_exact() {
    for r in 1..=6usize {
        let rf = r as f64;
        let raw = [1.0, rf, rf * (rf + 2.0), rf * (rf + 2.0) * (rf + 4.0), rf * (rf + 2.0) * (rf + 4.0) * (rf + 6.0)];
        for (k, exact) in raw.iter().enumerate() {
            let got = chisq_expectation_fn(|x| x.powi(k as i32), r).unwrap();
            assert!((got - exact).abs() <= 1e-10 * exact.max(1.0), "r={r} k={k}: {got}");
        }
        // a mixed polynomial
        let got = chisq_expectation_fn(|x| 2.0 - x + 0.5 * x * x, r).unwrap();
        assert!((got - (2.0 - raw[1] + 0.5 * raw[2])).abs() <= 1e-10 * raw[2]);
    }
}

#[test]
fn ht_reference_matches_simulation() {
    let h = TestFunction::ht();
    let reference = chisq_expectation(&h, 1).unwrap();
    let law = ChiSquared::new(1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let m = 10_000_000;
    let vals: Vec<f64> = (0..m).map(|_| h.h(law.sample(&mut rng))).collect();
    let mean = vals.iter().sum::<f64>() / m as f64;
    let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64).sqrt();
    assert!((mean - reference).abs() <= 5.0 * sd / (m as f64).sqrt());
}

#[test]
fn ks_calibration_on_exact_draws() {
    let law = ChiSquared::new(1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let reps = 100_000;
    let xs: Vec<f64> = (0..reps).map(|_| law.sample(&mut rng)).collect();
    assert!(ks_distance(&xs, 1).unwrap() <= 1.63 / (reps as f64).sqrt());
}

#[test]
fn constant_h_gives_zero_distance() {
    let h = TestFunction::constant(0.7);
    let est = estimate_distance(&Exponential, &[3.0], 30, 1, &h, 10_000, 3).unwrap();
    assert!(est.mean.abs() < 1e-12);
    assert!(est.stderr < 1e-12);
}

#[test]
fn distance_shrinks_from_small_samples() {
    let h = TestFunction::ht();
    let small = estimate_distance(&Exponential, &[3.0], 5, 1, &h, 100_000, 8).unwrap();
    let large = estimate_distance(&Exponential, &[3.0], 500, 1, &h, 100_000, 8).unwrap();
    assert!(large.mean < small.mean);
    assert_eq!(small.failed_reps, 0);
}

/// `E h(-2 log Lambda)` for the exponential simple null, by quadrature over
/// the `Gamma(n, n)` law of `Xbar / theta0`.
fn exact_exponential_distance(n: usize, h: &TestFunction) -> f64 {
    let nf = n as f64;
    let density = |x: f64| {
        if x <= 0.0 {
            0.0
        } else {
            (nf * nf.ln() + (nf - 1.0) * x.ln() - nf * x - ln_gamma(nf)).exp()
        }
    };
    let f = |x: f64| density(x) * h.h(2.0 * nf * (x - 1.0 - x.ln()));
    let sd = 1.0 / nf.sqrt();
    let lo = (1.0 - 12.0 * sd).max(0.0);
    let body = integrate(f, lo, 1.0 + 12.0 * sd, 1e-12, 1e-10).unwrap().value;
    let tail = integrate_to_infinity(f, 1.0 + 12.0 * sd, 1e-12, 1e-10).unwrap().value;
    let head = if lo > 0.0 { 0.0 } else { integrate(f, 0.0, lo, 1e-12, 1e-10).unwrap().value };
    (body + tail + head - chisq_expectation(h, 1).unwrap()).abs()
}

#[test]
fn exact_distance_decreases_and_matches_simulation() {
    let h = TestFunction::ht();
    let exact: Vec<f64> = [5, 50, 500, 5000].iter().map(|&n| exact_exponential_distance(n, &h)).collect();
    assert!(exact.windows(2).all(|w| w[1] < w[0]), "{exact:?}");
    // roughly inverse-linear in n
    assert!((exact[1] / exact[2] - 10.0).abs() < 0.5);
    let est = estimate_distance(&Exponential, &[3.0], 5, 1, &h, 100_000, 1).unwrap();
    assert!((est.mean - exact[0]).abs() <= 5.0 * est.stderr);
}

#[test]
fn rate_sweep_slope() {
    let grid: Vec<usize> = (4..=10).map(|e| 10usize.pow(e)).collect();
    let sweep = rate_sweep(
        &Exponential,
        &[3.0],
        1,
        &TestFunction::ht(),
        &grid,
        None,
        &OracleSettings::default(),
        None,
    )
    .unwrap();
    assert!((-0.55..=-0.45).contains(&sweep.slope), "{}", sweep.slope);
    let flat = rate_sweep_with(&grid, |_| Ok(3.0)).unwrap();
    assert!(flat.slope.abs() < 1e-12);
    assert!(rate_sweep_with(&[10, 100, 1000], |_| Ok(1.0)).is_err());
}

#[test]
fn sweeps_are_reproducible() {
    let grid = [100usize, 1000, 10_000, 100_000];
    let run = || {
        let sweep = rate_sweep(
            &Exponential,
            &[3.0],
            1,
            &TestFunction::ht(),
            &grid,
            None,
            &OracleSettings::default(),
            Some(McOptions { reps: 10_000, master_seed: 5 }),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&sweep.rows, &mut buf).unwrap();
        buf
    };
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(run);
    let multi = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(run);
    assert_eq!(single, multi);
    let text = String::from_utf8(single).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().skip(1).all(|l| l.split(',').all(|f| !f.is_empty())));
}

#[test]
fn too_few_replicates_rejected() {
    assert!(estimate_distance(&Exponential, &[3.0], 30, 1, &TestFunction::ht(), 9_999, 0).is_err());
}
