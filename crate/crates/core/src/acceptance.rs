//! The acceptance suite: one check per criterion, each returning a pass/fail
//! report with the measured values. Shared by the `verify` command and the
//! `acceptance` test target.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};
use serde::Serialize;

use crate::bound::{
    assemble_bound, exponential_corollary_bound, normal_corollary_bound, NORMAL_COROLLARY_CONSTANTS,
};
use crate::error::{Error, Result};
use crate::fisher::{partition_fisher, quadratic_form_g, spd_inverse_sqrt};
use crate::mc::{dimension_sweep, estimate_distance, rate_sweep_with, wilks_ks_check, McOptions};
use crate::model::{
    Dataset, MomentOracle, MomentTable, OracleSettings, ParametricModel, TestFunction,
};
use crate::models::{monte_carlo_oracle, Covariates, Exponential, Logistic, Normal};
use crate::moments::{chisq_central_moment, gamma_mean_central_moment, halfnormal_abs_moment};

/// Master seed used by every simulated criterion.
pub const MASTER_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionReport {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

pub const CRITERIA: [(u8, &str); 9] = [
    (1, "exponential bound reproduction"),
    (2, "schur identity"),
    (3, "moment oracles"),
    (4, "bound validity"),
    (5, "rate claim"),
    (6, "normal corollary"),
    (7, "wilks sanity"),
    (8, "logistic"),
    (9, "determinism"),
];

/// Runs criterion `id`; an error inside the check counts as a failure.
pub fn run_criterion(id: u8) -> Result<CriterionReport> {
    let name = CRITERIA
        .iter()
        .find(|(i, _)| *i == id)
        .map(|(_, n)| *n)
        .ok_or_else(|| Error::Config(format!("no acceptance criterion {id}")))?;
    let start = Instant::now();
    let outcome = match id {
        1 => reference_reproduction(),
        2 => schur_identity(),
        3 => moment_oracles(),
        4 => bound_validity(),
        5 => rate_claim(),
        6 => normal_corollary(),
        7 => wilks_sanity(),
        8 => logistic(),
        _ => determinism(),
    };
    let seconds = start.elapsed().as_secs_f64();
    let (passed, detail) = match outcome {
        Ok(Check { passed, detail, limit }) => {
            let in_time = limit.is_none_or(|l| seconds < l);
            let timing = limit.map_or(String::new(), |l| format!("; {seconds:.2}s (limit {l}s)"));
            (passed && in_time, format!("{detail}{timing}"))
        }
        Err(e) => (false, format!("error: {e}")),
    };
    Ok(CriterionReport {
        id,
        name,
        passed,
        detail,
        seconds,
    })
}

pub fn run_all() -> Vec<CriterionReport> {
    CRITERIA
        .iter()
        .map(|(id, _)| run_criterion(*id).expect("listed criterion"))
        .collect()
}

struct Check {
    passed: bool,
    detail: String,
    /// Wall-clock limit in seconds.
    limit: Option<f64>,
}

fn reference_reproduction() -> Result<Check> {
    let b = assemble_bound(
        &Exponential,
        &[3.0],
        100_000,
        1,
        &TestFunction::ht(),
        None,
        &OracleSettings::default(),
    )?;
    let t = &b.terms;
    let passed = (1.206..=1.226).contains(&b.total)
        && (t.k1 - 0.008).abs() <= 0.001
        && t.r <= 0.0041
        && t.k2 <= 1.205;
    Ok(Check {
        passed,
        detail: format!(
            "total {:.6}, r {:.6}, k1 {:.6}, k2 {:.6}",
            b.total, t.r, t.k1, t.k2
        ),
        limit: Some(1.0),
    })
}

fn random_spd(dim: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let m = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    &m * m.transpose() + DMatrix::identity(dim, dim) * 0.5
}

fn schur_identity() -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(MASTER_SEED);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for i in 0..1000 {
        let dim = 1 + i % 20;
        let info = random_spd(dim, &mut rng);
        for r in 1..=dim {
            let blocks = partition_fisher(&info, r)?;
            let xi = DVector::from_fn(r, |_, _| rng.random_range(-3.0..3.0));
            let eta = DVector::from_fn(dim - r, |_, _| rng.random_range(-3.0..3.0));
            let (gf, gs) = quadratic_form_g(&xi, &eta, &blocks)?;
            let w = DVector::from_iterator(dim, xi.iter().chain(eta.iter()).copied());
            let scale = w.dot(&(&blocks.full_inv * &w)).max(gs.abs());
            worst = worst.max((gf - gs).abs() / scale);
            cases += 1;
        }
    }
    Ok(Check {
        passed: worst <= 1e-10,
        detail: format!("{cases} partitions, worst relative gap {worst:.2e}"),
        limit: Some(5.0),
    })
}

const ORACLE_DRAWS: usize = 1_000_000;

/// Accumulates comparisons of analytic values with simulated ones.
#[derive(Default)]
struct Agreement {
    checked: usize,
    failures: Vec<String>,
}

impl Agreement {
    /// Exact entries must lie within five standard errors; upper bounds must
    /// not be exceeded by more than five.
    fn compare(&mut self, label: &str, exact: f64, mc: f64, se: f64, upper_bound: bool) {
        let slack = 5.0 * se + 1e-9 * exact.abs().max(1.0);
        let ok = if upper_bound {
            mc <= exact + slack
        } else {
            (exact - mc).abs() <= slack
        };
        self.checked += 1;
        if !ok {
            self.failures
                .push(format!("{label}: analytic {exact:.6e}, simulated {mc:.6e} ± {se:.2e}"));
        }
    }

    fn tables(&mut self, label: &str, exact: &MomentTable, mc: &MomentTable) {
        for (i, (a, m)) in exact.entries.iter().zip(&mc.entries).enumerate() {
            self.compare(&format!("{label}[{i}]"), a.value, m.value, m.stderr, exact.upper_bound);
        }
    }

    fn oracles(&mut self, model: &str, exact: &MomentOracle, mc: &MomentOracle) {
        let pairs = exact.full.tables().zip(mc.full.tables());
        for ((name, a), (_, m)) in pairs {
            self.tables(&format!("{model}.{name}"), a, m);
        }
        if let (Some(a), Some(m)) = (&exact.restricted, &mc.restricted) {
            for ((name, a), (_, m)) in a.tables().zip(m.tables()) {
                self.tables(&format!("{model}.restricted.{name}"), a, m);
            }
        }
        for ((name, a), (_, m)) in exact.w.tables().zip(mc.w.tables()) {
            // the Gaussian tables are computed identically on both sides
            if !name.starts_with("z_") {
                self.tables(&format!("{model}.{name}"), a, m);
            }
        }
    }
}

fn sample_moment(xs: &[f64], f: impl Fn(f64) -> f64) -> (f64, f64) {
    let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    crate::model::mean_and_se(vals.iter().copied(), vals.len() as f64)
}

fn moment_oracles() -> Result<Check> {
    let mut agree = Agreement::default();
    let mut rng = ChaCha8Rng::seed_from_u64(MASTER_SEED);

    // gamma sample means
    let (n, theta) = (10u64, 3.0);
    let law = Gamma::new(n as f64, theta / n as f64).map_err(|e| Error::Config(e.to_string()))?;
    let xs: Vec<f64> = (0..ORACLE_DRAWS).map(|_| law.sample(&mut rng)).collect();
    for k in [2, 4, 6, 8] {
        let (m, se) = sample_moment(&xs, |x| (x - theta).powi(k as i32));
        agree.compare(&format!("gamma mean k={k}"), gamma_mean_central_moment(n, theta, k)?, m, se, false);
    }

    // chisquare, about the mean and about zero
    let nu = 4u64;
    let law = ChiSquared::new(nu as f64).map_err(|e| Error::Config(e.to_string()))?;
    let xs: Vec<f64> = (0..ORACLE_DRAWS).map(|_| law.sample(&mut rng)).collect();
    for k in [2, 4, 6, 8] {
        for shift in [nu as f64, 0.0] {
            let (m, se) = sample_moment(&xs, |x| (x - shift).powi(k as i32));
            agree.compare(&format!("chisq k={k} shift={shift}"), chisq_central_moment(nu, k, shift)?, m, se, false);
        }
    }

    // half-normal
    let zs: Vec<f64> = (0..ORACLE_DRAWS).map(|_| StandardNormal.sample(&mut rng)).collect();
    for k in 1..=8 {
        let (m, se) = sample_moment(&zs, |z| z.abs().powi(k as i32));
        agree.compare(&format!("half-normal k={k}"), halfnormal_abs_moment(k), m, se, false);
    }

    // Gaussian tables against V = I^{-1/2} Z
    let infos = [
        ("exponential", DMatrix::from_element(1, 1, 1.0 / 9.0)),
        ("normal", DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5])),
    ];
    for (label, info) in &infos {
        let d = info.nrows();
        let root = spd_inverse_sqrt(info)?;
        let (z_abs, z_sq) = crate::models::gaussian_z_tables(info)?;
        let draws: Vec<DVector<f64>> = (0..ORACLE_DRAWS)
            .map(|_| DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng)))
            .collect();
        for s in 0..d {
            let v = |z: &DVector<f64>| (root.row(s) * z)[0];
            let vals: Vec<f64> = draws.iter().map(|z| v(z).abs()).collect();
            let (m, se) = crate::model::mean_and_se(vals.iter().copied(), vals.len() as f64);
            agree.compare(&format!("{label}.z_abs[{s}]"), z_abs.get(&[s]), m, se, false);
            for t in 0..d {
                let vals: Vec<f64> = draws.iter().map(|z| (v(z) * z[t] * z[t]).abs()).collect();
                let (m, se) = crate::model::mean_and_se(vals.iter().copied(), vals.len() as f64);
                agree.compare(&format!("{label}.z_sq[{s},{t}]"), z_sq.get(&[s, t]), m, se, false);
            }
        }
    }

    // model tables against the simulation oracle
    let settings = OracleSettings {
        reps: ORACLE_DRAWS,
        draws: ORACLE_DRAWS,
        seed: MASTER_SEED,
        min_accepted: 10_000,
    };
    let n = 20;
    let exp_eps = 1.5;
    let exact = Exponential.moment_oracle(&[3.0], n, 1, exp_eps, &settings)?;
    let mc = monte_carlo_oracle(&Exponential, &[3.0], n, 1, exp_eps, &settings)?;
    agree.oracles("exponential", &exact, &mc);
    let normal_eps = 0.5;
    let exact = Normal.moment_oracle(&[0.0, 1.0], n, 1, normal_eps, &settings)?;
    let mc = monte_carlo_oracle(&Normal, &[0.0, 1.0], n, 1, normal_eps, &settings)?;
    agree.oracles("normal", &exact, &mc);

    let mut detail = format!("{} entries, {} outside 5 stderr", agree.checked, agree.failures.len());
    for f in agree.failures.iter().take(5) {
        detail.push_str("; ");
        detail.push_str(f);
    }
    Ok(Check {
        passed: agree.failures.is_empty(),
        detail,
        limit: Some(60.0),
    })
}

fn bound_validity() -> Result<Check> {
    let h = TestFunction::ht();
    let mut passed = true;
    let mut parts = Vec::new();
    let mut previous = f64::INFINITY;
    for n in [50, 500, 5000] {
        let est = estimate_distance(&Exponential, &[3.0], n, 1, &h, 200_000, MASTER_SEED)?;
        let bound = assemble_bound(&Exponential, &[3.0], n, 1, &h, None, &OracleSettings::default())?;
        let covered = est.mean + 3.0 * est.stderr <= bound.total;
        let decreasing = est.mean < previous;
        passed &= covered && decreasing;
        previous = est.mean;
        parts.push(format!(
            "n={n}: mc {:.3e} ± {:.1e} vs bound {:.4}{}{}",
            est.mean,
            est.stderr,
            bound.total,
            if covered { "" } else { " (bound exceeded)" },
            if decreasing { "" } else { " (not decreasing)" },
        ));
    }
    Ok(Check {
        passed,
        detail: parts.join("; "),
        limit: Some(600.0),
    })
}

fn rate_claim() -> Result<Check> {
    let norms = TestFunction::ht().norms;
    let grid: Vec<usize> = (4..=10).map(|e| 10usize.pow(e)).collect();
    let bound = |n: usize| {
        Ok(assemble_bound(
            &Exponential,
            &[3.0],
            n,
            1,
            &TestFunction::ht(),
            None,
            &OracleSettings::default(),
        )?
        .total)
    };
    let sweep = rate_sweep_with(&grid, bound)?;
    let mut ratios = Vec::new();
    for n in [1_000_000usize, 10_000_000, 100_000_000] {
        ratios.push(bound(100 * n)? / bound(n)?);
    }
    let corollary_ratio =
        exponential_corollary_bound(3.0, 100_000_000, &norms, true) / exponential_corollary_bound(3.0, 1_000_000, &norms, true);
    let passed = (-0.55..=-0.45).contains(&sweep.slope)
        && ratios.iter().all(|r| (0.085..=0.115).contains(r));
    Ok(Check {
        passed,
        detail: format!(
            "slope {:.4}, ratios {:?}, corollary ratio {corollary_ratio:.4}",
            sweep.slope,
            ratios.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>()
        ),
        limit: Some(1.0),
    })
}

fn normal_corollary() -> Result<Check> {
    let norms = TestFunction::ht().norms;
    let n = 1_000_000f64;
    let value = normal_corollary_bound(1.0, 1_000_000, &norms)?;
    // re-evaluated term by term at sigma = 1
    let pi = std::f64::consts::PI;
    let reference = 47456.0 * (norms.h2 + norms.h1) / (n * pi).sqrt()
        + 418_433_114.0 * norms.h1 / n.sqrt()
        + 8.0 * norms.h / n * 5.0;
    let rel = (value - reference).abs() / reference;
    let constants = NORMAL_COROLLARY_CONSTANTS == [47456.0, 418433114.0, 8.0];
    Ok(Check {
        passed: rel <= 1e-9 && constants,
        detail: format!("bound {value:.6}, reference {reference:.6}, relative gap {rel:.1e}, constants verbatim: {constants}"),
        limit: None,
    })
}

fn wilks_sanity() -> Result<Check> {
    let ks = wilks_ks_check(&Exponential, &[3.0], 5000, 1, 100_000, MASTER_SEED)?;
    Ok(Check {
        passed: ks <= 0.01,
        detail: format!("KS distance {ks:.5}"),
        limit: Some(300.0),
    })
}

/// Central differences of the analytic Hessian along coordinate `k`.
fn fd_third(model: &dyn ParametricModel, x: &[f64], theta: &[f64], k: usize) -> DMatrix<f64> {
    let step = 1e-5;
    let mut up = theta.to_vec();
    let mut down = theta.to_vec();
    up[k] += step;
    down[k] -= step;
    (model.hessian(x, &up) - model.hessian(x, &down)) / (2.0 * step)
}

fn logistic() -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(MASTER_SEED);
    let mut parts = Vec::new();
    let mut passed = true;

    // Newton on nonseparable data
    let mut worst_grad = 0.0f64;
    for d in 1..=8 {
        let model = Logistic::new(d, Covariates::Rademacher)?;
        let theta: Vec<f64> = (0..d).map(|j| if j % 2 == 0 { 0.3 } else { -0.2 }).collect();
        let data = model.sample(&theta, 2000, rng.random());
        let full = model.fit_mle(&data, None)?;
        let pinned = model.fit_mle(&data, Some(&[0.0]))?;
        worst_grad = worst_grad.max(full.grad_norm).max(pinned.grad_norm);
    }
    passed &= worst_grad <= 1e-8;
    parts.push(format!("max gradient {worst_grad:.1e}"));

    // perfectly separated responses
    let model = Logistic::new(1, Covariates::Rademacher)?;
    let rows: Vec<Vec<f64>> = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0]
        .iter()
        .map(|&x: &f64| vec![x, if x > 0.0 { 1.0 } else { 0.0 }])
        .collect();
    let separated = matches!(model.fit_mle(&Dataset::from_rows(&rows)?, None), Err(Error::Separation(_)));
    passed &= separated;
    parts.push(format!("separation detected: {separated}"));

    // scaling in d
    let rows = dimension_sweep(1_000_000, &[1, 2, 4, 8, 16], 1, Covariates::Rademacher, &TestFunction::ht(), None)?;
    let worst_ratio = rows
        .windows(2)
        .map(|w| w[1].bound_total / w[0].bound_total)
        .fold(0.0, f64::max);
    passed &= worst_ratio <= 128.0 * 1.1;
    parts.push(format!("worst doubling ratio {worst_ratio:.2}"));

    // third derivatives against |x_i x_j x_k|
    let mut worst_excess = f64::NEG_INFINITY;
    for _ in 0..100 {
        let d = rng.random_range(1..=8usize);
        let model = Logistic::new(d, Covariates::Gaussian)?;
        let theta: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut x: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        x.push(if rng.random::<bool>() { 1.0 } else { 0.0 });
        for k in 0..d {
            let third = fd_third(&model, &x, &theta, k);
            for i in 0..d {
                for j in 0..d {
                    let excess = third[(i, j)].abs() - (x[i] * x[j] * x[k]).abs();
                    worst_excess = worst_excess.max(excess);
                }
            }
        }
    }
    passed &= worst_excess <= 1e-5;
    parts.push(format!("max excess over |x_i x_j x_k| {worst_excess:.1e}"));

    Ok(Check {
        passed,
        detail: parts.join("; "),
        limit: None,
    })
}

/// Same outputs from pools of one and several threads.
fn determinism() -> Result<Check> {
    let run = || -> Result<String> {
        let h = TestFunction::ht();
        let est = estimate_distance(&Exponential, &[3.0], 200, 1, &h, 20_000, MASTER_SEED)?;
        let rows = dimension_sweep(
            300,
            &[1, 2],
            1,
            Covariates::Rademacher,
            &h,
            Some(McOptions {
                reps: 10_000,
                master_seed: MASTER_SEED,
            }),
        )?;
        Ok(format!("{est:?}{rows:?}"))
    };
    let mut outputs = Vec::new();
    for threads in [1, 3] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        outputs.push(pool.install(run)?);
    }
    Ok(Check {
        passed: outputs[0] == outputs[1],
        detail: format!("outputs identical across 1 and 3 threads: {}", outputs[0] == outputs[1]),
        limit: None,
    })
}
