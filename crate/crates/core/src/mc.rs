//! Monte Carlo harness: simulated likelihood ratio statistics, chisquare
//! reference expectations, distance and KS estimates, and n/d sweeps.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::ln_gamma;

use crate::bound::{assemble_bound, logistic_bound_scaling};
use crate::error::{Error, Result};
use crate::model::{OracleSettings, ParametricModel, TestFunction};
use crate::models::{neg2_log_lambda, Covariates, Logistic};
use crate::quadrature::{integrate, integrate_to_infinity};
use crate::seed::replicate_seed;

/// Smallest replicate count accepted by the distance and KS estimators.
pub const MIN_REPS: usize = 10_000;

/// Absolute tolerance of the chisquare reference integrals.
pub const CHISQ_ABS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub reps: usize,
    pub master_seed: u64,
    pub failed_reps: usize,
}

/// One row of an n- or d-sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub key: usize,
    pub bound_total: f64,
    pub mc_distance: Option<MCEstimate>,
    pub chisq_ref: Option<f64>,
    pub ks_distance: Option<f64>,
}

/// Replicate count and master seed for the simulated columns of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McOptions {
    pub reps: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateSweep {
    pub rows: Vec<SweepRow>,
    /// Least-squares slope of `log bound_total` against `log n`.
    pub slope: f64,
}

/// Neumaier-compensated sum.
fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in xs {
        let t = sum + x;
        comp += if sum.abs() >= x.abs() {
            (sum - t) + x
        } else {
            (x - t) + sum
        };
        sum = t;
    }
    sum + comp
}

/// `E f(K)` for `K ~ chisq_r`. The origin is handled by `x = u^2` on `[0, 1]`.
pub fn chisq_expectation_fn<F: Fn(f64) -> f64>(f: F, r: usize) -> Result<f64> {
    if r == 0 {
        return Err(Error::InvalidParameter("degrees of freedom must be >= 1".into()));
    }
    let half = r as f64 / 2.0;
    let log_norm = half * std::f64::consts::LN_2 + ln_gamma(half);
    let near = |u: f64| {
        if u == 0.0 {
            return if r == 1 { 2.0 * f(0.0) * (-log_norm).exp() } else { 0.0 };
        }
        let x = u * u;
        2.0 * ((r as f64 - 1.0) * u.ln() - x / 2.0 - log_norm).exp() * f(x)
    };
    let far = |x: f64| ((half - 1.0) * x.ln() - x / 2.0 - log_norm).exp() * f(x);
    let a = integrate(near, 0.0, 1.0, CHISQ_ABS_TOL / 2.0, 1e-12)?;
    let b = integrate_to_infinity(far, 1.0, CHISQ_ABS_TOL / 2.0, 1e-12)?;
    Ok(a.value + b.value)
}

/// `E h(K)` for `K ~ chisq_r`.
pub fn chisq_expectation(h: &TestFunction, r: usize) -> Result<f64> {
    chisq_expectation_fn(|x| h.h(x), r)
}

/// Simulated `-2 log Lambda` values in replicate order, with `None` for
/// replicates whose fit failed. Replicate `i` uses `replicate_seed(master_seed, i)`.
pub fn simulate_statistics(
    model: &dyn ParametricModel,
    theta0: &[f64],
    n: usize,
    r: usize,
    reps: usize,
    master_seed: u64,
) -> Result<Vec<Option<f64>>> {
    model.validate_theta(theta0)?;
    if r == 0 || r > model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "need 1 <= r <= d = {}, got {r}",
            model.dim()
        )));
    }
    Ok((0..reps)
        .into_par_iter()
        .map(|i| {
            let data = model.sample(theta0, n, replicate_seed(master_seed, i as u64));
            neg2_log_lambda(model, &data, r, theta0).ok().map(|l| l.statistic)
        })
        .collect())
}

/// Drops failed replicates, erroring above the 0.1% limit.
fn successful(stats: &[Option<f64>]) -> Result<(Vec<f64>, usize)> {
    let ok: Vec<f64> = stats.iter().flatten().copied().collect();
    let failed = stats.len() - ok.len();
    if failed * 1000 > stats.len() {
        return Err(Error::ExcessiveFitFailures {
            failed,
            reps: stats.len(),
        });
    }
    Ok((ok, failed))
}

fn check_reps(reps: usize) -> Result<()> {
    if reps < MIN_REPS {
        return Err(Error::InvalidParameter(format!("need reps >= {MIN_REPS}, got {reps}")));
    }
    Ok(())
}

/// `|mean h(stat) - chisq_ref|` with the standard error of the sample mean.
pub fn distance_from_statistics(
    stats: &[f64],
    h: &TestFunction,
    chisq_ref: f64,
) -> (f64, f64) {
    let m = stats.len() as f64;
    let mean = compensated_sum(stats.iter().map(|&s| h.h(s))) / m;
    let ss = compensated_sum(stats.iter().map(|&s| (h.h(s) - mean).powi(2)));
    let sd = (ss / (m - 1.0).max(1.0)).sqrt();
    ((mean - chisq_ref).abs(), sd / m.sqrt())
}

/// Estimates `|E h(-2 log Lambda) - E h(chisq_r)|` from `reps` simulated datasets.
#[allow(clippy::too_many_arguments)]
pub fn estimate_distance(
    model: &dyn ParametricModel,
    theta0: &[f64],
    n: usize,
    r: usize,
    h: &TestFunction,
    reps: usize,
    master_seed: u64,
) -> Result<MCEstimate> {
    check_reps(reps)?;
    let stats = simulate_statistics(model, theta0, n, r, reps, master_seed)?;
    let (ok, failed) = successful(&stats)?;
    let reference = chisq_expectation(h, r)?;
    let (mean, stderr) = distance_from_statistics(&ok, h, reference);
    Ok(MCEstimate {
        mean,
        stderr,
        reps,
        master_seed,
        failed_reps: failed,
    })
}

/// Kolmogorov–Smirnov distance between the empirical law of `sample` and `chisq_r`.
pub fn ks_distance(sample: &[f64], r: usize) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::InvalidData("empty sample".into()));
    }
    let law = ChiSquared::new(r as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let m = xs.len() as f64;
    Ok(xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = law.cdf(x.max(0.0));
            ((i as f64 + 1.0) / m - f).max(f - i as f64 / m)
        })
        .fold(0.0, f64::max))
}

/// KS distance of simulated `-2 log Lambda` to `chisq_r`.
pub fn wilks_ks_check(
    model: &dyn ParametricModel,
    theta0: &[f64],
    n: usize,
    r: usize,
    reps: usize,
    master_seed: u64,
) -> Result<f64> {
    check_reps(reps)?;
    let stats = simulate_statistics(model, theta0, n, r, reps, master_seed)?;
    let (ok, _) = successful(&stats)?;
    ks_distance(&ok, r)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::DimensionMismatch("need at least two matching points".into()));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidData("log-log fit needs positive values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

fn check_grid(n_grid: &[usize]) -> Result<()> {
    let lo = n_grid.iter().copied().min().unwrap_or(0);
    let hi = n_grid.iter().copied().max().unwrap_or(0);
    if n_grid.len() < 4 || lo == 0 || (hi as f64) < 1000.0 * lo as f64 {
        return Err(Error::InvalidParameter(
            "n grid needs at least 4 points spanning 3 decades".into(),
        ));
    }
    Ok(())
}

/// Rate sweep over an arbitrary bound function of `n`.
pub fn rate_sweep_with<F: Fn(usize) -> Result<f64>>(n_grid: &[usize], bound: F) -> Result<RateSweep> {
    check_grid(n_grid)?;
    let rows = n_grid
        .iter()
        .map(|&n| {
            Ok(SweepRow {
                key: n,
                bound_total: bound(n)?,
                mc_distance: None,
                chisq_ref: None,
                ks_distance: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = rows.iter().map(|r| r.key as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.bound_total).collect();
    let slope = loglog_slope(&xs, &ys)?;
    Ok(RateSweep { rows, slope })
}

/// Fills the simulated columns of a row.
fn simulate_row(
    row: &mut SweepRow,
    model: &dyn ParametricModel,
    theta0: &[f64],
    n: usize,
    r: usize,
    h: &TestFunction,
    mc: McOptions,
) -> Result<()> {
    check_reps(mc.reps)?;
    let stats = simulate_statistics(model, theta0, n, r, mc.reps, mc.master_seed)?;
    let (ok, failed) = successful(&stats)?;
    let reference = chisq_expectation(h, r)?;
    let (mean, stderr) = distance_from_statistics(&ok, h, reference);
    row.mc_distance = Some(MCEstimate {
        mean,
        stderr,
        reps: mc.reps,
        master_seed: mc.master_seed,
        failed_reps: failed,
    });
    row.chisq_ref = Some(reference);
    row.ks_distance = Some(ks_distance(&ok, r)?);
    Ok(())
}

/// Bound totals over `n_grid` and their log-log slope; simulated columns are
/// filled when `mc` is given.
#[allow(clippy::too_many_arguments)]
pub fn rate_sweep(
    model: &dyn ParametricModel,
    theta0: &[f64],
    r: usize,
    h: &TestFunction,
    n_grid: &[usize],
    eps: Option<f64>,
    settings: &OracleSettings,
    mc: Option<McOptions>,
) -> Result<RateSweep> {
    let mut sweep = rate_sweep_with(n_grid, |n| {
        Ok(assemble_bound(model, theta0, n, r, h, eps, settings)?.total)
    })?;
    if let Some(mc) = mc {
        for row in &mut sweep.rows {
            simulate_row(row, model, theta0, row.key, r, h, mc)?;
        }
    }
    Ok(sweep)
}

/// Logistic sweep over the number of covariates at fixed `n`, testing the
/// first `min(r, d)` slopes at `theta = 0`. `bound_total` is the order-level
/// scaling bound; simulated columns are filled when `mc` is given.
pub fn dimension_sweep(
    n: usize,
    d_grid: &[usize],
    r: usize,
    covariates: Covariates,
    h: &TestFunction,
    mc: Option<McOptions>,
) -> Result<Vec<SweepRow>> {
    let cap = covariates.abs_moment_cap(3).max(covariates.abs_moment_cap(5));
    d_grid
        .iter()
        .map(|&d| {
            let rd = r.clamp(1, d.max(1));
            let scaling = logistic_bound_scaling(d, rd, n, cap)?;
            let mut row = SweepRow {
                key: d,
                bound_total: scaling.bound,
                mc_distance: None,
                chisq_ref: None,
                ks_distance: None,
            };
            if let Some(mc) = mc {
                let model = Logistic::new(d, covariates)?;
                simulate_row(&mut row, &model, &vec![0.0; d], n, rd, h, mc)?;
            }
            Ok(row)
        })
        .collect()
}

fn csv_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV with columns `key,bound_total,mc_mean,mc_stderr,chisq_ref,ks`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "key,bound_total,mc_mean,mc_stderr,chisq_ref,ks")?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            row.key,
            row.bound_total,
            csv_field(row.mc_distance.map(|m| m.mean)),
            csv_field(row.mc_distance.map(|m| m.stderr)),
            csv_field(row.chisq_ref),
            csv_field(row.ks_distance),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let xs = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(xs), 2.0);
    }

    #[test]
    fn chisq_mean_and_mass() {
        for r in 1..=5 {
            assert!((chisq_expectation_fn(|_| 1.0, r).unwrap() - 1.0).abs() < 1e-10);
            assert!((chisq_expectation_fn(|x| x, r).unwrap() - r as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let law = ChiSquared::new(1.0).unwrap();
        let m = 1000;
        let xs: Vec<f64> = (0..m).map(|i| law.inverse_cdf((i as f64 + 0.5) / m as f64)).collect();
        let ks = ks_distance(&xs, 1).unwrap();
        assert!((ks - 0.5 / m as f64).abs() < 1e-6, "{ks}");
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [1.0, 10.0, 100.0, 1000.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.5)).collect();
        assert!((loglog_slope(&xs, &ys).unwrap() + 0.5).abs() < 1e-12);
    }

    #[test]
    fn csv_leaves_missing_columns_empty() {
        let row = SweepRow {
            key: 10,
            bound_total: 0.5,
            mc_distance: None,
            chisq_ref: None,
            ks_distance: None,
        };
        let mut buf = Vec::new();
        write_sweep_csv(&[row], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "key,bound_total,mc_mean,mc_stderr,chisq_ref,ks\n10,0.5,,,,\n"
        );
    }
}
