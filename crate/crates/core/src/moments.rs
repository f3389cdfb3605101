//! Closed-form central moments of gamma sample means and chisquare variables,
//! and absolute moments of the standard normal.
//!
//! Central moments are produced from cumulants by the moment recursion
//! `m_k = sum_{j=1}^{k} C(k-1, j-1) kappa_j m_{k-j}` with `kappa_1 = 0`.

use serde::Serialize;

use crate::error::{Error, Result};

/// Where a moment value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentSource {
    Analytic,
    MonteCarlo,
}

/// A moment entry with provenance. `stderr` is zero for analytic values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentValue {
    pub value: f64,
    pub source: MomentSource,
    pub stderr: f64,
}

impl MomentValue {
    pub fn analytic(value: f64) -> Self {
        Self {
            value,
            source: MomentSource::Analytic,
            stderr: 0.0,
        }
    }

    pub fn monte_carlo(value: f64, stderr: f64) -> Self {
        Self {
            value,
            source: MomentSource::MonteCarlo,
            stderr,
        }
    }
}

const MAX_ORDER: u32 = 8;

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * f64::from(i))
}

/// Central moments `mu_0..=mu_max` from cumulants `kappa[j]` (index 0 unused).
fn central_from_cumulants(kappa: &[f64], max: usize) -> Vec<f64> {
    let mut mu = vec![0.0; max + 1];
    mu[0] = 1.0;
    for k in 1..=max {
        let mut acc = 0.0;
        // kappa_1 is the mean, which is zero for central moments
        for j in 2..=k {
            acc += binomial((k - 1) as u32, (j - 1) as u32) * kappa[j] * mu[k - j];
        }
        mu[k] = acc;
    }
    mu
}

fn check_even_order(k: u32) -> Result<()> {
    if k == 0 || k % 2 == 1 || k > MAX_ORDER {
        return Err(Error::UnsupportedOrder(k));
    }
    Ok(())
}

/// All central moments (orders 0 through 8) of the mean of `n` i.i.d.
/// exponential variables with mean `theta0`, i.e. of `Gamma(n, n/theta0)`.
pub fn gamma_mean_central_moments(n: u64, theta0: f64) -> [f64; 9] {
    let nf = n as f64;
    let scale = theta0 / nf;
    let mut kappa = [0.0; 9];
    for (j, k) in kappa.iter_mut().enumerate().skip(1) {
        *k = nf * factorial(j as u32 - 1) * scale.powi(j as i32);
    }
    let mu = central_from_cumulants(&kappa, 8);
    let mut out = [0.0; 9];
    out.copy_from_slice(&mu);
    out
}

/// `E(Xbar - theta0)^k` for the mean of `n` exponential draws with mean `theta0`.
pub fn gamma_mean_central_moment(n: u64, theta0: f64, k: u32) -> Result<f64> {
    check_even_order(k)?;
    if n == 0 || !(theta0 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma mean moment needs n >= 1 and theta0 > 0 (n = {n}, theta0 = {theta0})"
        )));
    }
    Ok(gamma_mean_central_moments(n, theta0)[k as usize])
}

/// Central moments (orders 0 through 8) of a chisquare variable with `nu` degrees of freedom.
pub fn chisq_central_moments(nu: u64) -> [f64; 9] {
    let nuf = nu as f64;
    let mut kappa = [0.0; 9];
    for (j, k) in kappa.iter_mut().enumerate().skip(1) {
        *k = nuf * 2f64.powi(j as i32 - 1) * factorial(j as u32 - 1);
    }
    let mu = central_from_cumulants(&kappa, 8);
    let mut out = [0.0; 9];
    out.copy_from_slice(&mu);
    out
}

/// `E(G - shift)^k` for `G ~ chisq(nu)`, expanded around the mean `nu`.
pub fn chisq_central_moment(nu: u64, k: u32, shift: f64) -> Result<f64> {
    check_even_order(k)?;
    if nu == 0 {
        return Err(Error::InvalidParameter("chisquare needs nu >= 1".into()));
    }
    let mu = chisq_central_moments(nu);
    let delta = nu as f64 - shift;
    let mut acc = 0.0;
    for i in 0..=k {
        acc += binomial(k, i) * mu[i as usize] * delta.powi((k - i) as i32);
    }
    Ok(acc)
}

/// `E|Z|^k` for a standard normal `Z`.
pub fn halfnormal_abs_moment(k: u32) -> f64 {
    // (k-1)!! times sqrt(2/pi) for odd k
    let double_fact = (1..k).rev().step_by(2).fold(1.0, |acc, i| acc * f64::from(i));
    if k.is_multiple_of(2) {
        double_fact
    } else {
        double_fact * (2.0 / std::f64::consts::PI).sqrt()
    }
}

/// `(k-1)!!`, the `k`-th moment of a standard normal for even `k`.
pub(crate) fn normal_even_moment(k: u32) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    halfnormal_abs_moment(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn gamma_variance_is_theta_squared_over_n() {
        let v = gamma_mean_central_moment(7, 2.5, 2).unwrap();
        assert!(rel(v, 2.5 * 2.5 / 7.0) < 1e-14);
    }

    #[test]
    fn gamma_fourth_and_sixth_match_closed_forms() {
        for &n in &[1u64, 3, 10, 100_000] {
            let nf = n as f64;
            let th: f64 = 3.0;
            let m4 = gamma_mean_central_moment(n, th, 4).unwrap();
            let m6 = gamma_mean_central_moment(n, th, 6).unwrap();
            let m8 = gamma_mean_central_moment(n, th, 8).unwrap();
            assert!(rel(m4, th.powi(4) / nf.powi(2) * (3.0 + 6.0 / nf)) < 1e-12);
            assert!(
                rel(
                    m6,
                    th.powi(6) / nf.powi(3) * (15.0 + 130.0 / nf + 120.0 / (nf * nf))
                ) < 1e-12
            );
            let p8 = 105.0 + 2380.0 / nf + 7308.0 / nf.powi(2) + 5040.0 / nf.powi(3);
            assert!(rel(m8, th.powi(8) / nf.powi(4) * p8) < 1e-12);
        }
    }

    #[test]
    fn chisq_moments_match_closed_forms() {
        let n = 50u64;
        let nf = n as f64;
        assert!(rel(chisq_central_moment(n, 2, nf).unwrap(), 2.0 * nf) < 1e-14);
        let m6 = chisq_central_moment(n, 6, nf).unwrap();
        assert!(rel(m6, 40.0 * nf.powi(3) * (3.0 + 52.0 / nf + 96.0 / (nf * nf))) < 1e-12);
        let m6s = chisq_central_moment(n - 1, 6, nf).unwrap();
        let expect =
            nf.powi(3) * (120.0 + 940.0 / nf - 114.0 / nf.powi(2) - 945.0 / nf.powi(3));
        assert!(rel(m6s, expect) < 1e-12);
        let m4s = chisq_central_moment(n - 1, 4, nf).unwrap();
        assert!(rel(m4s, 12.0 * nf * nf + 4.0 * nf - 15.0) < 1e-12);
        let m8s = chisq_central_moment(n - 1, 8, nf).unwrap();
        let e8 = 1680.0 * nf.powi(4) + 45920.0 * nf.powi(3) + 133448.0 * nf.powi(2)
            - 45912.0 * nf
            - 135135.0;
        assert!(rel(m8s, e8) < 1e-12);
    }

    #[test]
    fn odd_or_large_orders_are_rejected() {
        assert_eq!(gamma_mean_central_moment(5, 1.0, 3), Err(Error::UnsupportedOrder(3)));
        assert_eq!(chisq_central_moment(5, 10, 5.0), Err(Error::UnsupportedOrder(10)));
        assert_eq!(chisq_central_moment(5, 0, 5.0), Err(Error::UnsupportedOrder(0)));
    }

    #[test]
    fn halfnormal_values() {
        let s = (2.0 / std::f64::consts::PI).sqrt();
        assert!(rel(halfnormal_abs_moment(1), s) < 1e-15);
        assert_eq!(halfnormal_abs_moment(2), 1.0);
        assert!(rel(halfnormal_abs_moment(3), 2.0 * s) < 1e-15);
        assert_eq!(halfnormal_abs_moment(4), 3.0);
        assert!(rel(halfnormal_abs_moment(5), 8.0 * s) < 1e-15);
        assert_eq!(halfnormal_abs_moment(6), 15.0);
    }

    #[test]
    fn gamma_moments_approach_normal_limit() {
        let n = 1_000_000u64;
        let th: f64 = 2.0;
        for k in [2u32, 4, 6, 8] {
            let scaled = gamma_mean_central_moment(n, th, k).unwrap() * (n as f64).powf(k as f64 / 2.0);
            let limit = th.powi(k as i32) * normal_even_moment(k);
            assert!(rel(scaled, limit) < 0.01, "k = {k}");
        }
    }
}
