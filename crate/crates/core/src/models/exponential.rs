//! Exponential distribution parameterised by its mean.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::fisher::FisherBlocks;
use crate::model::{
    Dataset, Fit, MomentOracle, MomentTable, OracleSettings, ParametricModel, QTMomentSet,
    WMomentSet,
};
use crate::moments::gamma_mean_central_moment;
use crate::quadrature::{integrate, integrate_to_infinity};
use crate::seed::rng_from_seed;

use super::gaussian_z_tables;

/// `f(x | theta) = exp(-x / theta) / theta` for `x > 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Exponential;

impl Exponential {
    /// `E|E - 1|^k` for a standard exponential `E`.
    pub fn centered_abs_moment(k: u32) -> f64 {
        let f = |x: f64| (x - 1.0).abs().powi(k as i32) * (-x).exp();
        let lower = integrate(f, 0.0, 1.0, 1e-14, 1e-14).expect("smooth integrand");
        let upper = integrate_to_infinity(f, 1.0, 1e-13, 1e-14).expect("smooth integrand");
        lower.value + upper.value
    }

    /// Supremum of the dominating function over `|xbar - theta0| < eps`.
    fn dominating_sup(n: f64, theta0: f64, eps: f64) -> f64 {
        let lo = theta0 - eps;
        2.0 * n / lo.powi(3) + 6.0 * n * (theta0 + eps) / lo.powi(4)
    }
}

impl ParametricModel for Exponential {
    fn id(&self) -> &str {
        "exponential"
    }

    fn dim(&self) -> usize {
        1
    }

    fn arity(&self) -> usize {
        1
    }

    fn validate_theta(&self, theta: &[f64]) -> Result<()> {
        match theta {
            [t] if *t > 0.0 && t.is_finite() => Ok(()),
            _ => Err(Error::InvalidParameter(format!(
                "exponential needs a single positive mean, got {theta:?}"
            ))),
        }
    }

    fn validate_data(&self, data: &Dataset) -> Result<()> {
        if data.arity() != 1 {
            return Err(Error::InvalidData(format!(
                "exponential records have arity 1, got {}",
                data.arity()
            )));
        }
        if data.values().iter().any(|&x| x < 0.0) {
            return Err(Error::InvalidData("exponential observations must be nonnegative".into()));
        }
        Ok(())
    }

    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        -theta[0].ln() - x[0] / theta[0]
    }

    fn score(&self, x: &[f64], theta: &[f64]) -> DVector<f64> {
        let t = theta[0];
        DVector::from_element(1, (x[0] - t) / (t * t))
    }

    fn hessian(&self, x: &[f64], theta: &[f64]) -> DMatrix<f64> {
        let t = theta[0];
        DMatrix::from_element(1, 1, 1.0 / (t * t) - 2.0 * x[0] / t.powi(3))
    }

    fn third_derivative(&self, x: &[f64], theta: &[f64], _idx: [usize; 3]) -> f64 {
        let t = theta[0];
        -2.0 / t.powi(3) + 6.0 * x[0] / t.powi(4)
    }

    fn fisher_info(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        self.validate_theta(theta)?;
        Ok(DMatrix::from_element(1, 1, 1.0 / (theta[0] * theta[0])))
    }

    fn dominating(
        &self,
        data: &Dataset,
        theta0: &[f64],
        eps: f64,
        _idx: [usize; 3],
        _restricted: Option<usize>,
    ) -> f64 {
        let lo = theta0[0] - eps;
        let sum: f64 = data.values().iter().sum();
        2.0 * data.n() as f64 / lo.powi(3) + 6.0 * sum / lo.powi(4)
    }

    fn epsilon_default(&self, theta0: &[f64]) -> Option<f64> {
        Some(theta0[0] / 2.0)
    }

    fn sample(&self, theta: &[f64], n: usize, seed: u64) -> Dataset {
        let mut rng = rng_from_seed(seed);
        let t = theta[0];
        // inverse CDF; 1 - U lies in (0, 1]
        let values = (0..n).map(|_| -t * (1.0 - rng.random::<f64>()).ln()).collect();
        Dataset::new(1, values).expect("n >= 1 finite draws")
    }

    fn fit_mle(&self, data: &Dataset, pinned: Option<&[f64]>) -> Result<Fit> {
        self.validate_data(data)?;
        let theta = match pinned {
            Some(p) if !p.is_empty() => p[0],
            _ => data.values().iter().sum::<f64>() / data.n() as f64,
        };
        if !(theta > 0.0) {
            return Err(Error::InvalidData("sample mean must be positive".into()));
        }
        let grad = if pinned.is_some_and(|p| !p.is_empty()) {
            0.0
        } else {
            self.score_sum(data, &[theta])[0].abs()
        };
        Ok(Fit {
            theta: vec![theta],
            iterations: 0,
            grad_norm: grad,
        })
    }

    fn log_likelihood(&self, data: &Dataset, theta: &[f64]) -> f64 {
        let sum: f64 = data.values().iter().sum();
        -(data.n() as f64) * theta[0].ln() - sum / theta[0]
    }

    fn moment_oracle(
        &self,
        theta0: &[f64],
        n: usize,
        r: usize,
        eps: f64,
        _settings: &OracleSettings,
    ) -> Result<MomentOracle> {
        self.validate_theta(theta0)?;
        if r != 1 {
            return Err(Error::DimensionMismatch(format!(
                "exponential has d = 1, so r must be 1 (got {r})"
            )));
        }
        if !(eps > 0.0 && eps < theta0[0]) {
            return Err(Error::NonpositiveEpsilon(eps));
        }
        let t = theta0[0];
        let nu = n as u64;
        let nf = n as f64;
        let q = |k| gamma_mean_central_moment(nu, t, k);
        let (q2, q4, q6, q8) = (q(2)?, q(4)?, q(6)?, q(8)?);
        let scalar = |v: f64| MomentTable::analytic(&[1], |_| v);
        let pair = |v: f64| MomentTable::analytic(&[1, 1], |_| v);
        let triple = |v: f64| MomentTable::analytic(&[1, 1, 1], |_| v);

        // T = -(2n / theta0^3) Q
        let slope = 2.0 * nf / t.powi(3);
        let m_sup = Self::dominating_sup(nf, t, eps);
        let full = QTMomentSet {
            dim: 1,
            sq: Some(scalar(q2)),
            eq2: Some(pair(q4)),
            eq6: Some(scalar(q6)),
            eq_triple: Some(triple(q6)),
            eq_quad: Some(MomentTable::analytic(&[1, 1, 1, 1], |_| q8)),
            var_hess: Some(pair(4.0 / t.powi(4))),
            t6: Some(pair(slope.powi(6) * q6)),
            // conditioning on a smaller |Q| can only shrink E T^4
            t4_cond: Some(pair(slope.powi(4) * q4).as_upper_bound()),
            m2_cond: Some(triple(m_sup * m_sup).as_upper_bound()),
            m4_cond: Some(triple(m_sup.powi(4)).as_upper_bound()),
        };

        let info = self.fisher_info(theta0)?;
        let (z_abs, z_sq) = gaussian_z_tables(&info)?;
        let w = WMomentSet {
            dim: 1,
            abs1: Some(scalar(Self::centered_abs_moment(1) / t)),
            cross2: Some(pair(1.0 / (t * t))),
            abs3: Some(triple(Self::centered_abs_moment(3) / t.powi(3))),
            abs5: Some(MomentTable::analytic(&[1, 1, 1, 1], |_| {
                Self::centered_abs_moment(5) / t.powi(5)
            })),
            w2: Some(scalar(1.0 / (t * t))),
            z_abs: Some(z_abs),
            z_sq: Some(z_sq),
        };
        Ok(MomentOracle {
            full,
            restricted: None,
            w,
            epsilon: eps,
        })
    }

    /// Uses the Fisher number `1/theta0^2` in place of `c(U, D) = theta0^2`.
    fn stein_constant(&self, theta0: &[f64], _blocks: &FisherBlocks) -> f64 {
        1.0 / (theta0[0] * theta0[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centered_abs_moments_match_closed_forms() {
        // E|E-1| = 2/e, E(E-1)^2 = 1
        assert!((Exponential::centered_abs_moment(1) - 2.0 / std::f64::consts::E).abs() < 1e-12);
        assert!((Exponential::centered_abs_moment(2) - 1.0).abs() < 1e-12);
        assert!((Exponential::centered_abs_moment(3) - 2.414_553_294).abs() < 1e-8);
        assert!((Exponential::centered_abs_moment(5) - 44.291_065_88).abs() < 1e-6);
    }

    #[test]
    fn dominating_sup_at_half_theta() {
        let t = 3.0;
        assert!((Exponential::dominating_sup(10.0, t, t / 2.0) - 1600.0 / 27.0).abs() < 1e-10);
    }

    #[test]
    fn fit_is_sample_mean() {
        let data = Dataset::new(1, vec![1.0, 2.0, 3.0]).unwrap();
        let fit = Exponential.fit_mle(&data, None).unwrap();
        assert_eq!(fit.theta, vec![2.0]);
        assert!(fit.grad_norm < 1e-12);
    }
}
