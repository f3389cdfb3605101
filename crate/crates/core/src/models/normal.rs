//! Normal distribution with `theta = (mu, sigma^2)`; the null fixes `mu`.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{
    Dataset, Fit, MomentOracle, MomentTable, OracleSettings, ParametricModel, QTMomentSet,
    WMomentSet,
};
use crate::moments::{chisq_central_moment, normal_even_moment};
use crate::quadrature::{integrate, integrate_to_infinity};
use crate::seed::rng_from_seed;

use super::gaussian_z_tables;

#[derive(Debug, Clone, Copy, Default)]
pub struct Normal;

/// `E(|Z|^a |Z^2 - 1|^b)` for a standard normal `Z`.
pub fn normal_score_abs_moment(a: u32, b: u32) -> f64 {
    let f = move |z: f64| {
        z.abs().powi(a as i32) * (z * z - 1.0).abs().powi(b as i32) * (-0.5 * z * z).exp()
    };
    let inner = integrate(f, 0.0, 1.0, 1e-15, 1e-14).expect("smooth integrand");
    let outer = integrate_to_infinity(f, 1.0, 1e-14, 1e-14).expect("smooth integrand");
    2.0 * (inner.value + outer.value) / (2.0 * std::f64::consts::PI).sqrt()
}

/// Moments of the unrestricted and restricted MLE errors, which factor because
/// `xbar` and the variance estimate are independent.
struct NormalMoments {
    n: u64,
    sigma2: f64,
}

impl NormalMoments {
    /// `E(Q1^{2a} Q2^{2b})`
    fn joint(&self, a: u32, b: u32) -> Result<f64> {
        let nf = self.n as f64;
        let q1 = (self.sigma2 / nf).powi(a as i32) * normal_even_moment(2 * a);
        let q2 = if b == 0 {
            1.0
        } else {
            (self.sigma2 / nf).powi(2 * b as i32) * chisq_central_moment(self.n - 1, 2 * b, nf)?
        };
        Ok(q1 * q2)
    }

    /// `E(Q*^{2b})` with `Q* = sigma^2 (G_n - n) / n`.
    fn restricted(&self, b: u32) -> Result<f64> {
        let nf = self.n as f64;
        Ok((self.sigma2 / nf).powi(2 * b as i32) * chisq_central_moment(self.n, 2 * b, nf)?)
    }

    fn table(&self, order: usize) -> Result<MomentTable> {
        let shape = vec![2; order];
        let mut err = None;
        let t = MomentTable::analytic(&shape, |idx| {
            let b = idx.iter().filter(|&&i| i == 1).count() as u32;
            let a = order as u32 - b;
            self.joint(a, b).unwrap_or_else(|e| {
                err = Some(e);
                f64::NAN
            })
        });
        err.map_or(Ok(t), Err)
    }

    fn restricted_table(&self, order: usize) -> Result<MomentTable> {
        let v = self.restricted(order as u32)?;
        Ok(MomentTable::analytic(&vec![1; order], |_| v))
    }
}

impl Normal {
    fn check_epsilon(theta0: &[f64], eps: f64) -> Result<()> {
        if !(eps > 0.0 && eps < theta0[1]) {
            return Err(Error::NonpositiveEpsilon(eps));
        }
        Ok(())
    }

    /// Suprema of the dominating functions over `max |Q| < eps`, indexed by
    /// the number of variance coordinates among `(j, k, l)`.
    fn full_sups(n: f64, sigma2: f64, eps: f64) -> [f64; 4] {
        let lo = sigma2 - eps;
        [
            0.0,
            n / (lo * lo),
            4.0 * n * eps / lo.powi(3),
            n / lo.powi(3) + 9.0 * n * (sigma2 + eps + 2.0 * eps * eps) / lo.powi(4),
        ]
    }

    fn restricted_sup(n: f64, sigma2: f64, eps: f64) -> f64 {
        let lo = sigma2 - eps;
        n / lo.powi(3) + 3.0 * n * (sigma2 + eps) / lo.powi(4)
    }
}

fn variance_count(idx: &[usize]) -> usize {
    idx.iter().filter(|&&i| i == 1).count()
}

impl ParametricModel for Normal {
    fn id(&self) -> &str {
        "normal"
    }

    fn dim(&self) -> usize {
        2
    }

    fn arity(&self) -> usize {
        1
    }

    fn validate_theta(&self, theta: &[f64]) -> Result<()> {
        match theta {
            [m, v] if m.is_finite() && *v > 0.0 && v.is_finite() => Ok(()),
            _ => Err(Error::InvalidParameter(format!(
                "normal needs (mu, sigma^2) with sigma^2 > 0, got {theta:?}"
            ))),
        }
    }

    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        let (m, v) = (theta[0], theta[1]);
        let d = x[0] - m;
        -0.5 * (2.0 * std::f64::consts::PI * v).ln() - d * d / (2.0 * v)
    }

    fn score(&self, x: &[f64], theta: &[f64]) -> DVector<f64> {
        let (m, v) = (theta[0], theta[1]);
        let d = x[0] - m;
        DVector::from_vec(vec![d / v, -0.5 / v + d * d / (2.0 * v * v)])
    }

    fn hessian(&self, x: &[f64], theta: &[f64]) -> DMatrix<f64> {
        let (m, v) = (theta[0], theta[1]);
        let d = x[0] - m;
        let off = -d / (v * v);
        DMatrix::from_row_slice(2, 2, &[-1.0 / v, off, off, 0.5 / (v * v) - d * d / v.powi(3)])
    }

    fn third_derivative(&self, x: &[f64], theta: &[f64], idx: [usize; 3]) -> f64 {
        let (m, v) = (theta[0], theta[1]);
        let d = x[0] - m;
        match variance_count(&idx) {
            0 => 0.0,
            1 => 1.0 / (v * v),
            2 => 2.0 * d / v.powi(3),
            _ => -1.0 / v.powi(3) + 3.0 * d * d / v.powi(4),
        }
    }

    fn fisher_info(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        self.validate_theta(theta)?;
        let v = theta[1];
        Ok(DMatrix::from_row_slice(2, 2, &[1.0 / v, 0.0, 0.0, 0.5 / (v * v)]))
    }

    fn dominating(
        &self,
        data: &Dataset,
        theta0: &[f64],
        eps: f64,
        idx: [usize; 3],
        restricted: Option<usize>,
    ) -> f64 {
        let (mu, sigma2) = (theta0[0], theta0[1]);
        let n = data.n() as f64;
        let lo = sigma2 - eps;
        let xbar = data.values().iter().sum::<f64>() / n;
        if restricted.is_some() {
            let ss: f64 = data.values().iter().map(|x| (x - mu) * (x - mu)).sum();
            return n / lo.powi(3) + 3.0 * ss / lo.powi(4);
        }
        match variance_count(&idx) {
            0 => 0.0,
            1 => n / (lo * lo),
            2 => 2.0 * n * ((xbar - mu).abs() + eps) / lo.powi(3),
            _ => {
                let s2 = data.values().iter().map(|x| (x - xbar) * (x - xbar)).sum::<f64>() / n;
                n / lo.powi(3) + 9.0 * n * (s2 + (xbar - mu).powi(2) + eps * eps) / lo.powi(4)
            }
        }
    }

    fn epsilon_default(&self, theta0: &[f64]) -> Option<f64> {
        Some(theta0[1] / 2.0)
    }

    fn sample(&self, theta: &[f64], n: usize, seed: u64) -> Dataset {
        let mut rng = rng_from_seed(seed);
        let (m, s) = (theta[0], theta[1].sqrt());
        let values = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                m + s * z
            })
            .collect();
        Dataset::new(1, values).expect("n >= 1 finite draws")
    }

    fn fit_mle(&self, data: &Dataset, pinned: Option<&[f64]>) -> Result<Fit> {
        self.validate_data(data)?;
        let n = data.n() as f64;
        let xs = data.values();
        let theta = match pinned {
            Some([]) | None => {
                let mean = xs.iter().sum::<f64>() / n;
                vec![mean, xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n]
            }
            Some([mu]) => vec![*mu, xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n],
            Some(all) => all.to_vec(),
        };
        if !(theta[1] > 0.0) {
            return Err(Error::InvalidData("sample variance is zero".into()));
        }
        let free = pinned.map_or(0, <[f64]>::len);
        let grad = self.score_sum(data, &theta);
        let grad_norm = grad.iter().skip(free).fold(0.0f64, |acc, g| acc.max(g.abs()));
        Ok(Fit {
            theta,
            iterations: 0,
            grad_norm,
        })
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
                "the normal model tests the mean only (r = 1), got r = {r}"
            )));
        }
        if n < 2 {
            return Err(Error::InvalidParameter("normal moments need n >= 2".into()));
        }
        Self::check_epsilon(theta0, eps)?;
        let s2 = theta0[1];
        let nf = n as f64;
        let nu = n as u64;
        let mom = NormalMoments { n: nu, sigma2: s2 };

        let g4 = chisq_central_moment(nu, 4, nf)?;
        let g6 = chisq_central_moment(nu, 6, nf)?;
        let sq = MomentTable::analytic(&[2], |i| mom.joint(1 - i[0] as u32, i[0] as u32).unwrap());
        let var_hess = MomentTable::analytic(&[2, 2], |i| match i[0] + i[1] {
            0 => 0.0,
            1 => 1.0 / s2.powi(3),
            _ => 2.0 / s2.powi(4),
        });
        let t6 = MomentTable::analytic(&[2, 2], |i| match i[0] + i[1] {
            0 => 0.0,
            1 => 15.0 * nf.powi(3) / s2.powi(9),
            _ => g6 / s2.powi(12),
        });
        let t4 = MomentTable::analytic(&[2, 2], |i| match i[0] + i[1] {
            0 => 0.0,
            1 => 3.0 * nf * nf / s2.powi(6),
            _ => g4 / s2.powi(8),
        });
        let sups = Self::full_sups(nf, s2, eps);
        let m2 = MomentTable::analytic(&[2, 2, 2], |i| sups[variance_count(i)].powi(2));
        let m4 = MomentTable::analytic(&[2, 2, 2], |i| sups[variance_count(i)].powi(4));
        let full = QTMomentSet {
            dim: 2,
            sq: Some(sq),
            eq2: Some(mom.table(2)?),
            eq6: Some(MomentTable::analytic(&[2], |i| {
                mom.joint(3 * (1 - i[0] as u32), 3 * i[0] as u32).unwrap()
            })),
            eq_triple: Some(mom.table(3)?),
            eq_quad: Some(mom.table(4)?),
            var_hess: Some(var_hess),
            t6: Some(t6),
            t4_cond: Some(t4.as_upper_bound()),
            m2_cond: Some(m2.as_upper_bound()),
            m4_cond: Some(m4.as_upper_bound()),
        };

        let star_sup = Self::restricted_sup(nf, s2, eps);
        let scalar = |v: f64| MomentTable::analytic(&[1], |_| v);
        let pair = |v: f64| MomentTable::analytic(&[1, 1], |_| v);
        let triple = |v: f64| MomentTable::analytic(&[1, 1, 1], |_| v);
        let restricted = QTMomentSet {
            dim: 1,
            sq: Some(mom.restricted_table(1)?),
            eq2: Some(mom.restricted_table(2)?),
            eq6: Some(scalar(mom.restricted(3)?)),
            eq_triple: Some(mom.restricted_table(3)?),
            eq_quad: Some(mom.restricted_table(4)?),
            var_hess: Some(pair(2.0 / s2.powi(4))),
            t6: Some(pair(g6 / s2.powi(12))),
            t4_cond: Some(pair(g4 / s2.powi(8)).as_upper_bound()),
            m2_cond: Some(triple(star_sup.powi(2)).as_upper_bound()),
            m4_cond: Some(triple(star_sup.powi(4)).as_upper_bound()),
        };

        // Y1 = Z / sigma, Y2 = (Z^2 - 1) / (2 sigma^2)
        let sigma = s2.sqrt();
        let y_abs = |a: u32, b: u32| {
            normal_score_abs_moment(a, b) / (sigma.powi((a + 2 * b) as i32) * 2f64.powi(b as i32))
        };
        let counts = |idx: &[usize]| {
            let b = variance_count(idx) as u32;
            (idx.len() as u32 - b, b)
        };
        let info = self.fisher_info(theta0)?;
        let (z_abs, z_sq) = gaussian_z_tables(&info)?;
        let w = WMomentSet {
            dim: 2,
            abs1: Some(MomentTable::analytic(&[2], |i| {
                let (a, b) = counts(i);
                y_abs(a, b)
            })),
            cross2: Some(MomentTable::analytic(&[2, 2], |i| info[(i[0], i[1])].abs())),
            abs3: Some(MomentTable::analytic(&[2, 2, 2], |i| {
                let (a, b) = counts(i);
                y_abs(a, b)
            })),
            abs5: Some(MomentTable::analytic(&[2, 2, 2, 2], |i| {
                let full = [i[0], i[1], i[2], i[3], i[3]];
                let (a, b) = counts(&full);
                y_abs(a, b)
            })),
            w2: Some(MomentTable::analytic(&[2], |i| info[(i[0], i[0])])),
            z_abs: Some(z_abs),
            z_sq: Some(z_sq),
        };

        Ok(MomentOracle {
            full,
            restricted: Some(restricted),
            w,
            epsilon: eps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_moments_match_half_normal_values() {
        let s = (2.0 / std::f64::consts::PI).sqrt();
        assert!((normal_score_abs_moment(1, 0) - s).abs() < 1e-13);
        assert!((normal_score_abs_moment(3, 0) - 2.0 * s).abs() < 1e-13);
        assert!((normal_score_abs_moment(0, 2) - 2.0).abs() < 1e-13);
        // E(Z^2 - 1)^4 = 105 - 60 + 18 - 4 + 1
        assert!((normal_score_abs_moment(0, 4) - 60.0).abs() < 1e-11);
    }

    #[test]
    fn fits_have_closed_forms() {
        let data = Dataset::new(1, vec![1.0, -1.0, 3.0]).unwrap();
        let fit = Normal.fit_mle(&data, None).unwrap();
        assert!((fit.theta[0] - 1.0).abs() < 1e-15);
        assert!((fit.theta[1] - 8.0 / 3.0).abs() < 1e-15);
        let res = Normal.fit_mle(&data, Some(&[0.0])).unwrap();
        assert!((res.theta[1] - 11.0 / 3.0).abs() < 1e-15);
        assert!(fit.grad_norm < 1e-12 && res.grad_norm < 1e-12);
    }

    #[test]
    fn sups_at_half_variance() {
        let s = Normal::full_sups(1.0, 1.0, 0.5);
        assert_eq!(s[1], 4.0);
        assert_eq!(s[2], 16.0);
        assert!((s[3] - (8.0 + 9.0 * 16.0 * 2.0)).abs() < 1e-12);
    }
}
