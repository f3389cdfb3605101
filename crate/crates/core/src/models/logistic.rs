//! Logistic regression through the origin: `P(y = 1 | x) = psi(theta^T x)`.
//!
//! Records are `(x_1, ..., x_d, y)`. Covariates are drawn i.i.d. per
//! coordinate, Rademacher by default so every product moment of `|x|` is one.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Dataset, Fit, MomentOracle, OracleSettings, ParametricModel};
use crate::moments::halfnormal_abs_moment;
use crate::seed::rng_from_seed;

use super::monte_carlo_oracle;

const GRAD_TOL: f64 = 1e-10;
const MAX_ITERATIONS: usize = 100;
const MAX_HALVINGS: u32 = 30;
const DIVERGENCE_NORM: f64 = 1e6;
/// Largest `d` for which the Rademacher expectation is taken over all `2^d` sign patterns.
const EXACT_ENUMERATION_DIM: usize = 16;
const FISHER_DRAWS: usize = 400_000;
const FISHER_SEED: u64 = 0xF15E;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Covariates {
    #[default]
    Rademacher,
    Gaussian,
}

impl Covariates {
    /// `max E|prod_{s=1}^k X_{i_s}|` over index tuples, i.e. `E|X_1|^k`.
    pub fn abs_moment_cap(self, k: u32) -> f64 {
        match self {
            Covariates::Rademacher => 1.0,
            Covariates::Gaussian => halfnormal_abs_moment(k),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Logistic {
    pub d: usize,
    pub covariates: Covariates,
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Logistic {
    pub fn new(d: usize, covariates: Covariates) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter("logistic needs d >= 1".into()));
        }
        Ok(Self { d, covariates })
    }

    fn split<'a>(&self, record: &'a [f64]) -> (&'a [f64], f64) {
        (&record[..self.d], record[self.d])
    }

    /// A direction `beta` on the free coordinates with
    /// `(2 y_i - 1) beta^T x_i > 0` for every record proves the likelihood has
    /// no maximiser.
    fn separates(&self, data: &Dataset, free: usize, beta: &[f64]) -> bool {
        beta.iter().any(|b| *b != 0.0)
            && data.rows().all(|row| {
                let (x, y) = self.split(row);
                (2.0 * y - 1.0) * dot(&x[free..], beta) > 0.0
            })
    }

    fn exact_fisher(&self, theta: &[f64]) -> DMatrix<f64> {
        let d = self.d;
        let mut info = DMatrix::zeros(d, d);
        let mut x = vec![0.0; d];
        for mask in 0u32..(1 << d) {
            for (j, xj) in x.iter_mut().enumerate() {
                *xj = if mask >> j & 1 == 1 { 1.0 } else { -1.0 };
            }
            let p = sigmoid(dot(theta, &x));
            let w = p * (1.0 - p);
            for j in 0..d {
                for k in 0..d {
                    info[(j, k)] += w * x[j] * x[k];
                }
            }
        }
        info / f64::from(1u32 << d)
    }

    fn sampled_fisher(&self, theta: &[f64]) -> DMatrix<f64> {
        let d = self.d;
        let mut rng = rng_from_seed(FISHER_SEED);
        let mut info = DMatrix::zeros(d, d);
        let mut x = vec![0.0; d];
        for _ in 0..FISHER_DRAWS {
            for xj in x.iter_mut() {
                *xj = StandardNormal.sample(&mut rng);
            }
            let p = sigmoid(dot(theta, &x));
            let w = p * (1.0 - p);
            for j in 0..d {
                for k in 0..d {
                    info[(j, k)] += w * x[j] * x[k];
                }
            }
        }
        info / FISHER_DRAWS as f64
    }
}

impl ParametricModel for Logistic {
    fn id(&self) -> &str {
        "logistic"
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn arity(&self) -> usize {
        self.d + 1
    }

    fn validate_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.d || theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "logistic with d = {} needs {} finite coefficients, got {theta:?}",
                self.d, self.d
            )));
        }
        Ok(())
    }

    fn validate_data(&self, data: &Dataset) -> Result<()> {
        if data.arity() != self.arity() {
            return Err(Error::InvalidData(format!(
                "logistic records are (x_1..x_{}, y) of arity {}, got arity {}",
                self.d,
                self.arity(),
                data.arity()
            )));
        }
        if let Some(i) = data.rows().position(|r| r[self.d] != 0.0 && r[self.d] != 1.0) {
            return Err(Error::InvalidData(format!("record {} has y outside {{0, 1}}", i + 1)));
        }
        Ok(())
    }

    fn log_density(&self, record: &[f64], theta: &[f64]) -> f64 {
        let (x, y) = self.split(record);
        let eta = dot(theta, x);
        y * eta - softplus(eta)
    }

    fn score(&self, record: &[f64], theta: &[f64]) -> DVector<f64> {
        let (x, y) = self.split(record);
        let resid = y - sigmoid(dot(theta, x));
        DVector::from_iterator(self.d, x.iter().map(|xj| resid * xj))
    }

    fn hessian(&self, record: &[f64], theta: &[f64]) -> DMatrix<f64> {
        let (x, _) = self.split(record);
        let p = sigmoid(dot(theta, x));
        let w = p * (1.0 - p);
        DMatrix::from_fn(self.d, self.d, |j, k| -w * x[j] * x[k])
    }

    fn third_derivative(&self, record: &[f64], theta: &[f64], idx: [usize; 3]) -> f64 {
        let (x, _) = self.split(record);
        let p = sigmoid(dot(theta, x));
        let psi2 = p * (1.0 - p) * (1.0 - 2.0 * p);
        -psi2 * x[idx[0]] * x[idx[1]] * x[idx[2]]
    }

    fn fisher_info(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        self.validate_theta(theta)?;
        if theta.iter().all(|t| *t == 0.0) {
            // psi'(0) = 1/4 and E[X X^T] = I for both covariate laws
            return Ok(DMatrix::identity(self.d, self.d) * 0.25);
        }
        Ok(match self.covariates {
            Covariates::Rademacher if self.d <= EXACT_ENUMERATION_DIM => self.exact_fisher(theta),
            _ => self.sampled_fisher(theta),
        })
    }

    fn fisher_is_analytic(&self, theta: &[f64]) -> bool {
        theta.iter().all(|t| *t == 0.0)
            || (self.covariates == Covariates::Rademacher && self.d <= EXACT_ENUMERATION_DIM)
    }

    /// `sum_i |x_ij x_ik x_il|`, valid for every `theta` since `|psi''| <= 1`.
    fn dominating(
        &self,
        data: &Dataset,
        _theta0: &[f64],
        _eps: f64,
        idx: [usize; 3],
        restricted: Option<usize>,
    ) -> f64 {
        let off = restricted.unwrap_or(0);
        let [j, k, l] = idx.map(|i| i + off);
        data.rows().map(|row| (row[j] * row[k] * row[l]).abs()).sum()
    }

    fn sample(&self, theta: &[f64], n: usize, seed: u64) -> Dataset {
        let mut rng = rng_from_seed(seed);
        let d = self.d;
        let mut values = Vec::with_capacity(n * (d + 1));
        for _ in 0..n {
            let start = values.len();
            for _ in 0..d {
                let xj = match self.covariates {
                    Covariates::Rademacher => {
                        if rng.random::<bool>() {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                    Covariates::Gaussian => StandardNormal.sample(&mut rng),
                };
                values.push(xj);
            }
            let p = sigmoid(dot(theta, &values[start..]));
            values.push(if rng.random::<f64>() < p { 1.0 } else { 0.0 });
        }
        Dataset::new(d + 1, values).expect("n >= 1 finite draws")
    }

    /// Damped Newton ascent on the free coordinates.
    fn fit_mle(&self, data: &Dataset, pinned: Option<&[f64]>) -> Result<Fit> {
        self.validate_data(data)?;
        let d = self.d;
        let fixed = pinned.unwrap_or(&[]);
        if fixed.len() > d {
            return Err(Error::DimensionMismatch(format!(
                "{} pinned coordinates for d = {d}",
                fixed.len()
            )));
        }
        let free = fixed.len();
        let q = d - free;
        if q == 0 {
            return Ok(Fit {
                theta: fixed.to_vec(),
                iterations: 0,
                grad_norm: 0.0,
            });
        }
        let offsets: Vec<f64> = data.rows().map(|r| dot(fixed, &r[..free])).collect();
        let objective = |beta: &[f64]| -> f64 {
            data.rows()
                .zip(&offsets)
                .map(|(r, o)| {
                    let eta = o + dot(beta, &r[free..d]);
                    r[d] * eta - softplus(eta)
                })
                .sum()
        };
        let derivatives = |beta: &[f64]| -> (DVector<f64>, DMatrix<f64>) {
            let mut g = DVector::zeros(q);
            let mut h = DMatrix::zeros(q, q);
            for (r, o) in data.rows().zip(&offsets) {
                let x = &r[free..d];
                let p = sigmoid(o + dot(beta, x));
                let w = p * (1.0 - p);
                for j in 0..q {
                    g[j] += (r[d] - p) * x[j];
                    for k in 0..=j {
                        h[(j, k)] += w * x[j] * x[k];
                    }
                }
            }
            h.fill_upper_triangle_with_lower_triangle();
            (g, h)
        };
        let finish = |beta: Vec<f64>, iterations: usize, grad_norm: f64| {
            let mut theta = fixed.to_vec();
            theta.extend(beta);
            Fit {
                theta,
                iterations,
                grad_norm,
            }
        };

        let mut beta = vec![0.0; q];
        let mut ll = objective(&beta);
        let mut grad_norm = f64::INFINITY;
        for iteration in 0..=MAX_ITERATIONS {
            let (g, h) = derivatives(&beta);
            grad_norm = g.amax();
            if grad_norm <= GRAD_TOL {
                if self.separates(data, free, &beta) {
                    return Err(Error::Separation(
                        "fitted coefficients classify every record correctly".into(),
                    ));
                }
                let saturated = data.rows().zip(&offsets).any(|(r, o)| {
                    let p = sigmoid(o + dot(&beta, &r[free..d]));
                    !(1e-12..=1.0 - 1e-12).contains(&p)
                });
                if saturated {
                    return Err(Error::Separation("fitted probabilities saturate at 0 or 1".into()));
                }
                return Ok(finish(beta, iteration, grad_norm));
            }
            if iteration == MAX_ITERATIONS {
                break;
            }
            if beta.iter().any(|b| b.abs() > DIVERGENCE_NORM) {
                return Err(Error::Separation(format!(
                    "coefficient norm exceeded {DIVERGENCE_NORM:e}"
                )));
            }
            let Some(chol) = h.cholesky() else {
                if self.separates(data, free, &beta) {
                    return Err(Error::Separation(
                        "information collapsed along a separating direction".into(),
                    ));
                }
                return Err(Error::SingularHessian(iteration));
            };
            let step = chol.solve(&g);
            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..=MAX_HALVINGS {
                let trial: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + scale * s).collect();
                let trial_ll = objective(&trial);
                if trial_ll >= ll - 1e-12 * (1.0 + ll.abs()) {
                    beta = trial;
                    ll = trial_ll;
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if self.separates(data, free, &beta) {
            return Err(Error::Separation("iterates diverge along a separating direction".into()));
        }
        Err(Error::MaxIterations {
            iterations: MAX_ITERATIONS,
            grad_norm,
        })
    }

    fn moment_oracle(
        &self,
        theta0: &[f64],
        n: usize,
        r: usize,
        eps: f64,
        settings: &OracleSettings,
    ) -> Result<MomentOracle> {
        monte_carlo_oracle(self, theta0, n, r, eps, settings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((softplus(-50.0) - (-50.0f64).exp()).abs() < 1e-30);
    }

    #[test]
    fn exact_fisher_matches_identity_at_zero() {
        let m = Logistic::new(3, Covariates::Rademacher).unwrap();
        let exact = m.exact_fisher(&[0.0; 3]);
        assert!((exact - DMatrix::identity(3, 3) * 0.25).amax() < 1e-15);
    }

    #[test]
    fn separated_one_dimensional_data_is_rejected() {
        let m = Logistic::new(1, Covariates::Gaussian).unwrap();
        let rows: Vec<Vec<f64>> = [-2.0, -1.0, -0.5, 0.3, 1.2, 2.5]
            .iter()
            .map(|&x| vec![x, if x > 0.0 { 1.0 } else { 0.0 }])
            .collect();
        let data = Dataset::from_rows(&rows).unwrap();
        assert!(matches!(m.fit_mle(&data, None), Err(Error::Separation(_))));
    }
}
