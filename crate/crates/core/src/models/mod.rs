//! Built-in models, the likelihood ratio statistic and a generic Monte Carlo
//! moment oracle.

mod exponential;
mod logistic;
mod normal;

pub use exponential::Exponential;
pub use logistic::{sigmoid, Covariates, Logistic};
pub use normal::{normal_score_abs_moment, Normal};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::fisher::spd_inverse_sqrt;
use crate::model::{
    Dataset, Fit, MomentOracle, MomentTable, OracleSettings, ParametricModel, QTMomentSet, Theta,
    WMomentSet,
};
use crate::moments::MomentValue;
use crate::quadrature::integrate_real_line;
use crate::seed::replicate_seed;

/// Looks up a built-in model. `dim` is only used by `logistic`.
pub fn model_by_id(
    id: &str,
    dim: usize,
    covariates: Covariates,
) -> Result<Box<dyn ParametricModel>> {
    match id {
        "exponential" => Ok(Box::new(Exponential)),
        "normal" => Ok(Box::new(Normal)),
        "logistic" => Ok(Box::new(Logistic::new(dim, covariates)?)),
        other => Err(Error::UnknownModel(other.to_string())),
    }
}

/// Outcome of both fits and the statistic `-2 log Lambda`.
#[derive(Debug, Clone, Serialize)]
pub struct LrtResult {
    pub theta_hat: Theta,
    pub theta_res_hat: Theta,
    pub statistic: f64,
    pub iterations: [usize; 2],
    pub grad_norm: [f64; 2],
}

/// `2 [l(theta_hat) - l(theta_res_hat)]`, where the restricted fit pins the
/// first `r` coordinates at `theta0`. For `r = d` the restricted fit is
/// `theta0` itself.
pub fn neg2_log_lambda(
    model: &dyn ParametricModel,
    data: &Dataset,
    r: usize,
    theta0: &[f64],
) -> Result<LrtResult> {
    let d = model.dim();
    if r == 0 || r > d || theta0.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "need 1 <= r <= d = {d} and a null value of length d (r = {r}, len = {})",
            theta0.len()
        )));
    }
    let full = model.fit_mle(data, None)?;
    let restricted = if r == d {
        Fit {
            theta: theta0.to_vec(),
            iterations: 0,
            grad_norm: 0.0,
        }
    } else {
        model.fit_mle(data, Some(&theta0[..r]))?
    };
    let statistic =
        2.0 * (model.log_likelihood(data, &full.theta) - model.log_likelihood(data, &restricted.theta));
    Ok(LrtResult {
        theta_hat: Theta::new(full.theta, r)?,
        theta_res_hat: Theta::new(restricted.theta, r)?,
        statistic,
        iterations: [full.iterations, restricted.iterations],
        grad_norm: [full.grad_norm, restricted.grad_norm],
    })
}

/// `2n (xbar/theta0 - 1 - log(xbar/theta0))` for the exponential simple null.
pub fn exponential_lrt_closed_form(data: &Dataset, theta0: f64) -> f64 {
    let n = data.n() as f64;
    let ratio = data.values().iter().sum::<f64>() / n / theta0;
    2.0 * n * (ratio - 1.0 - ratio.ln())
}

/// `n log(sum x^2 / sum (x - xbar)^2)` for the normal test of `mu = 0`.
pub fn normal_lrt_closed_form(data: &Dataset) -> f64 {
    let xs = data.values();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let raw: f64 = xs.iter().map(|x| x * x).sum();
    let centered: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    n * (raw / centered).ln()
}

fn standard_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `E|N(m, tau^2)|`
fn folded_normal_mean(m: f64, tau: f64) -> f64 {
    if tau <= 1e-300 {
        return m.abs();
    }
    tau * (2.0 / std::f64::consts::PI).sqrt() * (-m * m / (2.0 * tau * tau)).exp()
        + m * (1.0 - 2.0 * standard_normal_cdf(-m / tau))
}

/// Tables `E|V_s|` and `E|V_s Z_t^2|` for `V = I^{-1/2} Z`, `Z` standard normal.
pub fn gaussian_z_tables(info: &DMatrix<f64>) -> Result<(MomentTable, MomentTable)> {
    let d = info.nrows();
    let root = spd_inverse_sqrt(info)?;
    let var: Vec<f64> = (0..d).map(|s| root.row(s).iter().map(|a| a * a).sum()).collect();
    let z_abs = MomentTable::analytic(&[d], |i| (2.0 / std::f64::consts::PI).sqrt() * var[i[0]].sqrt());
    let mut err = None;
    let z_sq = MomentTable::analytic(&[d, d], |i| {
        let (s, t) = (i[0], i[1]);
        let a = root[(s, t)];
        let tau = (var[s] - a * a).max(0.0).sqrt();
        // condition on Z_t = z; the rest of V_s is N(0, tau^2)
        let f = |z: f64| {
            z * z * folded_normal_mean(a * z, tau) * (-0.5 * z * z).exp()
                / (2.0 * std::f64::consts::PI).sqrt()
        };
        match integrate_real_line(f, 1e-13, 1e-13) {
            Ok(q) => q.value,
            Err(e) => {
                err = Some(e);
                f64::NAN
            }
        }
    });
    err.map_or(Ok((z_abs, z_sq)), Err)
}

/// Running sums for a fixed list of features.
#[derive(Debug, Clone)]
struct Sums {
    count: usize,
    sum: Vec<f64>,
    sumsq: Vec<f64>,
}

impl Sums {
    fn new(len: usize) -> Self {
        Self {
            count: 0,
            sum: vec![0.0; len],
            sumsq: vec![0.0; len],
        }
    }

    fn push(&mut self, features: &[f64]) {
        self.count += 1;
        for ((s, q), f) in self.sum.iter_mut().zip(self.sumsq.iter_mut()).zip(features) {
            *s += f;
            *q += f * f;
        }
    }

    fn merge(&mut self, other: &Sums) {
        self.count += other.count;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sumsq.iter_mut().zip(&other.sumsq) {
            *a += b;
        }
    }

    /// Mean and standard error of feature `i`.
    fn estimate(&self, i: usize) -> (f64, f64) {
        let n = self.count as f64;
        let mean = self.sum[i] / n;
        let var = ((self.sumsq[i] - n * mean * mean) / (n - 1.0).max(1.0)).max(0.0);
        (mean, (var / n).sqrt())
    }

    fn table(&self, shape: &[usize], offset: usize, abs: bool) -> MomentTable {
        let mut i = offset;
        MomentTable::from_fn(shape, |_| {
            let (mean, se) = self.estimate(i);
            i += 1;
            MomentValue::monte_carlo(if abs { mean.abs() } else { mean }, se)
        })
    }
}

/// Index tuples of length `k` over `0..d` in row-major order.
fn tuples(d: usize, k: usize) -> Vec<Vec<usize>> {
    let total = d.pow(k as u32);
    (0..total)
        .map(|mut flat| {
            let mut idx = vec![0; k];
            for slot in idx.iter_mut().rev() {
                *slot = flat % d;
                flat /= d;
            }
            idx
        })
        .collect()
}

/// Runs `body` over `0..count` in fixed chunks so the reduction order does
/// not depend on the number of worker threads.
fn chunked<T, F>(count: usize, body: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> T + Sync,
{
    const CHUNKS: usize = 64;
    let size = count.div_ceil(CHUNKS).max(1);
    (0..count.div_ceil(size))
        .into_par_iter()
        .map(|c| body(c * size..((c + 1) * size).min(count)))
        .collect()
}

/// Feature layout of one MLE replicate, shared by the full and restricted sets.
struct QtLayout {
    dim: usize,
    pairs: Vec<Vec<usize>>,
    triples: Vec<Vec<usize>>,
    quads: Vec<Vec<usize>>,
}

impl QtLayout {
    fn new(dim: usize) -> Self {
        Self {
            dim,
            pairs: tuples(dim, 2),
            triples: tuples(dim, 3),
            quads: tuples(dim, 4),
        }
    }

    /// sq, eq2, eq6, eq_triple, eq_quad, t6
    fn unconditional(&self, q: &[f64], t: &DMatrix<f64>, out: &mut Vec<f64>) {
        out.clear();
        let q2: Vec<f64> = q.iter().map(|v| v * v).collect();
        out.extend(q2.iter().copied());
        out.extend(self.pairs.iter().map(|i| q2[i[0]] * q2[i[1]]));
        out.extend(q2.iter().map(|v| v * v * v));
        out.extend(self.triples.iter().map(|i| q2[i[0]] * q2[i[1]] * q2[i[2]]));
        out.extend(self.quads.iter().map(|i| q2[i[0]] * q2[i[1]] * q2[i[2]] * q2[i[3]]));
        out.extend(self.pairs.iter().map(|i| t[(i[0], i[1])].powi(6)));
    }

    /// t4, m2, m4
    fn conditional(&self, t: &DMatrix<f64>, m: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.pairs.iter().map(|i| t[(i[0], i[1])].powi(4)));
        out.extend(m.iter().map(|v| v * v));
        out.extend(m.iter().map(|v| v.powi(4)));
    }

    fn unconditional_len(&self) -> usize {
        let d = self.dim;
        d + d * d + d + d.pow(3) + d.pow(4) + d * d
    }

    fn conditional_len(&self) -> usize {
        let d = self.dim;
        d * d + 2 * d.pow(3)
    }

    fn assemble(&self, uncond: &Sums, cond: &Sums, var_hess: MomentTable) -> QTMomentSet {
        let d = self.dim;
        let mut at = 0;
        let mut next = |shape: &[usize]| {
            let t = uncond.table(shape, at, false);
            at += shape.iter().product::<usize>();
            t
        };
        let sq = next(&[d]);
        let eq2 = next(&[d, d]);
        let eq6 = next(&[d]);
        let eq_triple = next(&[d, d, d]);
        let eq_quad = next(&[d, d, d, d]);
        let t6 = next(&[d, d]);
        let t4 = cond.table(&[d, d], 0, false);
        let m2 = cond.table(&[d, d, d], d * d, false);
        let m4 = cond.table(&[d, d, d], d * d + d.pow(3), false);
        QTMomentSet {
            dim: d,
            sq: Some(sq),
            eq2: Some(eq2),
            eq6: Some(eq6),
            eq_triple: Some(eq_triple),
            eq_quad: Some(eq_quad),
            var_hess: Some(var_hess),
            t6: Some(t6),
            t4_cond: Some(t4),
            m2_cond: Some(m2),
            m4_cond: Some(m4),
        }
    }
}

struct ReplicateSums {
    full: (Sums, Sums),
    restricted: Option<(Sums, Sums)>,
    failed: usize,
}

/// Estimates every oracle entry by simulation: `settings.reps` datasets of
/// size `n` for the MLE-based moments (conditional entries use the replicates
/// with `max_j |Q_j| < eps`) and `settings.draws` single observations for the
/// score and Hessian moments.
pub fn monte_carlo_oracle(
    model: &dyn ParametricModel,
    theta0: &[f64],
    n: usize,
    r: usize,
    eps: f64,
    settings: &OracleSettings,
) -> Result<MomentOracle> {
    model.validate_theta(theta0)?;
    let d = model.dim();
    if r == 0 || r > d {
        return Err(Error::DimensionMismatch(format!("need 1 <= r <= d = {d}, got {r}")));
    }
    if !(eps > 0.0) {
        return Err(Error::NonpositiveEpsilon(eps));
    }
    if settings.reps < settings.min_accepted || settings.draws < 2 {
        return Err(Error::InvalidParameter(format!(
            "oracle needs reps >= {} and draws >= 2",
            settings.min_accepted
        )));
    }
    let info = model.fisher_info(theta0)?;
    let nf = n as f64;
    let q = d - r;
    let full_layout = QtLayout::new(d);
    let res_layout = (q > 0).then(|| QtLayout::new(q));
    let triples_full = tuples(d, 3);
    let triples_res = tuples(q, 3);

    let chunks = chunked(settings.reps, |range| {
        let mut full = (
            Sums::new(full_layout.unconditional_len()),
            Sums::new(full_layout.conditional_len()),
        );
        let mut restricted = res_layout
            .as_ref()
            .map(|l| (Sums::new(l.unconditional_len()), Sums::new(l.conditional_len())));
        let mut failed = 0;
        let mut buf = Vec::new();
        for i in range {
            let data = model.sample(theta0, n, replicate_seed(settings.seed, i as u64));
            let fit = match model.fit_mle(&data, None) {
                Ok(f) => f,
                Err(_) => {
                    failed += 1;
                    continue;
                }
            };
            let res_fit = match res_layout {
                Some(_) => match model.fit_mle(&data, Some(&theta0[..r])) {
                    Ok(f) => Some(f),
                    Err(_) => {
                        failed += 1;
                        continue;
                    }
                },
                None => None,
            };
            let hess = model.hessian_sum(&data, theta0);
            let t = &hess + &info * nf;
            let qv: Vec<f64> = fit.theta.iter().zip(theta0).map(|(a, b)| a - b).collect();
            full_layout.unconditional(&qv, &t, &mut buf);
            full.0.push(&buf);
            if qv.iter().all(|v| v.abs() < eps) {
                let m: Vec<f64> = triples_full
                    .iter()
                    .map(|i| model.dominating(&data, theta0, eps, [i[0], i[1], i[2]], None))
                    .collect();
                full_layout.conditional(&t, &m, &mut buf);
                full.1.push(&buf);
            }
            if let (Some(layout), Some(res_fit), Some(sums)) =
                (res_layout.as_ref(), res_fit, restricted.as_mut())
            {
                let qs: Vec<f64> = res_fit.theta[r..].iter().zip(&theta0[r..]).map(|(a, b)| a - b).collect();
                let ts = t.view((r, r), (q, q)).into_owned();
                layout.unconditional(&qs, &ts, &mut buf);
                sums.0.push(&buf);
                if qs.iter().all(|v| v.abs() < eps) {
                    let m: Vec<f64> = triples_res
                        .iter()
                        .map(|i| model.dominating(&data, theta0, eps, [i[0], i[1], i[2]], Some(r)))
                        .collect();
                    layout.conditional(&ts, &m, &mut buf);
                    sums.1.push(&buf);
                }
            }
        }
        ReplicateSums {
            full,
            restricted,
            failed,
        }
    });

    let mut total = ReplicateSums {
        full: (
            Sums::new(full_layout.unconditional_len()),
            Sums::new(full_layout.conditional_len()),
        ),
        restricted: res_layout
            .as_ref()
            .map(|l| (Sums::new(l.unconditional_len()), Sums::new(l.conditional_len()))),
        failed: 0,
    };
    for c in &chunks {
        total.full.0.merge(&c.full.0);
        total.full.1.merge(&c.full.1);
        if let (Some(a), Some(b)) = (total.restricted.as_mut(), c.restricted.as_ref()) {
            a.0.merge(&b.0);
            a.1.merge(&b.1);
        }
        total.failed += c.failed;
    }
    if total.failed * 1000 > settings.reps {
        return Err(Error::ExcessiveFitFailures {
            failed: total.failed,
            reps: settings.reps,
        });
    }
    let accepted = total
        .restricted
        .as_ref()
        .map_or(total.full.1.count, |s| s.1.count.min(total.full.1.count));
    if accepted < settings.min_accepted {
        return Err(Error::InsufficientConditionalSamples {
            accepted,
            required: settings.min_accepted,
        });
    }

    let (w, var_hess) = single_observation_moments(model, theta0, &info, settings)?;
    let res_var_hess = (q > 0).then(|| {
        MomentTable::from_fn(&[q, q], |i| var_hess.entry(&[i[0] + r, i[1] + r]))
    });
    let full = full_layout.assemble(&total.full.0, &total.full.1, var_hess);
    let restricted = match (res_layout, total.restricted, res_var_hess) {
        (Some(l), Some((u, c)), Some(v)) => Some(l.assemble(&u, &c, v)),
        _ => None,
    };
    Ok(MomentOracle {
        full,
        restricted,
        w,
        epsilon: eps,
    })
}

/// Score moments and the per-observation Hessian variance from one large sample.
fn single_observation_moments(
    model: &dyn ParametricModel,
    theta0: &[f64],
    info: &DMatrix<f64>,
    settings: &OracleSettings,
) -> Result<(WMomentSet, MomentTable)> {
    let d = model.dim();
    let draws = settings.draws;
    let data = model.sample(theta0, draws, replicate_seed(settings.seed, u64::MAX));
    let pairs = tuples(d, 2);
    let triples = tuples(d, 3);
    let quads = tuples(d, 4);
    let hess_of = |i: usize| model.hessian(data.row(i), theta0);

    // pass 1: Hessian means
    let mean_chunks = chunked(draws, |range| {
        let mut s = Sums::new(d * d);
        for i in range {
            let h = hess_of(i);
            s.push(h.as_slice());
        }
        s
    });
    let mut mean = Sums::new(d * d);
    mean_chunks.iter().for_each(|c| mean.merge(c));
    let hbar: Vec<f64> = (0..d * d).map(|i| mean.estimate(i).0).collect();

    // pass 2: centred Hessian squares and score moments
    let len = d * d + d + d * d + d.pow(3) + d.pow(4) + d;
    let chunks = chunked(draws, |range| {
        let mut s = Sums::new(len);
        let mut buf = Vec::with_capacity(len);
        for i in range {
            buf.clear();
            let h = hess_of(i);
            buf.extend(h.as_slice().iter().zip(&hbar).map(|(v, m)| (v - m) * (v - m)));
            let y: DVector<f64> = model.score(data.row(i), theta0);
            buf.extend(y.iter().map(|v| v.abs()));
            buf.extend(pairs.iter().map(|p| y[p[0]] * y[p[1]]));
            buf.extend(triples.iter().map(|p| (y[p[0]] * y[p[1]] * y[p[2]]).abs()));
            buf.extend(quads.iter().map(|p| (y[p[0]] * y[p[1]] * y[p[2]]).abs() * y[p[3]] * y[p[3]]));
            buf.extend(y.iter().map(|v| v * v));
            s.push(&buf);
        }
        s
    });
    let mut sums = Sums::new(len);
    chunks.iter().for_each(|c| sums.merge(c));

    // nalgebra storage is column-major; the Hessian is symmetric so the layout is immaterial
    let var_hess = sums.table(&[d, d], 0, false);
    let mut at = d * d;
    let mut next = |shape: &[usize], abs: bool| {
        let t = sums.table(shape, at, abs);
        at += shape.iter().product::<usize>();
        t
    };
    let abs1 = next(&[d], false);
    let cross2 = next(&[d, d], true);
    let abs3 = next(&[d, d, d], false);
    let abs5 = next(&[d, d, d, d], false);
    let w2 = next(&[d], false);
    let (mut z_abs, mut z_sq) = gaussian_z_tables(info)?;
    if !model.fisher_is_analytic(theta0) {
        for e in z_abs.entries.iter_mut().chain(z_sq.entries.iter_mut()) {
            e.source = crate::moments::MomentSource::MonteCarlo;
        }
    }
    Ok((
        WMomentSet {
            dim: d,
            abs1: Some(abs1),
            cross2: Some(cross2),
            abs3: Some(abs3),
            abs5: Some(abs5),
            w2: Some(w2),
            z_abs: Some(z_abs),
            z_sq: Some(z_sq),
        },
        var_hess,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folded_mean_limits() {
        assert!((folded_normal_mean(0.0, 1.0) - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-15);
        assert!((folded_normal_mean(40.0, 1.0) - 40.0).abs() < 1e-12);
        assert_eq!(folded_normal_mean(-3.0, 0.0), 3.0);
    }

    #[test]
    fn z_tables_for_diagonal_information() {
        // I = diag(1, 1/2): V = (Z1, sqrt(2) Z2)
        let info = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5]);
        let (za, zs) = gaussian_z_tables(&info).unwrap();
        let s = (2.0 / std::f64::consts::PI).sqrt();
        assert!((za.get(&[0]) - s).abs() < 1e-13);
        assert!((za.get(&[1]) - 2f64.sqrt() * s).abs() < 1e-13);
        assert!((zs.get(&[0, 0]) - 2.0 * s).abs() < 1e-11);
        assert!((zs.get(&[0, 1]) - s).abs() < 1e-11);
        assert!((zs.get(&[1, 0]) - 2f64.sqrt() * s).abs() < 1e-11);
    }

    #[test]
    fn tuples_are_row_major() {
        assert_eq!(tuples(2, 2), vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
    }

    #[test]
    fn unknown_model_is_rejected() {
        assert!(matches!(
            model_by_id("weibull", 1, Covariates::Rademacher),
            Err(Error::UnknownModel(_))
        ));
    }
}
