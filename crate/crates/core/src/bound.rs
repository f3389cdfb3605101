//! Assembly of the five-term bound on `|E h(-2 log Lambda) - E h(chisq_r)|`
//! and the closed-form corollary bounds.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fisher::{partition_fisher, FisherBlocks};
use crate::model::{
    HNorms, MomentOracle, OracleSettings, ParametricModel, QTMomentSet, TestFunction, WMomentSet,
};

/// Inputs recorded alongside a bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundMeta {
    pub model: String,
    pub theta0: Vec<f64>,
    pub n: usize,
    pub r: usize,
    pub epsilon: f64,
    pub norms: HNorms,
}

/// The five addends of the bound, already scaled by their prefactors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundTerms {
    pub r: f64,
    pub k1: f64,
    pub k1_star: f64,
    pub k2: f64,
    pub k2_star: f64,
}

impl BoundTerms {
    /// Sum in the fixed order r, k1, k1*, k2, k2*.
    pub fn total(&self) -> f64 {
        self.r + self.k1 + self.k1_star + self.k2 + self.k2_star
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            r: self.r * factor,
            k1: self.k1 * factor,
            k1_star: self.k1_star * factor,
            k2: self.k2 * factor,
            k2_star: self.k2_star * factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundBreakdown {
    pub meta: BoundMeta,
    pub terms: BoundTerms,
    pub total: f64,
    /// False when any Monte Carlo estimate entered the bound.
    pub certified: bool,
    /// Change in `total` when every Monte Carlo entry moves up one standard error.
    pub uncertainty: f64,
}

/// The Stein term `R(W, U, D)` for i.i.d. scores, with the minimum over `s`
/// taken exactly. Uses `blocks.c` as the constant `c`.
pub fn compute_r(w: &WMomentSet, blocks: &FisherBlocks, n: usize) -> Result<f64> {
    let d = w.dim;
    if blocks.dim() != d {
        return Err(Error::DimensionMismatch(format!(
            "score moments have d = {d}, Fisher blocks have d = {}",
            blocks.dim()
        )));
    }
    let abs1 = w.req(&w.abs1, "abs1")?;
    let cross2 = w.req(&w.cross2, "cross2")?;
    let abs3 = w.req(&w.abs3, "abs3")?;
    let abs5 = w.req(&w.abs5, "abs5")?;
    let w2 = w.req(&w.w2, "w2")?;
    let z_abs = w.req(&w.z_abs, "z_abs")?;
    let z_sq = w.req(&w.z_sq, "z_sq")?;
    let c = blocks.c;
    let cd = c * d as f64;
    let nf = n as f64;

    let mut best = f64::INFINITY;
    for s in 0..d {
        let v = z_abs.get(&[s]);
        let mut sum = 0.0;
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    let y3 = abs3.get(&[j, k, l]);
                    let y1 = abs1.get(&[l]);
                    let mut inner3 = 0.0;
                    let mut inner1 = 0.0;
                    for t in 0..d {
                        let wt = w2.get(&[t]);
                        let zst = z_sq.get(&[s, t]);
                        inner3 += 4.0 * y3 * wt * v + 4.0 / nf * abs5.get(&[j, k, l, t]) * v + zst * y3;
                        inner1 += 4.0 * y1 * wt * v + 4.0 / nf * abs3.get(&[l, t, t]) * v + zst * y1;
                    }
                    sum += v * y3
                        + 8.0 * cd * inner3
                        + 2.0 * cross2.get(&[j, k]) * (y1 * v + 16.0 * cd * inner1);
                }
            }
        }
        best = best.min(sum);
    }
    Ok(c * best)
}

/// Inverse used by the K sums: `I^{-1}` for the full model, `C^{-1}` for the
/// restricted one.
fn k_inverse(blocks: &FisherBlocks, starred: bool) -> &DMatrix<f64> {
    if starred {
        &blocks.c_inv
    } else {
        &blocks.full_inv
    }
}

fn check_dim(q: &QTMomentSet, inv: &DMatrix<f64>) -> Result<()> {
    if inv.nrows() != q.dim {
        return Err(Error::DimensionMismatch(format!(
            "moment set has dimension {}, information inverse has {}",
            q.dim,
            inv.nrows()
        )));
    }
    Ok(())
}

/// `K1`; the inverse information enters with its sign.
pub fn compute_k1(q: &QTMomentSet, blocks: &FisherBlocks, n: usize, starred: bool) -> Result<f64> {
    let inv = k_inverse(blocks, starred);
    check_dim(q, inv)?;
    let d = q.dim;
    let eq2 = q.req(&q.eq2, "eq2")?;
    let eq6 = q.req(&q.eq6, "eq6")?;
    let var_hess = q.req(&q.var_hess, "var_hess")?;
    let t6 = q.req(&q.t6, "t6")?;

    let mut first = 0.0;
    for j in 0..d {
        for k in 0..d {
            first += eq2.get(&[j, k]).sqrt() * var_hess.get(&[j, k]).sqrt();
        }
    }
    let mut second = 0.0;
    for l in 0..d {
        for m in 0..d {
            let mut inner = 0.0;
            for j in 0..d {
                let vh = var_hess.get(&[l, j]).sqrt();
                for k in 0..d {
                    inner += vh * (eq6.get(&[j]) * eq6.get(&[k]) * t6.get(&[m, k])).powf(1.0 / 6.0);
                }
            }
            second += inv[(l, m)] * inner;
        }
    }
    Ok(3.0 * n as f64 * first + second)
}

/// `K2` with the conditional moments taken given `max_j |Q_j| < eps`.
pub fn compute_k2(
    q: &QTMomentSet,
    blocks: &FisherBlocks,
    n: usize,
    eps: f64,
    norms: &HNorms,
    starred: bool,
) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::NonpositiveEpsilon(eps));
    }
    let inv = k_inverse(blocks, starred);
    check_dim(q, inv)?;
    let d = q.dim;
    let sq = q.req(&q.sq, "sq")?;
    let eq3 = q.req(&q.eq_triple, "eq_triple")?;
    let eq4 = q.req(&q.eq_quad, "eq_quad")?;
    let t4 = q.req(&q.t4_cond, "t4_cond")?;
    let m2 = q.req(&q.m2_cond, "m2_cond")?;
    let m4 = q.req(&q.m4_cond, "m4_cond")?;
    let rn = (n as f64).sqrt();
    let root4 = |x: f64| x.sqrt().sqrt();

    let term1 = 2.0 * rn * norms.h / (eps * eps) * (0..d).map(|j| sq.get(&[j])).sum::<f64>();

    let mut s2 = 0.0;
    for j in 0..d {
        for k in 0..d {
            for l in 0..d {
                s2 += eq3.get(&[j, k, l]).sqrt() * m2.get(&[j, k, l]).sqrt();
            }
        }
    }
    let term2 = rn * norms.h1 * 7.0 / 3.0 * s2;

    let mut s3 = 0.0;
    for qi in 0..d {
        for k in 0..d {
            let a = inv[(k, qi)].abs();
            let mut inner = 0.0;
            for j in 0..d {
                let tk = root4(t4.get(&[k, j]));
                for l in 0..d {
                    for s in 0..d {
                        inner += eq3.get(&[j, l, s]).sqrt() * tk * root4(m4.get(&[qi, s, l]));
                    }
                }
            }
            s3 += a * inner;
        }
    }
    let term3 = norms.h1 / rn * s3;

    let mut s4 = 0.0;
    for b in 0..d {
        for qi in 0..d {
            let a = inv[(qi, b)].abs();
            if a == 0.0 {
                continue;
            }
            let mut inner = 0.0;
            for k in 0..d {
                for s in 0..d {
                    let mb = root4(m4.get(&[b, s, k]));
                    for l in 0..d {
                        for j in 0..d {
                            inner += eq4.get(&[k, s, j, l]).sqrt() * mb * root4(m4.get(&[qi, j, l]));
                        }
                    }
                }
            }
            s4 += a * inner;
        }
    }
    let term4 = norms.h1 / (4.0 * rn) * s4;

    Ok(term1 + term2 + term3 + term4)
}

fn terms_from_oracle(
    oracle: &MomentOracle,
    blocks: &FisherBlocks,
    n: usize,
    norms: &HNorms,
) -> Result<BoundTerms> {
    let rn = (n as f64).sqrt();
    let eps = oracle.epsilon;
    let r = compute_r(&oracle.w, blocks, n)?;
    let k1 = compute_k1(&oracle.full, blocks, n, false)?;
    let k2 = compute_k2(&oracle.full, blocks, n, eps, norms, false)?;
    let (k1s, k2s) = match (&oracle.restricted, blocks.nuisance_dim()) {
        (_, 0) => (0.0, 0.0),
        (Some(res), _) => (
            compute_k1(res, blocks, n, true)?,
            compute_k2(res, blocks, n, eps, norms, true)?,
        ),
        (None, _) => return Err(Error::MissingMoment("restricted moment set".into())),
    };
    Ok(BoundTerms {
        r: 2.0 * (norms.h1 + norms.h2) * r / rn,
        k1: norms.h1 * k1 / rn,
        k1_star: norms.h1 * k1s / rn,
        k2: k2 / rn,
        k2_star: k2s / rn,
    })
}

/// Evaluates the bound from an already computed moment oracle. `blocks.c`
/// is used as the Stein constant.
pub fn bound_from_oracle(
    oracle: &MomentOracle,
    blocks: &FisherBlocks,
    meta: BoundMeta,
) -> Result<BoundBreakdown> {
    let terms = terms_from_oracle(oracle, blocks, meta.n, &meta.norms)?;
    let total = terms.total();
    let certified = oracle.certified();
    let uncertainty = if certified {
        0.0
    } else {
        terms_from_oracle(&oracle.shifted_up(), blocks, meta.n, &meta.norms)?.total() - total
    };
    Ok(BoundBreakdown {
        meta,
        terms,
        total,
        certified,
        uncertainty,
    })
}

/// Fisher blocks with the model's Stein constant in place of the generic `c`.
pub fn model_blocks(model: &dyn ParametricModel, theta0: &[f64], r: usize) -> Result<FisherBlocks> {
    let info = model.fisher_info(theta0)?;
    let mut blocks = partition_fisher(&info, r)?;
    blocks.c = model.stein_constant(theta0, &blocks);
    Ok(blocks)
}

/// Full bound for `model` at `theta0`. `eps` falls back to the model default.
pub fn assemble_bound(
    model: &dyn ParametricModel,
    theta0: &[f64],
    n: usize,
    r: usize,
    h: &TestFunction,
    eps: Option<f64>,
    settings: &OracleSettings,
) -> Result<BoundBreakdown> {
    model.validate_theta(theta0)?;
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need n >= 2, got {n}")));
    }
    let eps = eps
        .or_else(|| model.epsilon_default(theta0))
        .ok_or_else(|| Error::EpsilonRequired(model.id().to_string()))?;
    if !(eps > 0.0) {
        return Err(Error::NonpositiveEpsilon(eps));
    }
    let blocks = model_blocks(model, theta0, r)?;
    let oracle = model.moment_oracle(theta0, n, r, eps, settings)?;
    let meta = BoundMeta {
        model: model.id().to_string(),
        theta0: theta0.to_vec(),
        n,
        r,
        epsilon: eps,
        norms: h.norms,
    };
    bound_from_oracle(&oracle, &blocks, meta)
}

/// Closed-form exponential bound. With `prefactored` the Stein polynomial is
/// multiplied by `2(||h'|| + ||h''||)/sqrt(n)`; without it the display is
/// evaluated as printed.
pub fn exponential_corollary_bound(theta0: f64, n: usize, norms: &HNorms, prefactored: bool) -> f64 {
    let nf = n as f64;
    let rn = nf.sqrt();
    let t = theta0;
    let poly = 2f64.sqrt() / (t.powi(8) * std::f64::consts::PI.sqrt())
        * (19.0 * t.powi(4) + 325.0 * t * t + 2733.0 + 36973.0 / nf);
    let stein = if prefactored {
        2.0 * (norms.h1 + norms.h2) / rn * poly
    } else {
        poly
    };
    let k = 6.0 * (3.0 + 6.0 / nf).sqrt()
        + (15.0 + 130.0 / nf + 120.0 / (nf * nf)).sqrt()
            * (1120.0 / 3.0 + (320.0 * (3.0 + 6.0 / nf).powf(0.25) + 4.0) / rn)
        + 6400.0 / rn * (105.0 + 2380.0 / nf + 7308.0 / (nf * nf) + 5040.0 / nf.powi(3)).sqrt();
    8.0 * norms.h / nf + stein + norms.h1 / rn * k
}

/// Constants of the normal corollary, in display order.
pub const NORMAL_COROLLARY_CONSTANTS: [f64; 3] = [47456.0, 418433114.0, 8.0];

/// Closed-form bound for testing the mean of a normal sample with unknown variance.
pub fn normal_corollary_bound(sigma2: f64, n: usize, norms: &HNorms) -> Result<f64> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma^2 must be positive, got {sigma2}")));
    }
    let [c_stein, c_k, c_tail] = NORMAL_COROLLARY_CONSTANTS;
    let nf = n as f64;
    let sigma = sigma2.sqrt();
    let stein = c_stein * sigma2 * (norms.h2 + norms.h1) * 1f64.max(sigma.powi(-9))
        / (nf * std::f64::consts::PI).sqrt();
    let k = c_k * norms.h1 * 1f64.max(sigma.powi(4)) / nf.sqrt();
    let tail = c_tail * norms.h / nf * (4.0 + 1.0 / sigma2);
    Ok(stein + k + tail)
}

/// Order-level bound for logistic regression with `d` covariates and `r`
/// tested coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingReport {
    pub d: usize,
    pub r: usize,
    pub n: usize,
    /// `mu r^2 (d - r) d^4 + d^3 + d^2`
    pub coefficient: f64,
    /// `coefficient / sqrt(n)`
    pub bound: f64,
    /// True while `d < n^{1/14}`, the regime in which the bound vanishes.
    pub admissible: bool,
}

/// `moment_cap` bounds the third and fifth absolute covariate product moments.
pub fn logistic_bound_scaling(d: usize, r: usize, n: usize, moment_cap: f64) -> Result<ScalingReport> {
    if r == 0 || r > d || n == 0 {
        return Err(Error::DimensionMismatch(format!(
            "need 1 <= r <= d and n >= 1 (d = {d}, r = {r}, n = {n})"
        )));
    }
    if !(moment_cap.is_finite() && moment_cap >= 0.0) {
        return Err(Error::InvalidParameter(format!("moment cap must be finite, got {moment_cap}")));
    }
    let (df, rf, nf) = (d as f64, r as f64, n as f64);
    let coefficient = moment_cap * rf * rf * (df - rf) * df.powi(4) + df.powi(3) + df * df;
    Ok(ScalingReport {
        d,
        r,
        n,
        coefficient,
        bound: coefficient / nf.sqrt(),
        admissible: df < nf.powf(1.0 / 14.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Exponential;

    fn ht() -> HNorms {
        TestFunction::ht().norms
    }

    #[test]
    fn exponential_corollary_matches_reference_value() {
        let b = exponential_corollary_bound(3.0, 100_000, &ht(), true);
        assert!((b - 1.216_068_6).abs() < 1e-6, "{b}");
        let raw = exponential_corollary_bound(3.0, 100_000, &ht(), false);
        assert!(raw > 0.87 + b - 0.01);
    }

    #[test]
    fn exponential_assembly_terms() {
        let b = assemble_bound(
            &Exponential,
            &[3.0],
            100_000,
            1,
            &TestFunction::ht(),
            None,
            &OracleSettings::default(),
        )
        .unwrap();
        assert!(b.certified);
        assert_eq!(b.uncertainty, 0.0);
        assert!((b.total - 1.212_735_4).abs() < 1e-6, "{}", b.total);
        assert!((b.terms.k1 - 0.007_582_4).abs() < 1e-6);
        assert!((b.terms.r - 0.000_706).abs() < 1e-6);
        assert_eq!(b.terms.k1_star, 0.0);
        assert_eq!(b.terms.k2_star, 0.0);
    }

    #[test]
    fn normal_corollary_last_term_only() {
        let norms = HNorms { h: 1.0, h1: 0.0, h2: 0.0 };
        let b = normal_corollary_bound(1.0, 1000, &norms).unwrap();
        assert!((b - 40.0 / 1000.0).abs() < 1e-15);
    }

    #[test]
    fn logistic_scaling_simple_null_drops_leading_term() {
        let s = logistic_bound_scaling(4, 4, 10_000, 1.0).unwrap();
        assert_eq!(s.coefficient, 64.0 + 16.0);
    }
}
