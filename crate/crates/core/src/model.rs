//! The model contract, datasets, test functions and the moment sets that feed
//! the bound engine.
//!
//! A [`ParametricModel`] supplies per-observation log-density derivatives,
//! the Fisher information, maximum likelihood fits, a sampler, dominating
//! functions for third derivatives and a moment oracle. Model authors are
//! responsible for the regularity conditions the bound assumes (identifiable
//! densities, three continuous derivatives, finite conditional moments of the
//! dominating functions, finite fifth absolute score moments); only the
//! score-mean-zero and information identities are spot-checked here.

use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fisher::FisherBlocks;
use crate::moments::{MomentSource, MomentValue};
use crate::seed::replicate_seed;

/// A parameter vector with the number of tested leading coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theta {
    pub values: Vec<f64>,
    pub r: usize,
}

impl Theta {
    pub fn new(values: Vec<f64>, r: usize) -> Result<Self> {
        if values.is_empty() || r > values.len() {
            return Err(Error::InvalidParameter(format!(
                "theta needs d >= 1 and 0 <= r <= d (d = {}, r = {r})",
                values.len()
            )));
        }
        Ok(Self { values, r })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// `n` observations of fixed arity `t`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    arity: usize,
    values: Vec<f64>,
}

impl Dataset {
    pub fn new(arity: usize, values: Vec<f64>) -> Result<Self> {
        if arity == 0 || values.is_empty() || !values.len().is_multiple_of(arity) {
            return Err(Error::InvalidData(format!(
                "{} values do not form a nonempty set of records of arity {arity}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite observation".into()));
        }
        Ok(Self { arity, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let arity = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != arity) {
            return Err(Error::InvalidData("records have differing arity".into()));
        }
        Self::new(arity, rows.concat())
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn n(&self) -> usize {
        self.values.len() / self.arity
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.arity..(i + 1) * self.arity]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.arity)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// One observation per line, comma separated.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for row in self.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// Reads comma-separated records; blank lines and `#` comments are skipped.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::InvalidData(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::InvalidData(format!("line {}: {e}", lineno + 1)))?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }
}

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Declared sup-norm bounds `(||h||, ||h'||, ||h''||)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HNorms {
    pub h: f64,
    pub h1: f64,
    pub h2: f64,
}

/// A bounded test function with two bounded derivatives and declared norms.
///
/// The declared norms, not sampled sups, enter the bound formulas.
#[derive(Clone)]
pub struct TestFunction {
    pub name: String,
    h: RealFn,
    h1: RealFn,
    h2: RealFn,
    pub norms: HNorms,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("name", &self.name)
            .field("norms", &self.norms)
            .finish()
    }
}

impl TestFunction {
    pub fn new<H, H1, H2>(name: &str, h: H, h1: H1, h2: H2, norms: HNorms) -> Result<Self>
    where
        H: Fn(f64) -> f64 + Send + Sync + 'static,
        H1: Fn(f64) -> f64 + Send + Sync + 'static,
        H2: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if [norms.h, norms.h1, norms.h2].iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "declared norms must be finite and nonnegative: {norms:?}"
            )));
        }
        Ok(Self {
            name: name.to_string(),
            h: Arc::new(h),
            h1: Arc::new(h1),
            h2: Arc::new(h2),
            norms,
        })
    }

    /// `h(x) = 1 / (x^2 + 2)` with norms `(1/2, 3 sqrt(1.5) / 16, 1/2)`.
    pub fn ht() -> Self {
        Self::new(
            "ht",
            |x| 1.0 / (x * x + 2.0),
            |x| -2.0 * x / (x * x + 2.0).powi(2),
            |x| (6.0 * x * x - 4.0) / (x * x + 2.0).powi(3),
            HNorms {
                h: 0.5,
                h1: 3.0 * 1.5f64.sqrt() / 16.0,
                h2: 0.5,
            },
        )
        .expect("valid norms")
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn constant(c: f64) -> Self {
        Self::new(
            "constant",
            move |_| c,
            |_| 0.0,
            |_| 0.0,
            HNorms {
                h: c.abs(),
                h1: 0.0,
                h2: 0.0,
            },
        )
        .expect("valid norms")
    }

    /// Piecewise-linear interpolation of tabulated `(x, h, h', h'')` rows,
    /// held constant outside the table.
    pub fn tabulated(name: &str, table: Vec<[f64; 4]>, norms: HNorms) -> Result<Self> {
        if table.len() < 2 || table.windows(2).any(|w| !(w[1][0] > w[0][0])) {
            return Err(Error::InvalidParameter(
                "tabulated h needs at least two rows with increasing x".into(),
            ));
        }
        let table = Arc::new(table);
        let column = |col: usize| {
            let t = Arc::clone(&table);
            move |x: f64| interpolate(&t, col, x)
        };
        Self::new(name, column(1), column(2), column(3), norms)
    }

    /// Reads a table file: `norm_h=`, `norm_h1=`, `norm_h2=` header lines
    /// followed by `x,h,h1,h2` rows.
    pub fn read_table<R: BufRead>(name: &str, input: R) -> Result<Self> {
        let (mut nh, mut nh1, mut nh2) = (None, None, None);
        let mut rows = Vec::new();
        for line in input.lines() {
            let line = line.map_err(|e| Error::Config(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some((key, value)) = line.split_once('=') {
                let v: f64 = value
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad norm value `{value}`")))?;
                match key.trim() {
                    "norm_h" => nh = Some(v),
                    "norm_h1" => nh1 = Some(v),
                    "norm_h2" => nh2 = Some(v),
                    other => return Err(Error::Config(format!("unknown key `{other}`"))),
                }
                continue;
            }
            let f: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("bad table row `{line}`: {e}")))?;
            if f.len() != 4 {
                return Err(Error::Config(format!("table row needs 4 columns: `{line}`")));
            }
            rows.push([f[0], f[1], f[2], f[3]]);
        }
        let norms = match (nh, nh1, nh2) {
            (Some(h), Some(h1), Some(h2)) => HNorms { h, h1, h2 },
            _ => return Err(Error::Config("table must declare norm_h, norm_h1 and norm_h2".into())),
        };
        Self::tabulated(name, rows, norms)
    }

    pub fn h(&self, x: f64) -> f64 {
        (self.h)(x)
    }

    pub fn h1(&self, x: f64) -> f64 {
        (self.h1)(x)
    }

    pub fn h2(&self, x: f64) -> f64 {
        (self.h2)(x)
    }

    /// Same evaluators with every declared norm multiplied by `factor`.
    pub fn with_scaled_norms(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.norms = HNorms {
            h: self.norms.h * factor,
            h1: self.norms.h1 * factor,
            h2: self.norms.h2 * factor,
        };
        out
    }
}

fn interpolate(table: &[[f64; 4]], col: usize, x: f64) -> f64 {
    let first = table[0];
    let last = table[table.len() - 1];
    if x <= first[0] {
        return first[col];
    }
    if x >= last[0] {
        return last[col];
    }
    let idx = table.partition_point(|row| row[0] <= x);
    let (lo, hi) = (table[idx - 1], table[idx]);
    let w = (x - lo[0]) / (hi[0] - lo[0]);
    lo[col] + w * (hi[col] - lo[col])
}

/// Uniform validation grid on `[0, x_max]`.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub x_max: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            x_max: 100.0,
            points: 100_001,
        }
    }
}

/// Sampled sups and the worst excess over a declared norm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestFunctionReport {
    pub sampled: [f64; 3],
    pub argmax: [f64; 3],
    pub passed: bool,
}

const NORM_SLACK: f64 = 1e-9;

pub fn validate_test_function(h: &TestFunction, grid: GridSpec) -> Result<TestFunctionReport> {
    if grid.points < 10_000 || !(grid.x_max > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "validation grid needs >= 10^4 points on [0, x_max > 0], got {} on [0, {}]",
            grid.points, grid.x_max
        )));
    }
    let mut sampled = [0.0f64; 3];
    let mut argmax = [0.0f64; 3];
    for i in 0..grid.points {
        let x = grid.x_max * i as f64 / (grid.points - 1) as f64;
        let vals = [h.h(x), h.h1(x), h.h2(x)];
        for k in 0..3 {
            if !vals[k].is_finite() {
                return Err(Error::NormViolation {
                    norm: NORM_NAMES[k],
                    location: x,
                    sampled: vals[k],
                });
            }
            if vals[k].abs() > sampled[k] {
                sampled[k] = vals[k].abs();
                argmax[k] = x;
            }
        }
    }
    let declared = [h.norms.h, h.norms.h1, h.norms.h2];
    let worst = (0..3)
        .map(|k| (k, sampled[k] - declared[k]))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("three norms");
    if worst.1 > NORM_SLACK {
        let k = worst.0;
        return Err(Error::NormViolation {
            norm: NORM_NAMES[k],
            location: argmax[k],
            sampled: sampled[k],
        });
    }
    Ok(TestFunctionReport {
        sampled,
        argmax,
        passed: true,
    })
}

const NORM_NAMES: [&str; 3] = ["norm_h", "norm_h1", "norm_h2"];

/// Dense moment tensor (row-major over its index tuple).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentTable {
    pub shape: Vec<usize>,
    pub entries: Vec<MomentValue>,
    /// Entries are upper bounds rather than exact moments.
    pub upper_bound: bool,
}

impl MomentTable {
    pub fn from_fn<F: FnMut(&[usize]) -> MomentValue>(shape: &[usize], mut f: F) -> Self {
        let total: usize = shape.iter().product();
        let mut idx = vec![0usize; shape.len()];
        let mut entries = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            for (slot, &dim) in idx.iter_mut().zip(shape.iter()).rev() {
                *slot = rem % dim;
                rem /= dim;
            }
            entries.push(f(&idx));
        }
        Self {
            shape: shape.to_vec(),
            entries,
            upper_bound: false,
        }
    }

    pub fn analytic<F: FnMut(&[usize]) -> f64>(shape: &[usize], mut f: F) -> Self {
        Self::from_fn(shape, |i| MomentValue::analytic(f(i)))
    }

    pub fn as_upper_bound(mut self) -> Self {
        self.upper_bound = true;
        self
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        idx.iter().zip(&self.shape).fold(0, |acc, (&i, &dim)| acc * dim + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.entries[self.offset(idx)].value
    }

    pub fn entry(&self, idx: &[usize]) -> MomentValue {
        self.entries[self.offset(idx)]
    }

    pub fn is_analytic(&self) -> bool {
        self.entries.iter().all(|e| e.source == MomentSource::Analytic)
    }

    fn shifted_up(&self) -> Self {
        let mut out = self.clone();
        for e in &mut out.entries {
            e.value += e.stderr;
        }
        out
    }
}

fn require<'a>(t: &'a Option<MomentTable>, name: &str) -> Result<&'a MomentTable> {
    t.as_ref().ok_or_else(|| Error::MissingMoment(name.to_string()))
}

/// Moments of the MLE error `Q = theta_hat - theta0`, of the centred Hessian
/// `T = hess l(theta0) + n I(theta0)` and conditional moments of the
/// dominating functions given `max_j |Q_j| < eps`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct QTMomentSet {
    pub dim: usize,
    /// `E(Q_j^2)`
    pub sq: Option<MomentTable>,
    /// `E(Q_j^2 Q_k^2)`
    pub eq2: Option<MomentTable>,
    /// `E(Q_j^6)`
    pub eq6: Option<MomentTable>,
    /// `E(Q_j^2 Q_k^2 Q_l^2)`
    pub eq_triple: Option<MomentTable>,
    /// `E(Q_k^2 Q_s^2 Q_j^2 Q_l^2)`
    pub eq_quad: Option<MomentTable>,
    /// `Var(d^2/dtheta_l dtheta_j log f(X_1 | theta0))`
    pub var_hess: Option<MomentTable>,
    /// `E(T_mk^6)`
    pub t6: Option<MomentTable>,
    /// `E(T_kj^4 | max |Q| < eps)`
    pub t4_cond: Option<MomentTable>,
    /// `E(M_jkl^2 | max |Q| < eps)`
    pub m2_cond: Option<MomentTable>,
    /// `E(M_jkl^4 | max |Q| < eps)`
    pub m4_cond: Option<MomentTable>,
}

impl QTMomentSet {
    pub fn tables(&self) -> impl Iterator<Item = (&'static str, &MomentTable)> + '_ {
        [
            ("sq", &self.sq),
            ("eq2", &self.eq2),
            ("eq6", &self.eq6),
            ("eq_triple", &self.eq_triple),
            ("eq_quad", &self.eq_quad),
            ("var_hess", &self.var_hess),
            ("t6", &self.t6),
            ("t4_cond", &self.t4_cond),
            ("m2_cond", &self.m2_cond),
            ("m4_cond", &self.m4_cond),
        ]
        .into_iter()
        .filter_map(|(n, t)| t.as_ref().map(|t| (n, t)))
    }

    pub(crate) fn req<'a>(&self, t: &'a Option<MomentTable>, name: &str) -> Result<&'a MomentTable> {
        require(t, name)
    }

    fn shifted_up(&self) -> Self {
        let s = |t: &Option<MomentTable>| t.as_ref().map(MomentTable::shifted_up);
        Self {
            dim: self.dim,
            sq: s(&self.sq),
            eq2: s(&self.eq2),
            eq6: s(&self.eq6),
            eq_triple: s(&self.eq_triple),
            eq_quad: s(&self.eq_quad),
            var_hess: s(&self.var_hess),
            t6: s(&self.t6),
            t4_cond: s(&self.t4_cond),
            m2_cond: s(&self.m2_cond),
            m4_cond: s(&self.m4_cond),
        }
    }
}

/// Moments of the per-observation score `Y` and of the Gaussian limit.
#[derive(Debug, Clone, Default, Serialize)]
pub struct WMomentSet {
    pub dim: usize,
    /// `E|Y_j|`
    pub abs1: Option<MomentTable>,
    /// `|E(Y_j Y_k)|`
    pub cross2: Option<MomentTable>,
    /// `E|Y_j Y_k Y_l|`
    pub abs3: Option<MomentTable>,
    /// `E|Y_j Y_k Y_l Y_t^2|`
    pub abs5: Option<MomentTable>,
    /// `E(W_t^2)`
    pub w2: Option<MomentTable>,
    /// `E|(I^{-1/2} Z)_s|`
    pub z_abs: Option<MomentTable>,
    /// `E|(I^{-1/2} Z)_s Z_t^2|`
    pub z_sq: Option<MomentTable>,
}

impl WMomentSet {
    pub fn tables(&self) -> impl Iterator<Item = (&'static str, &MomentTable)> + '_ {
        [
            ("abs1", &self.abs1),
            ("cross2", &self.cross2),
            ("abs3", &self.abs3),
            ("abs5", &self.abs5),
            ("w2", &self.w2),
            ("z_abs", &self.z_abs),
            ("z_sq", &self.z_sq),
        ]
        .into_iter()
        .filter_map(|(n, t)| t.as_ref().map(|t| (n, t)))
    }

    pub(crate) fn req<'a>(&self, t: &'a Option<MomentTable>, name: &str) -> Result<&'a MomentTable> {
        require(t, name)
    }

    fn shifted_up(&self) -> Self {
        let s = |t: &Option<MomentTable>| t.as_ref().map(MomentTable::shifted_up);
        Self {
            dim: self.dim,
            abs1: s(&self.abs1),
            cross2: s(&self.cross2),
            abs3: s(&self.abs3),
            abs5: s(&self.abs5),
            w2: s(&self.w2),
            z_abs: s(&self.z_abs),
            z_sq: s(&self.z_sq),
        }
    }
}

/// Everything the bound needs from a model at `(theta0, n, r, eps)`.
#[derive(Debug, Clone, Serialize)]
pub struct MomentOracle {
    pub full: QTMomentSet,
    /// Moments of the restricted fit; `None` for a simple null (`r = d`).
    pub restricted: Option<QTMomentSet>,
    pub w: WMomentSet,
    pub epsilon: f64,
}

impl MomentOracle {
    /// True when every entry is analytic.
    pub fn certified(&self) -> bool {
        let qt = |q: &QTMomentSet| q.tables().all(|(_, t)| t.is_analytic());
        qt(&self.full)
            && self.restricted.as_ref().is_none_or(qt)
            && self.w.tables().all(|(_, t)| t.is_analytic())
    }

    /// Every Monte Carlo entry moved up by one standard error.
    pub fn shifted_up(&self) -> Self {
        Self {
            full: self.full.shifted_up(),
            restricted: self.restricted.as_ref().map(QTMomentSet::shifted_up),
            w: self.w.shifted_up(),
            epsilon: self.epsilon,
        }
    }
}

/// Controls for Monte Carlo moment estimation.
#[derive(Debug, Clone, Copy)]
pub struct OracleSettings {
    /// Simulated datasets used for MLE-based moments.
    pub reps: usize,
    /// Single-observation draws used for score and Hessian moments.
    pub draws: usize,
    pub seed: u64,
    /// Minimum accepted replicates for conditional moments.
    pub min_accepted: usize,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            reps: 10_000,
            draws: 200_000,
            seed: 0x5EED,
            min_accepted: 10_000,
        }
    }
}

/// Result of a maximum likelihood fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fit {
    pub theta: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
}

/// The capability set every model provides.
pub trait ParametricModel: Send + Sync {
    fn id(&self) -> &str;

    /// Parameter dimension `d`.
    fn dim(&self) -> usize;

    /// Observation arity `t`.
    fn arity(&self) -> usize;

    fn validate_theta(&self, theta: &[f64]) -> Result<()>;

    fn validate_data(&self, data: &Dataset) -> Result<()> {
        if data.arity() != self.arity() {
            return Err(Error::InvalidData(format!(
                "model `{}` expects records of arity {}, got {}",
                self.id(),
                self.arity(),
                data.arity()
            )));
        }
        Ok(())
    }

    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64;

    /// Gradient of the log-density in `theta`.
    fn score(&self, x: &[f64], theta: &[f64]) -> DVector<f64>;

    fn hessian(&self, x: &[f64], theta: &[f64]) -> DMatrix<f64>;

    /// Third derivative `d^3 / dtheta_j dtheta_k dtheta_l` of the log-density.
    fn third_derivative(&self, x: &[f64], theta: &[f64], idx: [usize; 3]) -> f64;

    fn fisher_info(&self, theta: &[f64]) -> Result<DMatrix<f64>>;

    fn fisher_is_analytic(&self, _theta: &[f64]) -> bool {
        true
    }

    /// Data-dependent bound on `|d^3 l(theta; x) / dtheta_j dtheta_k dtheta_l|`
    /// (full-sample log-likelihood) over the box `|theta_s - theta0_s| < eps`.
    /// With `restricted = Some(r)` the bound is for the restricted
    /// log-likelihood and `idx` indexes the nuisance coordinates.
    fn dominating(
        &self,
        data: &Dataset,
        theta0: &[f64],
        eps: f64,
        idx: [usize; 3],
        restricted: Option<usize>,
    ) -> f64;

    fn epsilon_default(&self, _theta0: &[f64]) -> Option<f64> {
        None
    }

    /// Deterministic in `seed`.
    fn sample(&self, theta: &[f64], n: usize, seed: u64) -> Dataset;

    /// Maximum likelihood fit. With `pinned = Some(v)` the leading `v.len()`
    /// coordinates are held at `v`.
    fn fit_mle(&self, data: &Dataset, pinned: Option<&[f64]>) -> Result<Fit>;

    fn moment_oracle(
        &self,
        theta0: &[f64],
        n: usize,
        r: usize,
        eps: f64,
        settings: &OracleSettings,
    ) -> Result<MomentOracle>;

    /// Constant `c` multiplying the Stein term. Defaults to `c(U, D)`.
    fn stein_constant(&self, _theta0: &[f64], blocks: &FisherBlocks) -> f64 {
        blocks.c
    }

    fn log_likelihood(&self, data: &Dataset, theta: &[f64]) -> f64 {
        data.rows().map(|x| self.log_density(x, theta)).sum()
    }

    fn score_sum(&self, data: &Dataset, theta: &[f64]) -> DVector<f64> {
        data.rows()
            .fold(DVector::zeros(self.dim()), |acc, x| acc + self.score(x, theta))
    }

    fn hessian_sum(&self, data: &Dataset, theta: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        data.rows()
            .fold(DMatrix::zeros(d, d), |acc, x| acc + self.hessian(x, theta))
    }
}

/// Z-scores from the empirical score-mean and information-identity checks.
#[derive(Debug, Clone, Serialize)]
pub struct ModelReport {
    pub score_z: Vec<f64>,
    pub fisher_z: Vec<Vec<f64>>,
    pub max_abs_z: f64,
    pub passed: bool,
}

const CONTRACT_Z: f64 = 5.0;

/// Checks `E[S(theta0)] = 0` and `E[S S^T] = n I(theta0)` on `reps`
/// simulated datasets of size `n`.
pub fn validate_model(
    model: &dyn ParametricModel,
    theta0: &[f64],
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<ModelReport> {
    if reps < 10_000 {
        return Err(Error::InvalidParameter(format!(
            "model validation needs reps >= 10^4, got {reps}"
        )));
    }
    model.validate_theta(theta0)?;
    let d = model.dim();
    let info = model.fisher_info(theta0)? * n as f64;
    let scores: Vec<DVector<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            let data = model.sample(theta0, n, replicate_seed(seed, i));
            model.score_sum(&data, theta0)
        })
        .collect();

    let repsf = reps as f64;
    let mut score_z = vec![0.0; d];
    for (j, z) in score_z.iter_mut().enumerate() {
        let (mean, se) = mean_and_se(scores.iter().map(|s| s[j]), repsf);
        *z = if se > 0.0 { mean / se } else { 0.0 };
    }
    let mut fisher_z = vec![vec![0.0; d]; d];
    for j in 0..d {
        for k in 0..d {
            let (mean, se) = mean_and_se(scores.iter().map(|s| s[j] * s[k]), repsf);
            let diff = mean - info[(j, k)];
            fisher_z[j][k] = if se > 0.0 {
                diff / se
            } else if diff.abs() < 1e-12 * info[(j, k)].abs().max(1.0) {
                0.0
            } else {
                f64::INFINITY
            };
        }
    }

    if let Some((j, z)) = score_z
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .filter(|(_, z)| z.abs() > CONTRACT_Z)
    {
        return Err(Error::ContractViolation {
            condition: "score mean zero".into(),
            coordinate: format!("{}", j + 1),
            z: *z,
        });
    }
    let mut worst = (0, 0, 0.0f64);
    for (j, row) in fisher_z.iter().enumerate() {
        for (k, &z) in row.iter().enumerate() {
            if z.abs() > worst.2.abs() {
                worst = (j, k, z);
            }
        }
    }
    if worst.2.abs() > CONTRACT_Z {
        return Err(Error::ContractViolation {
            condition: "information identity E[S S^T] = n I".into(),
            coordinate: format!("({}, {})", worst.0 + 1, worst.1 + 1),
            z: worst.2,
        });
    }
    let max_abs_z = score_z
        .iter()
        .chain(fisher_z.iter().flatten())
        .fold(0.0f64, |acc, z| acc.max(z.abs()));
    Ok(ModelReport {
        score_z,
        fisher_z,
        max_abs_z,
        passed: true,
    })
}

/// Sample mean and its standard error.
pub(crate) fn mean_and_se<I: Iterator<Item = f64> + Clone>(values: I, count: f64) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / count;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1.0).max(1.0);
    (mean, (var / count).sqrt())
}
