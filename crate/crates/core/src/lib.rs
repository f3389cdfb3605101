//! Explicit bounds on `|E h(-2 log Lambda) - E h(chisq_r)|` for likelihood
//! ratio tests under i.i.d. sampling, together with the moment machinery,
//! built-in models and a Monte Carlo harness used to check them.

// NaN-rejecting checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod bound;
pub mod error;
pub mod fisher;
pub mod mc;
pub mod model;
pub mod models;
pub mod moments;
pub mod quadrature;
pub mod seed;

pub use error::{Error, Result};
pub use fisher::{partition_fisher, quadratic_form_g, FisherBlocks};
pub use model::{
    validate_model, validate_test_function, Dataset, Fit, GridSpec, HNorms, MomentOracle,
    MomentTable, OracleSettings, ParametricModel, QTMomentSet, TestFunction, Theta, WMomentSet,
};
pub use moments::{MomentSource, MomentValue};
pub use bound::{
    assemble_bound, exponential_corollary_bound, logistic_bound_scaling, normal_corollary_bound,
    BoundBreakdown, BoundMeta, BoundTerms, ScalingReport,
};
pub use mc::{MCEstimate, McOptions, RateSweep, SweepRow};
pub use models::{model_by_id, neg2_log_lambda, Covariates, Exponential, Logistic, LrtResult, Normal};
