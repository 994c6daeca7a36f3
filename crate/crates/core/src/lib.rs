//! Combine per-detector out-of-distribution scores into multi-dimensional
//! detectors.
//!
//! Each sample is described by a vector of precomputed detector scores where
//! higher values mean "more anomalous". A fitted combiner turns those vectors
//! into a one-parameter family of decision regions `A_t` that shrink as `t`
//! grows, which is what the ROC-style metrics in [`metrics`] consume.
//!
//! Four combiners are provided:
//!
//! * [`combine::VoteModel`]: per-coordinate thresholds plus a vote rule,
//! * [`combine::EcdfModel`]: the empirical multivariate CDF of calibration scores,
//! * [`copula::CopulaModel`]: parametric copulas over fitted marginals,
//! * [`center_outward::CenterOutwardModel`]: center-outward quantiles obtained
//!   through entropic optimal transport.
//!
//! [`search`] layers subset-selection strategies (exhaustive pairs,
//! sensitivity analysis, beam search) and proxy-based selection on top of the
//! combiners, and [`synth`] generates reproducible Gaussian score sets along
//! with the brute-force oracles used by the test suite.
//!
//! All numeric code is generic over [`Real`], implemented for `f32` and
//! `f64`. The `*64` aliases at the crate root fix the scalar to `f64`, which
//! is what the command line front end uses.

pub mod center_outward;
pub mod combine;
pub mod copula;
pub mod error;
pub mod mat;
pub mod metrics;
pub mod model_doc;
pub mod rng;
pub mod scalar;
pub mod score_data;
pub mod search;
pub mod special;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Real;

pub type ScoreMatrix64 = score_data::ScoreMatrix<f64>;
pub type SplitSpec64 = score_data::SplitSpec<f64>;
pub type RocCurve64 = metrics::RocCurve<f64>;
pub type VoteModel64 = combine::VoteModel<f64>;
pub type EcdfModel64 = combine::EcdfModel<f64>;
pub type CopulaModel64 = copula::CopulaModel<f64>;
pub type CenterOutwardModel64 = center_outward::CenterOutwardModel<f64>;
pub type CombinerSpec64 = combine::CombinerSpec<f64>;
