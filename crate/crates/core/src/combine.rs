//! Region-family combiners: the shared detector contract plus the two
//! nonparametric combiners (threshold votes and the empirical multivariate
//! CDF).
//!
//! A fitted combiner defines decision regions `A_t` for `t` in `[0, 1]`
//! that are nested downward: `t' >= t` implies `A_{t'}` is a subset of
//! `A_t`. A sample is flagged anomalous at parameter `t` when its score
//! vector lies in `A_t`, and raising any single score never turns an
//! anomalous verdict back into an ID one.

use serde::{Deserialize, Serialize};

use crate::center_outward::{self, CenterOutwardParams};
use crate::copula::{self, CopulaFamily, MarginalFamily};
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::scalar::{lower_quantile, Real};
use crate::score_data::ScoreMatrix;

/// Contract every fitted combiner implements.
///
/// Implementations are immutable after fitting; queries only read.
pub trait DetectorFamily<T: Real>: Send + Sync {
    /// Columns the detector was fitted on, in order.
    fn detector_names(&self) -> &[String];

    /// Is `x` inside the anomaly region `A_t`?
    fn member_at(&self, x: &[T], t: T) -> Result<bool>;

    /// Scalar anomaly level when the family has the form
    /// `A_t = { level(x) > t }`; `None` otherwise.
    fn level(&self, _x: &[T]) -> Result<Option<T>> {
        Ok(None)
    }
}

pub(crate) fn check_vector_len<T: Real>(names: &[String], x: &[T]) -> Result<()> {
    if x.len() != names.len() {
        return Err(Error::invalid(format!(
            "expected a score vector of length {}, got {}",
            names.len(),
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("score vector must be finite"));
    }
    Ok(())
}

fn check_param<T: Real>(t: T) -> Result<()> {
    if !(t >= T::zero() && t <= T::one()) {
        return Err(Error::invalid(format!("family parameter must be in [0, 1], got {t}")));
    }
    Ok(())
}

/// How individual threshold votes are aggregated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteRule {
    /// Every detector must vote anomalous.
    All,
    /// A single vote suffices.
    Any,
    /// At least half of the votes.
    #[default]
    Loose,
    /// Strictly more than half of the votes.
    Strict,
}

impl VoteRule {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(VoteRule::All),
            "any" => Ok(VoteRule::Any),
            "loose" => Ok(VoteRule::Loose),
            "strict" => Ok(VoteRule::Strict),
            other => Err(Error::invalid(format!("unknown vote rule {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            VoteRule::All => "all",
            VoteRule::Any => "any",
            VoteRule::Loose => "loose",
            VoteRule::Strict => "strict",
        }
    }

    /// Decides from the number of anomalous votes among `d` detectors.
    pub fn decide(&self, votes: usize, d: usize) -> bool {
        match self {
            VoteRule::All => votes == d,
            VoteRule::Any => votes >= 1,
            VoteRule::Loose => 2 * votes >= d,
            VoteRule::Strict => 2 * votes > d,
        }
    }
}

/// Per-coordinate threshold voting.
///
/// At parameter `t` each detector compares its score against the lower
/// empirical `t`-quantile of its calibration column, so a calibration
/// fraction of about `1 - t` exceeds the threshold. Regions therefore
/// shrink as `t` grows: `t = 0` flags nearly everything, `t = 1` nearly
/// nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteModel<T> {
    detector_names: Vec<String>,
    /// Calibration columns, each sorted ascending.
    sorted_cal: Vec<Vec<T>>,
    rule: VoteRule,
}

impl<T: Real> VoteModel<T> {
    pub fn fit(cal: &ScoreMatrix<T>, rule: VoteRule) -> Result<Self> {
        let sorted_cal = (0..cal.n_cols())
            .map(|c| {
                let mut col = cal.column(c);
                col.sort_by(|a, b| a.partial_cmp(b).unwrap());
                col
            })
            .collect();
        Ok(VoteModel {
            detector_names: cal.detector_names().to_vec(),
            sorted_cal,
            rule,
        })
    }

    pub fn rule(&self) -> VoteRule {
        self.rule
    }

    /// Individual votes at parameter `t` (strictly above the per-column
    /// threshold).
    pub fn votes(&self, x: &[T], t: T) -> Result<usize> {
        check_vector_len(&self.detector_names, x)?;
        check_param(t)?;
        Ok(self
            .sorted_cal
            .iter()
            .zip(x)
            .filter(|(col, &xi)| xi > lower_quantile(col, t))
            .count())
    }
}

impl<T: Real> DetectorFamily<T> for VoteModel<T> {
    fn detector_names(&self) -> &[String] {
        &self.detector_names
    }

    fn member_at(&self, x: &[T], t: T) -> Result<bool> {
        Ok(self.rule.decide(self.votes(x, t)?, self.detector_names.len()))
    }
}

/// Empirical multivariate CDF combiner: the anomaly level of `x` is the
/// calibration fraction it dominates componentwise (inclusive), and
/// `A_t = { level > t }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcdfModel<T> {
    detector_names: Vec<String>,
    cal: Mat<T>,
}

impl<T: Real> EcdfModel<T> {
    pub fn fit(cal: &ScoreMatrix<T>) -> Result<Self> {
        Ok(EcdfModel {
            detector_names: cal.detector_names().to_vec(),
            cal: cal.values().clone(),
        })
    }

    /// Fraction of calibration rows with every coordinate `<=` the query's.
    pub fn ecdf_level(&self, x: &[T]) -> Result<T> {
        check_vector_len(&self.detector_names, x)?;
        let dominated = self
            .cal
            .iter_rows()
            .filter(|row| row.iter().zip(x).all(|(&c, &q)| c <= q))
            .count();
        Ok(T::from_usize(dominated).unwrap() / T::from_usize(self.cal.rows()).unwrap())
    }
}

impl<T: Real> DetectorFamily<T> for EcdfModel<T> {
    fn detector_names(&self) -> &[String] {
        &self.detector_names
    }

    fn member_at(&self, x: &[T], t: T) -> Result<bool> {
        check_param(t)?;
        Ok(self.ecdf_level(x)? > t)
    }

    fn level(&self, x: &[T]) -> Result<Option<T>> {
        self.ecdf_level(x).map(Some)
    }
}

/// Which combiner to fit, with its hyperparameters. This is what the
/// search strategies and the CLI hand around.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CombinerSpec<T> {
    Vote {
        rule: VoteRule,
    },
    Ecdf,
    Copula {
        marginal: MarginalFamily,
        /// `None` picks Frank for two columns and Independent otherwise.
        family: Option<CopulaFamily>,
    },
    CenterOutward(CenterOutwardParams<T>),
}

impl<T: Real> CombinerSpec<T> {
    pub fn fit(&self, cal: &ScoreMatrix<T>) -> Result<Box<dyn DetectorFamily<T>>> {
        match self {
            CombinerSpec::Vote { rule } => Ok(Box::new(VoteModel::fit(cal, *rule)?)),
            CombinerSpec::Ecdf => Ok(Box::new(EcdfModel::fit(cal)?)),
            CombinerSpec::Copula { marginal, family } => Ok(Box::new(
                copula::copula_combiner_fit(cal, *marginal, *family)?,
            )),
            CombinerSpec::CenterOutward(params) => {
                Ok(Box::new(center_outward::center_outward_fit(cal, params)?))
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CombinerSpec::Vote { .. } => "vote",
            CombinerSpec::Ecdf => "ecdf",
            CombinerSpec::Copula { .. } => "copula",
            CombinerSpec::CenterOutward(_) => "centerout",
        }
    }
}
