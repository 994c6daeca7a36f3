//! Versioned JSON documents for fitted models, plus atomic file writes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::center_outward::{self, CenterOutwardModel};
use crate::combine::{CombinerSpec, DetectorFamily, EcdfModel, VoteModel};
use crate::copula::{self, CopulaModel};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::score_data::ScoreMatrix;

/// Schema version stamped into every JSON artifact this crate writes.
pub const SCHEMA_VERSION: u32 = 1;

/// A fitted combiner as a concrete, serializable value. The trait-object
/// route through [`CombinerSpec::fit`] is for callers that only query;
/// this enum is for callers that also persist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedModel<T> {
    Vote(VoteModel<T>),
    Ecdf(EcdfModel<T>),
    Copula(CopulaModel<T>),
    CenterOutward(CenterOutwardModel<T>),
}

impl<T: Real> FittedModel<T> {
    /// Fits the combiner `spec` describes, keeping the concrete type.
    pub fn fit(spec: &CombinerSpec<T>, cal: &ScoreMatrix<T>) -> Result<Self> {
        match spec {
            CombinerSpec::Vote { rule } => Ok(FittedModel::Vote(VoteModel::fit(cal, *rule)?)),
            CombinerSpec::Ecdf => Ok(FittedModel::Ecdf(EcdfModel::fit(cal)?)),
            CombinerSpec::Copula { marginal, family } => Ok(FittedModel::Copula(
                copula::copula_combiner_fit(cal, *marginal, *family)?,
            )),
            CombinerSpec::CenterOutward(params) => Ok(FittedModel::CenterOutward(
                center_outward::center_outward_fit(cal, params)?,
            )),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FittedModel::Vote(_) => "vote",
            FittedModel::Ecdf(_) => "ecdf",
            FittedModel::Copula(_) => "copula",
            FittedModel::CenterOutward(_) => "centerout",
        }
    }

    fn family(&self) -> &dyn DetectorFamily<T> {
        match self {
            FittedModel::Vote(m) => m,
            FittedModel::Ecdf(m) => m,
            FittedModel::Copula(m) => m,
            FittedModel::CenterOutward(m) => m,
        }
    }
}

impl<T: Real> DetectorFamily<T> for FittedModel<T> {
    fn detector_names(&self) -> &[String] {
        self.family().detector_names()
    }

    fn member_at(&self, x: &[T], t: T) -> Result<bool> {
        self.family().member_at(x, t)
    }

    fn level(&self, x: &[T]) -> Result<Option<T>> {
        self.family().level(x)
    }
}

/// On-disk envelope: schema version plus the tagged model payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument<T> {
    pub schema_version: u32,
    pub model: FittedModel<T>,
}

impl<T: Real> ModelDocument<T> {
    pub fn new(model: FittedModel<T>) -> Self {
        ModelDocument {
            schema_version: SCHEMA_VERSION,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ModelDocument<T> = serde_json::from_str(s)?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid(format!(
                "unsupported model schema version {} (this build reads {})",
                doc.schema_version, SCHEMA_VERSION
            )));
        }
        Ok(doc)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Writes `bytes` to `path` atomically: the content lands in a sibling
/// temporary file first and is renamed into place, so readers never observe
/// a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let file_name = path
        .file_name()
        .ok_or_else(|| crate::Error::invalid(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(".tmp");
    let tmp = match dir {
        Some(d) => d.join(&tmp_name),
        None => std::path::PathBuf::from(&tmp_name),
    };
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
