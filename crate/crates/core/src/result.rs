use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::params::Params;

/// A single score: a number, a per-position array or a keyed map of numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScoreValue {
    Scalar(f64),
    Array(Vec<f64>),
    Map(BTreeMap<String, f64>),
}

impl ScoreValue {
    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            ScoreValue::Scalar(v) => Some(*v),
            _ => None,
        }
    }

    pub fn kind(&self) -> ScoreKind {
        match self {
            ScoreValue::Scalar(_) => ScoreKind::Scalar,
            ScoreValue::Array(_) => ScoreKind::Array,
            ScoreValue::Map(_) => ScoreKind::Map,
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            ScoreValue::Scalar(v) => v.is_finite(),
            ScoreValue::Array(v) => v.iter().all(|x| x.is_finite()),
            ScoreValue::Map(m) => m.values().all(|x| x.is_finite()),
        }
    }
}

impl From<f64> for ScoreValue {
    fn from(v: f64) -> Self {
        ScoreValue::Scalar(v)
    }
}

pub type Scores = BTreeMap<String, ScoreValue>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Scalar,
    Array,
    Map,
}

/// One declared output of a module.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputSpec {
    pub name: String,
    pub kind: ScoreKind,
    /// Ranking direction; `None` when the output is not meant for ranking.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub higher_is_better: Option<bool>,
}

impl OutputSpec {
    pub fn scalar(name: &str, higher_is_better: Option<bool>) -> Self {
        OutputSpec { name: name.into(), kind: ScoreKind::Scalar, higher_is_better }
    }

    pub fn array(name: &str) -> Self {
        OutputSpec { name: name.into(), kind: ScoreKind::Array, higher_is_better: None }
    }

    pub fn map(name: &str) -> Self {
        OutputSpec { name: name.into(), kind: ScoreKind::Map, higher_is_better: None }
    }
}

/// Where a module implementation came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// `builtin`, `dir:<path>` or `git:<url>`.
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revision: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleResult {
    pub module_id: String,
    pub module_version: String,
    pub values: Scores,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub parameters_used: Params,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl ModuleResult {
    pub fn scalar(&self, key: &str) -> Option<f64> {
        self.values.get(key).and_then(ScoreValue::as_scalar)
    }
}
