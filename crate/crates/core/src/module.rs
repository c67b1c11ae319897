//! The evaluation-module abstraction shared by every kind of module.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::batch::Batch;
use crate::error::{CoreError, CoreResult};
use crate::params::Params;
use crate::result::{OutputSpec, ScoreKind, Scores};
use crate::schema::FeatureSchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModuleKind {
    /// Scores predictions against references.
    Metric,
    /// Compares the predictions of two models on the same references.
    Comparison,
    /// Characterizes a dataset; no references involved.
    Measurement,
}

impl ModuleKind {
    pub fn required_columns(self) -> &'static [&'static str] {
        match self {
            ModuleKind::Metric => &["predictions", "references"],
            ModuleKind::Comparison => &["predictions_a", "predictions_b", "references"],
            ModuleKind::Measurement => &["data"],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModuleKind::Metric => "metric",
            ModuleKind::Comparison => "comparison",
            ModuleKind::Measurement => "measurement",
        }
    }
}

impl fmt::Display for ModuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModuleKind {
    type Err = CoreError;

    fn from_str(s: &str) -> CoreResult<Self> {
        match s {
            "metric" => Ok(ModuleKind::Metric),
            "comparison" => Ok(ModuleKind::Comparison),
            "measurement" => Ok(ModuleKind::Measurement),
            other => Err(CoreError::InvalidParameter {
                name: "kind".to_string(),
                reason: format!("unknown module kind `{other}`"),
            }),
        }
    }
}

/// Static description of a module: identity, inputs, outputs and parameter defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleInfo {
    pub id: String,
    pub version: String,
    pub kind: ModuleKind,
    pub features: FeatureSchema,
    pub outputs: Vec<OutputSpec>,
    #[serde(default)]
    pub parameters: Params,
}

impl ModuleInfo {
    /// Checks the kind's required columns and that output names are unique.
    pub fn check(&self) -> CoreResult<()> {
        // Measurements take `data` only; the other kinds may carry extra columns.
        let required = self.kind.required_columns();
        for col in required {
            if self.features.get(col).is_none() {
                return Err(CoreError::SchemaMismatch(format!(
                    "{} module `{}` must declare column `{col}`",
                    self.kind, self.id
                )));
            }
        }
        if self.kind == ModuleKind::Measurement && self.features.len() != 1 {
            return Err(CoreError::SchemaMismatch(format!(
                "measurement module `{}` must declare exactly one column `data`",
                self.id
            )));
        }
        for (i, out) in self.outputs.iter().enumerate() {
            if self.outputs[..i].iter().any(|o| o.name == out.name) {
                return Err(CoreError::SchemaMismatch(format!(
                    "duplicate output `{}` in module `{}`",
                    out.name, self.id
                )));
            }
        }
        Ok(())
    }

    pub fn output(&self, name: &str) -> Option<&OutputSpec> {
        self.outputs.iter().find(|o| o.name == name)
    }

    /// Name of the first scalar output, used when a single headline number is needed.
    pub fn primary_output(&self) -> Option<&str> {
        self.outputs
            .iter()
            .find(|o| o.kind == ScoreKind::Scalar)
            .map(|o| o.name.as_str())
    }

    /// Verifies that `scores` has exactly the declared outputs, with the
    /// declared shapes, and only finite numbers.
    pub fn check_scores(&self, scores: &Scores) -> CoreResult<()> {
        for out in &self.outputs {
            let value = scores.get(&out.name).ok_or_else(|| {
                CoreError::SchemaMismatch(format!(
                    "module `{}` did not produce output `{}`",
                    self.id, out.name
                ))
            })?;
            if value.kind() != out.kind {
                return Err(CoreError::SchemaMismatch(format!(
                    "output `{}` of module `{}` is {:?}, declared {:?}",
                    out.name,
                    self.id,
                    value.kind(),
                    out.kind
                )));
            }
            if !value.is_finite() {
                return Err(CoreError::SchemaMismatch(format!(
                    "output `{}` of module `{}` is not finite",
                    out.name, self.id
                )));
            }
        }
        if let Some(extra) = scores.keys().find(|k| self.output(k).is_none()) {
            return Err(CoreError::SchemaMismatch(format!(
                "module `{}` produced undeclared output `{extra}`",
                self.id
            )));
        }
        Ok(())
    }
}

/// A scoring function over fully materialized rows.
///
/// `batch` has already been conformed to `info().features` and `params` is the
/// fully resolved parameter set.
pub trait Scorer: Send + Sync {
    fn info(&self) -> ModuleInfo;

    fn score(&self, batch: &Batch, params: &Params) -> CoreResult<Scores>;
}

/// Merges member scores into one map. Keys emitted by more than one member
/// are prefixed with `<module_id>_` for every member that emits them.
pub fn combine_scores(members: &[(&str, &Scores)]) -> Scores {
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for (_, scores) in members {
        for key in scores.keys() {
            *seen.entry(key.as_str()).or_default() += 1;
        }
    }
    let mut out = Scores::new();
    for (id, scores) in members {
        for (key, value) in scores.iter() {
            let name = if seen[key.as_str()] > 1 { format!("{id}_{key}") } else { key.clone() };
            out.insert(name, value.clone());
        }
    }
    out
}

/// Column names and types must agree exactly for modules to be combined.
pub fn check_combinable(infos: &[ModuleInfo]) -> CoreResult<()> {
    let Some(first) = infos.first() else {
        return Err(CoreError::IncompatibleSchemas("nothing to combine".to_string()));
    };
    for info in &infos[1..] {
        if info.features != first.features {
            return Err(CoreError::IncompatibleSchemas(format!(
                "`{}` expects {} but `{}` expects {}",
                first.id, first.features, info.id, info.features
            )));
        }
    }
    let mut ids: Vec<&str> = infos.iter().map(|i| i.id.as_str()).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(CoreError::IncompatibleSchemas("a module is listed twice".to_string()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::result::ScoreValue;

    fn scores(pairs: &[(&str, f64)]) -> Scores {
        pairs.iter().map(|(k, v)| (String::from(*k), ScoreValue::Scalar(*v))).collect()
    }

    #[test]
    fn colliding_keys_are_prefixed() {
        let a = scores(&[("score", 1.0), ("only_a", 2.0)]);
        let b = scores(&[("score", 3.0)]);
        let merged = combine_scores(&[("a", &a), ("b", &b)]);
        let keys: Vec<&str> = merged.keys().map(String::as_str).collect();
        assert_eq!(keys, ["a_score", "b_score", "only_a"]);
        assert_eq!(merged["b_score"], ScoreValue::Scalar(3.0));
    }

    #[test]
    fn disjoint_keys_pass_through() {
        let a = scores(&[("accuracy", 0.5)]);
        let b = scores(&[("f1", 0.75)]);
        let merged = combine_scores(&[("accuracy", &a), ("f1", &b)]);
        assert_eq!(merged.len(), 2);
        assert!(merged.contains_key("accuracy") && merged.contains_key("f1"));
    }

    #[test]
    fn kinds_parse() {
        assert_eq!("comparison".parse::<ModuleKind>().unwrap(), ModuleKind::Comparison);
        assert!("widget".parse::<ModuleKind>().is_err());
    }
}
