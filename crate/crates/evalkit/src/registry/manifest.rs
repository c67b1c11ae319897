//! The `manifest.toml` file describing a module.
//!
//! ```toml
//! id = "my_metric"              # [a-z0-9_-]+, optionally "<user>/<id>"
//! version = "0.1.0"             # semantic version
//! kind = "metric"               # metric | comparison | measurement
//! card = "README.md"            # path of the module card, relative to the manifest
//!
//! [[features]]                  # input columns, in order
//! name = "predictions"
//! type = "int"                  # int | float | string | string-sequence | float-sequence
//!
//! [[outputs]]                   # declared scores
//! name = "score"
//! kind = "scalar"               # scalar | array | map
//! higher_is_better = true       # optional; required for leaderboard ranking
//!
//! [parameters]                  # defaults; callers may override by name
//! threshold = 0.5
//!
//! [implementation]              # exactly one of:
//! builtin = "accuracy"          #   a built-in scorer, or
//! command = ["sh", "module.sh"] #   an external process run from the module directory
//!
//! [[examples]]                  # optional; each must match `features`
//! inputs = { predictions = [1, 0], references = [1, 1] }
//! ```

use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use evalkit_core::{FeatureSchema, ModuleInfo, ModuleKind, OutputSpec, Params};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub id: String,
    pub version: String,
    pub kind: ModuleKind,
    pub card: String,
    pub features: FeatureSchema,
    pub outputs: Vec<OutputSpec>,
    #[serde(default)]
    pub parameters: Params,
    pub implementation: ImplementationSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub examples: Vec<Example>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImplementationSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Example {
    pub inputs: serde_json::Map<String, serde_json::Value>,
}

impl Manifest {
    pub fn parse(text: &str, path: &Path) -> Result<Manifest> {
        toml::from_str(text).map_err(|e| Error::InvalidManifest {
            path: path.to_path_buf(),
            reason: e.message().to_string(),
        })
    }

    /// Reads `<dir>/manifest.toml`.
    pub fn read_dir(dir: &Path) -> Result<Manifest> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::io(format!("cannot read {}", path.display()), e))?;
        Manifest::parse(&text, &path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn info(&self) -> ModuleInfo {
        ModuleInfo {
            id: self.id.clone(),
            version: self.version.clone(),
            kind: self.kind,
            features: self.features.clone(),
            outputs: self.outputs.clone(),
            parameters: self.parameters.clone(),
        }
    }

    pub fn card_path(&self, dir: &Path) -> PathBuf {
        dir.join(&self.card)
    }
}

/// `[a-z0-9_-]+`, optionally prefixed by one `<user>/` namespace of the same form.
pub fn is_valid_id(id: &str) -> bool {
    let part = |s: &str| {
        !s.is_empty() && s.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'-')
    };
    match id.split_once('/') {
        Some((user, name)) => part(user) && part(name),
        None => part(id),
    }
}

/// A semantic version `MAJOR.MINOR.PATCH[-PRE][+BUILD]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Version {
    pub major: u64,
    pub minor: u64,
    pub patch: u64,
    pub pre: Vec<String>,
}

impl Version {
    pub fn parse(s: &str) -> Option<Version> {
        let (s, build) = match s.split_once('+') {
            Some((v, b)) => (v, Some(b)),
            None => (s, None),
        };
        let ident_ok = |id: &str| !id.is_empty() && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-');
        if let Some(b) = build {
            if !b.split('.').all(ident_ok) {
                return None;
            }
        }
        let (core, pre) = match s.split_once('-') {
            Some((c, p)) => (c, Some(p)),
            None => (s, None),
        };
        let num = |n: &str| {
            if n.is_empty() || !n.bytes().all(|b| b.is_ascii_digit()) || (n.len() > 1 && n.starts_with('0')) {
                None
            } else {
                n.parse::<u64>().ok()
            }
        };
        let mut parts = core.split('.');
        let v = Version {
            major: num(parts.next()?)?,
            minor: num(parts.next()?)?,
            patch: num(parts.next()?)?,
            pre: match pre {
                None => Vec::new(),
                Some(p) => {
                    let ids: Vec<String> = p.split('.').map(str::to_string).collect();
                    let numeric_ok = |id: &str| !id.bytes().all(|b| b.is_ascii_digit()) || num(id).is_some();
                    if !ids.iter().all(|i| ident_ok(i) && numeric_ok(i)) {
                        return None;
                    }
                    ids
                }
            },
        };
        if parts.next().is_some() {
            return None;
        }
        Some(v)
    }
}

impl Ord for Version {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.major, self.minor, self.patch)
            .cmp(&(other.major, other.minor, other.patch))
            .then_with(|| match (self.pre.is_empty(), other.pre.is_empty()) {
                (true, true) => Ordering::Equal,
                (true, false) => Ordering::Greater,
                (false, true) => Ordering::Less,
                (false, false) => {
                    for (a, b) in self.pre.iter().zip(&other.pre) {
                        let ord = match (a.parse::<u64>(), b.parse::<u64>()) {
                            (Ok(x), Ok(y)) => x.cmp(&y),
                            (Ok(_), Err(_)) => Ordering::Less,
                            (Err(_), Ok(_)) => Ordering::Greater,
                            (Err(_), Err(_)) => a.cmp(b),
                        };
                        if ord != Ordering::Equal {
                            return ord;
                        }
                    }
                    self.pre.len().cmp(&other.pre.len())
                }
            })
    }
}

impl PartialOrd for Version {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = r#"
id = "my_metric"
version = "0.1.0"
kind = "metric"
card = "README.md"

[[features]]
name = "predictions"
type = "int"

[[features]]
name = "references"
type = "int"

[[outputs]]
name = "score"
kind = "scalar"
higher_is_better = true

[parameters]
threshold = 0.5

[implementation]
command = ["sh", "module.sh"]

[[examples]]
inputs = { predictions = [1, 0], references = [1, 1] }
"#;

    #[test]
    fn parses_and_round_trips() {
        let m = Manifest::parse(TEXT, Path::new("manifest.toml")).unwrap();
        assert_eq!(m.kind, ModuleKind::Metric);
        assert_eq!(m.features.canonical(), "predictions:int;references:int");
        assert_eq!(m.outputs[0].higher_is_better, Some(true));
        assert_eq!(m.implementation.command.as_deref().unwrap()[1], "module.sh");
        assert_eq!(m.examples[0].inputs["predictions"], serde_json::json!([1, 0]));
        let again = Manifest::parse(&m.to_toml(), Path::new("x")).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = TEXT.replace("card = ", "colour = \"red\"\ncard = ");
        assert!(matches!(Manifest::parse(&text, Path::new("m")), Err(Error::InvalidManifest { .. })));
    }

    #[test]
    fn ids() {
        for ok in ["accuracy", "my-metric_2", "alice/bleu"] {
            assert!(is_valid_id(ok), "{ok}");
        }
        for bad in ["", "Accuracy", "a b", "a/b/c", "/x", "x!"] {
            assert!(!is_valid_id(bad), "{bad}");
        }
    }

    #[test]
    fn versions() {
        for ok in ["0.1.0", "1.0.0-alpha.1", "2.3.4+build.7", "1.0.0-rc-1+x"] {
            assert!(Version::parse(ok).is_some(), "{ok}");
        }
        for bad in ["1.0", "01.0.0", "1.0.0-", "1.0.0-01", "v1.0.0", "1.0.0.0", "1.0.0+"] {
            assert!(Version::parse(bad).is_none(), "{bad}");
        }
        let v = |s| Version::parse(s).unwrap();
        assert!(v("1.0.0-alpha") < v("1.0.0-alpha.1"));
        assert!(v("1.0.0-alpha.1") < v("1.0.0-beta"));
        assert!(v("1.0.0-rc.1") < v("1.0.0"));
        assert!(v("1.0.0") < v("1.0.10"));
        assert_eq!(v("1.2.3+a"), v("1.2.3+b"));
    }
}
