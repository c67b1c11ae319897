//! Module validation: manifest well-formedness, card completeness and
//! consistency of declared examples with the input schema.

use std::path::{Path, PathBuf};

use evalkit_core::{canonical, ModuleInfo};
use serde::Serialize;

use super::card::{check_card, Severity, Violation};
use super::manifest::{is_valid_id, Manifest, Version, MANIFEST_FILE};
use crate::error::{Error, Result};
use crate::jsonio;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub module: String,
    pub path: PathBuf,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn errors(&self) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(|v| v.severity == Severity::Error)
    }

    pub fn has_errors(&self) -> bool {
        self.errors().next().is_some()
    }

    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks a parsed manifest and its card text; `dir` enables checks of files next to the manifest.
pub fn check_module(manifest: &Manifest, card: Option<&str>, dir: Option<&Path>) -> Vec<Violation> {
    let mut v = Vec::new();
    if !is_valid_id(&manifest.id) {
        v.push(Violation::error(
            "manifest.id",
            format!("id `{}` must match [a-z0-9_-]+, optionally as <user>/<id>", manifest.id),
        ));
    }
    if Version::parse(&manifest.version).is_none() {
        v.push(Violation::error(
            "manifest.version",
            format!("version `{}` is not a semantic version", manifest.version),
        ));
    }
    let info = manifest.info();
    if let Err(e) = info.check() {
        v.push(Violation::error("manifest.schema", e.to_string()));
    }
    if manifest.outputs.is_empty() {
        v.push(Violation::error("manifest.outputs", "at least one output must be declared"));
    }
    check_implementation(manifest, &info, dir, &mut v);

    for (i, ex) in manifest.examples.iter().enumerate() {
        match jsonio::batch_from_columns(&manifest.features, &ex.inputs) {
            Ok(b) if b.num_rows() == 0 => {
                v.push(Violation::error("example.schema", format!("example {i} has no rows")))
            }
            Ok(_) => {}
            Err(e) => v.push(Violation::error("example.schema", format!("example {i}: {e}"))),
        }
    }
    if let Some(dir) = dir {
        check_test_files(manifest, dir, &mut v);
    }

    match card {
        Some(text) => {
            let outputs: Vec<&str> = manifest.outputs.iter().map(|o| o.name.as_str()).collect();
            v.extend(check_card(text, &outputs));
        }
        None => v.push(Violation::error(
            "card.missing",
            format!("card file `{}` does not exist", manifest.card),
        )),
    }
    v
}

fn check_implementation(manifest: &Manifest, info: &ModuleInfo, dir: Option<&Path>, v: &mut Vec<Violation>) {
    let imp = &manifest.implementation;
    match (&imp.builtin, &imp.command) {
        (Some(_), Some(_)) | (None, None) => v.push(Violation::error(
            "manifest.implementation",
            "implementation must set exactly one of `builtin` or `command`",
        )),
        (Some(sym), None) => match canonical::lookup(sym) {
            None => v.push(Violation::error(
                "manifest.implementation",
                format!("unknown built-in implementation `{sym}`"),
            )),
            Some(s) => {
                let b = s.info();
                if b.features != info.features || b.outputs != info.outputs || b.kind != info.kind {
                    v.push(Violation::error(
                        "manifest.implementation",
                        format!("built-in `{sym}` has a different kind, schema or outputs than the manifest"),
                    ));
                }
            }
        },
        (None, Some(cmd)) => {
            if cmd.is_empty() || cmd[0].trim().is_empty() {
                v.push(Violation::error("manifest.implementation", "command must be non-empty"));
            } else if let Some(dir) = dir {
                // Relative script arguments should ship with the module.
                for arg in &cmd[1..] {
                    let looks_like_file = arg.ends_with(".sh") || arg.ends_with(".py");
                    if looks_like_file && !Path::new(arg).is_absolute() && !dir.join(arg).exists() {
                        v.push(Violation::error(
                            "manifest.implementation",
                            format!("command refers to `{arg}`, which is missing"),
                        ));
                    }
                }
            }
        }
    }
}

/// Every `tests/*.jsonl` row must carry exactly the declared features.
fn check_test_files(manifest: &Manifest, dir: &Path, v: &mut Vec<Violation>) {
    let Ok(entries) = std::fs::read_dir(dir.join("tests")) else {
        return;
    };
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    for file in files {
        let name = file.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let text = match std::fs::read_to_string(&file) {
            Ok(t) => t,
            Err(e) => {
                v.push(Violation::error("example.unreadable", format!("tests/{name}: {e}")));
                continue;
            }
        };
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let row = match serde_json::from_str::<serde_json::Value>(line) {
                Ok(serde_json::Value::Object(o)) => o,
                _ => {
                    v.push(Violation::error("example.schema", format!("tests/{name}:{}: not a JSON object", i + 1)));
                    continue;
                }
            };
            let extra = row.keys().find(|k| manifest.features.get(k).is_none());
            let result = match extra {
                Some(k) => Err(format!("unexpected column `{k}`")),
                None => jsonio::batch_from_rows(&manifest.features, std::slice::from_ref(&row)).map(|_| ()),
            };
            if let Err(e) = result {
                v.push(Violation::error("example.schema", format!("tests/{name}:{}: {e}", i + 1)));
            }
        }
    }
}

/// Validates the module directory at `path` (or the directory of a manifest file).
pub fn validate(path: &Path) -> Result<ValidationReport> {
    let dir = if path.is_file() { path.parent().unwrap_or(Path::new(".")).to_path_buf() } else { path.to_path_buf() };
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| Error::io(format!("cannot read {}", manifest_path.display()), e))?;
    let manifest = match Manifest::parse(&text, &manifest_path) {
        Ok(m) => m,
        Err(e) => {
            return Ok(ValidationReport {
                module: dir.display().to_string(),
                path: dir,
                violations: vec![Violation::error("manifest.parse", e.to_string())],
            })
        }
    };
    let card = std::fs::read_to_string(manifest.card_path(&dir)).ok();
    let violations = check_module(&manifest, card.as_deref(), Some(&dir));
    Ok(ValidationReport { module: manifest.id.clone(), path: dir, violations })
}
