//! `create`: a new module directory that validates and runs as generated.

use std::path::{Path, PathBuf};

use evalkit_core::{ColumnType, FeatureSchema, ModuleKind, OutputSpec, Params};
use serde::Serialize;
use serde_json::{json, Map, Value};

use super::git::git;
use super::manifest::{Example, ImplementationSpec, Manifest, MANIFEST_FILE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScaffoldReport {
    pub id: String,
    pub path: PathBuf,
    pub files: Vec<PathBuf>,
    pub commit: String,
}

/// Module id for a human name: letters, digits, spaces, `_` and `-`, starting
/// with a letter; lowercased with runs of spaces turned into `_`.
pub fn module_id(name: &str) -> Result<String> {
    let ok = name.len() <= 64
        && name.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == ' ' || c == '_' || c == '-');
    if !ok {
        return Err(Error::InvalidName(name.to_string()));
    }
    Ok(name.split_whitespace().collect::<Vec<_>>().join("_").to_ascii_lowercase())
}

fn features(kind: ModuleKind) -> FeatureSchema {
    let cols: &[(&str, ColumnType)] = match kind {
        ModuleKind::Metric => &[("predictions", ColumnType::Int), ("references", ColumnType::Int)],
        ModuleKind::Comparison => &[
            ("predictions_a", ColumnType::Int),
            ("predictions_b", ColumnType::Int),
            ("references", ColumnType::Int),
        ],
        ModuleKind::Measurement => &[("data", ColumnType::Str)],
    };
    FeatureSchema::new(cols.iter().copied()).expect("static schema")
}

fn dummy_row(kind: ModuleKind, i: i64) -> Map<String, Value> {
    let v = match kind {
        ModuleKind::Metric => json!({"predictions": i % 2, "references": 1}),
        ModuleKind::Comparison => json!({"predictions_a": i % 2, "predictions_b": 1, "references": 1}),
        ModuleKind::Measurement => json!({"data": format!("example {i}")}),
    };
    v.as_object().cloned().unwrap()
}

const MODULE_SH: &str = r#"#!/bin/sh
# Stub implementation speaking the evalkit-module/1 line protocol.
#
# stdin:  one handshake object, then one {"row": {...}} object per row,
#         then {"end": true}
# stdout: exactly one line, {"scores": {...}} or {"error": "message"}
#
# The stub reports the number of rows it received as `score`.
rows=0
while IFS= read -r line; do
  case "$line" in
    '{"row":'*) rows=$((rows + 1)) ;;
  esac
done
printf '{"scores": {"score": %s}}\n' "$rows"
"#;

fn card(id: &str, kind: ModuleKind) -> String {
    format!(
        "# {id}

## Description
A {kind} module generated from the evalkit template. Describe what it computes.

## Intended Use
Describe the tasks and data this module is meant for.

## Output Range
`score` is the number of rows received, a non-negative integer. Replace this
with the range of the real output.

## Usage Examples
```sh
evalkit validate .
```

## Limitations and Biases
The stub implementation does not evaluate anything yet.

## Citation
Add a reference for the method, or state that there is none.
"
    )
}

/// Writes manifest, card, stub implementation and test rows to `target`, then
/// commits them to a new git repository there.
pub fn create_scaffold(name: &str, kind: ModuleKind, target: &Path) -> Result<ScaffoldReport> {
    let id = module_id(name)?;
    if target.exists() {
        let empty = target.is_dir()
            && std::fs::read_dir(target)
                .map_err(|e| Error::io(format!("cannot read {}", target.display()), e))?
                .next()
                .is_none();
        if !empty {
            return Err(Error::TargetExists(target.to_path_buf()));
        }
    }
    let io = |p: &Path, e| Error::io(format!("cannot write {}", p.display()), e);
    std::fs::create_dir_all(target.join("tests")).map_err(|e| io(target, e))?;

    let features = features(kind);
    let mut example = Map::new();
    for field in features.fields() {
        let values: Vec<Value> = (0..2).map(|i| dummy_row(kind, i)[&field.name].clone()).collect();
        example.insert(field.name.clone(), Value::Array(values));
    }
    let manifest = Manifest {
        id: id.clone(),
        version: "0.1.0".into(),
        kind,
        card: "README.md".into(),
        features,
        outputs: vec![OutputSpec::scalar("score", Some(true))],
        parameters: Params::new(),
        implementation: ImplementationSpec { builtin: None, command: Some(vec!["sh".into(), "module.sh".into()]) },
        examples: vec![Example { inputs: example }],
    };

    let tests: String = (0..3).map(|i| format!("{}\n", Value::Object(dummy_row(kind, i)))).collect();
    let files = [
        (MANIFEST_FILE, manifest.to_toml()),
        ("README.md", card(&id, kind)),
        ("module.sh", MODULE_SH.to_string()),
        ("tests/smoke.jsonl", tests),
    ];
    let mut written = Vec::new();
    for (rel, content) in &files {
        let p = target.join(rel);
        std::fs::write(&p, content).map_err(|e| io(&p, e))?;
        written.push(PathBuf::from(rel));
    }
    let url = target.display().to_string();
    git(Some(target), &["init", "-q"], &url)?;
    git(Some(target), &["add", "-A"], &url)?;
    git(Some(target), &["commit", "-q", "-m", &format!("Add {id} module scaffold")], &url)?;
    let commit = git(Some(target), &["rev-parse", "HEAD"], &url)?;
    Ok(ScaffoldReport { id, path: target.to_path_buf(), files: written, commit })
}
