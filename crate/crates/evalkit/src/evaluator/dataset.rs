//! Line-delimited JSON datasets: one object per non-blank line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A dataset pinned to its exact content.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRef {
    pub path: PathBuf,
    /// Hex SHA-256 of the file bytes.
    pub sha256: String,
    pub n_rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub reference: DatasetRef,
    pub rows: Vec<Map<String, Value>>,
    /// 1-based file line of each row.
    pub lines: Vec<usize>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(format!("cannot read dataset {}", path.display()), e))?;
    Ok(sha256_hex(&bytes))
}

/// JSON text with object keys sorted at every level; the input to content hashes.
pub fn canonical_json(v: &Value) -> String {
    fn write(v: &Value, out: &mut String) {
        match v {
            Value::Object(m) => {
                let mut keys: Vec<&String> = m.keys().collect();
                keys.sort();
                out.push('{');
                for (i, k) in keys.into_iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push_str(&Value::String(k.clone()).to_string());
                    out.push(':');
                    write(&m[k], out);
                }
                out.push('}');
            }
            Value::Array(a) => {
                out.push('[');
                for (i, x) in a.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    write(x, out);
                }
                out.push(']');
            }
            other => out.push_str(&other.to_string()),
        }
    }
    let mut s = String::new();
    write(v, &mut s);
    s
}

impl Dataset {
    pub fn read(path: &Path) -> Result<Dataset> {
        let bytes =
            std::fs::read(path).map_err(|e| Error::io(format!("cannot read dataset {}", path.display()), e))?;
        let text = std::str::from_utf8(&bytes).map_err(|e| Error::DatasetParse {
            path: path.to_path_buf(),
            line: 0,
            reason: format!("not UTF-8: {e}"),
        })?;
        let mut rows = Vec::new();
        let mut lines = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |reason: String| Error::DatasetParse { path: path.to_path_buf(), line: i + 1, reason };
            match serde_json::from_str::<Value>(line) {
                Ok(Value::Object(o)) => {
                    rows.push(o);
                    lines.push(i + 1);
                }
                Ok(_) => return Err(parse_err("expected a JSON object".into())),
                Err(e) => return Err(parse_err(e.to_string())),
            }
        }
        Ok(Dataset {
            reference: DatasetRef { path: path.to_path_buf(), sha256: sha256_hex(&bytes), n_rows: rows.len() },
            rows,
            lines,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Error for row `index` pointing at its file line.
    pub fn row_error(&self, index: usize, reason: impl Into<String>) -> Error {
        Error::DatasetParse {
            path: self.reference.path.clone(),
            line: self.lines.get(index).copied().unwrap_or(0),
            reason: reason.into(),
        }
    }

    /// Every row must carry every column in `columns`.
    pub fn require_columns(&self, columns: &[&str]) -> Result<()> {
        for (i, row) in self.rows.iter().enumerate() {
            if let Some(missing) = columns.iter().find(|c| !row.contains_key(**c)) {
                return Err(self.row_error(i, format!("missing column `{missing}`")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn reads_rows_and_hash() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("x.jsonl");
        std::fs::write(&p, "{\"a\": 1}\n\n{\"a\": 2}\n").unwrap();
        let ds = Dataset::read(&p).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.lines, [1, 3]);
        assert_eq!(ds.reference.sha256, file_sha256(&p).unwrap());
        assert_eq!(ds.reference.sha256.len(), 64);
        assert!(ds.require_columns(&["a"]).is_ok());
        match ds.require_columns(&["b"]) {
            Err(Error::DatasetParse { line: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_lines_report_position() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("x.jsonl");
        std::fs::write(&p, "{\"a\": 1}\n[1]\n").unwrap();
        assert!(matches!(Dataset::read(&p), Err(Error::DatasetParse { line: 2, .. })));
        std::fs::write(&p, "{\"a\": \n").unwrap();
        assert!(matches!(Dataset::read(&p), Err(Error::DatasetParse { line: 1, .. })));
    }

    #[test]
    fn canonical_json_sorts_keys() {
        let v = json!({"b": [1, {"z": 1, "a": "x"}], "a": null});
        assert_eq!(canonical_json(&v), r#"{"a":null,"b":[1,{"a":"x","z":1}]}"#);
    }
}
