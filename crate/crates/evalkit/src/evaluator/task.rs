//! Tasks: which dataset columns are sent to the model, which column holds
//! the reference, and how raw values become metric inputs.

use std::collections::BTreeMap;

use evalkit_core::{Batch, ColumnType, FeatureSchema};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "text-classification")]
    TextClassification,
    /// Per-token tags, scored on the flattened tag sequence.
    #[serde(rename = "token-classification")]
    TokenClassification,
    #[serde(rename = "question-answering-extractive")]
    QuestionAnsweringExtractive,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] =
        [TaskKind::TextClassification, TaskKind::TokenClassification, TaskKind::QuestionAnsweringExtractive];

    pub fn id(self) -> &'static str {
        match self {
            TaskKind::TextClassification => "text-classification",
            TaskKind::TokenClassification => "token-classification",
            TaskKind::QuestionAnsweringExtractive => "question-answering-extractive",
        }
    }

    pub fn parse(id: &str) -> Result<TaskKind> {
        TaskKind::ALL.into_iter().find(|k| k.id() == id).ok_or_else(|| Error::UnknownTask(id.to_string()))
    }

    /// Column types of the metric inputs this task produces.
    pub fn metric_schema(self) -> FeatureSchema {
        let ty = match self {
            TaskKind::QuestionAnsweringExtractive => ColumnType::Str,
            _ => ColumnType::Int,
        };
        FeatureSchema::new([("predictions", ty), ("references", ty)]).expect("static schema")
    }
}

/// A postprocessed prediction or reference for one example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Label(i64),
    Tags(Vec<i64>),
    Text(String),
}

impl Target {
    pub fn to_json(&self) -> Value {
        match self {
            Target::Label(l) => Value::from(*l),
            Target::Tags(t) => Value::from(t.clone()),
            Target::Text(s) => Value::from(s.as_str()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub input_columns: Vec<String>,
    pub reference_column: String,
    /// Label string to class id. Built from the sorted distinct reference
    /// strings when absent and references are strings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_map: Option<BTreeMap<String, i64>>,
    pub default_metrics: Vec<String>,
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

impl TaskSpec {
    pub fn new(kind: TaskKind) -> TaskSpec {
        let (inputs, reference, metrics): (&[&str], &str, &[&str]) = match kind {
            TaskKind::TextClassification => (&["text"], "label", &["accuracy"]),
            TaskKind::TokenClassification => (&["tokens"], "tags", &["accuracy"]),
            TaskKind::QuestionAnsweringExtractive => (&["question", "context"], "answers", &["exact_match"]),
        };
        TaskSpec {
            kind,
            input_columns: strings(inputs),
            reference_column: reference.to_string(),
            label_map: None,
            default_metrics: strings(metrics),
        }
    }

    pub fn by_id(id: &str) -> Result<TaskSpec> {
        Ok(TaskSpec::new(TaskKind::parse(id)?))
    }

    pub fn with_input_columns(mut self, cols: &[&str]) -> Self {
        self.input_columns = strings(cols);
        self
    }

    pub fn with_reference_column(mut self, col: &str) -> Self {
        self.reference_column = col.to_string();
        self
    }

    pub fn with_label_map(mut self, map: BTreeMap<String, i64>) -> Self {
        self.label_map = Some(map);
        self
    }

    /// The request payload for one dataset row.
    pub fn preprocess(&self, row: &Map<String, Value>) -> Value {
        Value::Object(self.input_columns.iter().map(|c| (c.clone(), row[c].clone())).collect())
    }

    fn required_columns(&self) -> Vec<&str> {
        self.input_columns.iter().chain([&self.reference_column]).map(String::as_str).collect()
    }

    /// Checks columns and resolves the label map, returning the task ready to run
    /// together with the postprocessed references.
    pub fn bind(&self, data: &Dataset) -> Result<(TaskSpec, Vec<Target>)> {
        data.require_columns(&self.required_columns())?;
        let mut task = self.clone();
        if task.label_map.is_none() && task.kind != TaskKind::QuestionAnsweringExtractive {
            let mut labels = std::collections::BTreeSet::new();
            for row in &data.rows {
                collect_label_strings(&row[&task.reference_column], &mut labels);
            }
            if !labels.is_empty() {
                task.label_map = Some(labels.into_iter().zip(0..).collect());
            }
        }
        let refs = data
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| task.reference(&row[&task.reference_column]).map_err(|e| data.row_error(i, e)))
            .collect::<Result<Vec<_>>>()?;
        Ok((task, refs))
    }

    fn label(&self, v: &Value, strict: bool) -> std::result::Result<i64, String> {
        if let Some(i) = v.as_i64() {
            return Ok(i);
        }
        let Some(s) = v.as_str() else {
            return Err(format!("expected an integer label or label string, found {v}"));
        };
        match self.label_map.as_ref().and_then(|m| m.get(s)) {
            Some(&id) => Ok(id),
            // A predicted label outside the map can never match a reference.
            None if !strict && self.label_map.is_some() => Ok(-1),
            None if self.label_map.is_some() => Err(format!("label `{s}` is not in the label map")),
            None => Err(format!("label `{s}` is a string but the references are integers")),
        }
    }

    fn tags(&self, v: &Value, strict: bool) -> std::result::Result<Vec<i64>, String> {
        v.as_array()
            .ok_or_else(|| format!("expected an array of tags, found {v}"))?
            .iter()
            .map(|t| self.label(t, strict))
            .collect()
    }

    fn text(v: &Value) -> std::result::Result<String, String> {
        match v {
            Value::String(s) => Ok(s.clone()),
            Value::Array(a) => a.first().map(Self::text).unwrap_or_else(|| Err("empty answer list".into())),
            Value::Object(o) => o
                .get("text")
                .or_else(|| o.get("answer"))
                .map(Self::text)
                .unwrap_or_else(|| Err("answer object lacks `text`".into())),
            other => Err(format!("expected answer text, found {other}")),
        }
    }

    /// Reference value for metric input. For extractive QA the first answer counts.
    pub fn reference(&self, v: &Value) -> std::result::Result<Target, String> {
        Ok(match self.kind {
            TaskKind::TextClassification => Target::Label(self.label(v, true)?),
            TaskKind::TokenClassification => Target::Tags(self.tags(v, true)?),
            TaskKind::QuestionAnsweringExtractive => Target::Text(Self::text(v)?),
        })
    }

    /// Model output for metric input; `reference` fixes the expected tag count.
    pub fn postprocess(&self, v: &Value, reference: &Target) -> std::result::Result<Target, String> {
        Ok(match self.kind {
            TaskKind::TextClassification => Target::Label(self.label(v, false)?),
            TaskKind::TokenClassification => {
                let tags = self.tags(v, false)?;
                if let Target::Tags(r) = reference {
                    if r.len() != tags.len() {
                        return Err(format!("{} tags predicted for {} tokens", tags.len(), r.len()));
                    }
                }
                Target::Tags(tags)
            }
            TaskKind::QuestionAnsweringExtractive => Target::Text(Self::text(v)?),
        })
    }

    /// Parses a value written by [`Target::to_json`].
    pub fn target_from_json(&self, v: &Value) -> std::result::Result<Target, String> {
        let int = |x: &Value| x.as_i64().ok_or_else(|| format!("expected an integer, found {x}"));
        Ok(match self.kind {
            TaskKind::TextClassification => Target::Label(int(v)?),
            TaskKind::TokenClassification => Target::Tags(
                v.as_array().ok_or_else(|| format!("expected an array, found {v}"))?.iter().map(int).collect::<std::result::Result<_, _>>()?,
            ),
            TaskKind::QuestionAnsweringExtractive => {
                Target::Text(v.as_str().ok_or_else(|| format!("expected a string, found {v}"))?.to_string())
            }
        })
    }
}

fn collect_label_strings(v: &Value, out: &mut std::collections::BTreeSet<String>) {
    match v {
        Value::String(s) => {
            out.insert(s.clone());
        }
        Value::Array(a) => a.iter().for_each(|x| collect_label_strings(x, out)),
        _ => {}
    }
}

/// Metric input batch for the examples at `indices` (tags are flattened).
pub fn metric_batch(preds: &[Target], refs: &[Target], indices: &[usize]) -> Batch {
    let mut p_int = Vec::new();
    let mut r_int = Vec::new();
    let mut p_txt = Vec::new();
    let mut r_txt = Vec::new();
    for &i in indices {
        match (&preds[i], &refs[i]) {
            (Target::Label(p), Target::Label(r)) => {
                p_int.push(*p);
                r_int.push(*r);
            }
            (Target::Tags(p), Target::Tags(r)) => {
                p_int.extend_from_slice(p);
                r_int.extend_from_slice(r);
            }
            (Target::Text(p), Target::Text(r)) => {
                p_txt.push(p.clone());
                r_txt.push(r.clone());
            }
            _ => unreachable!("prediction and reference targets come from the same task"),
        }
    }
    if !p_txt.is_empty() {
        Batch::new().with("predictions", p_txt).with("references", r_txt)
    } else {
        Batch::new().with("predictions", p_int).with("references", r_int)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn dataset(rows: Vec<Value>) -> Dataset {
        let rows: Vec<Map<String, Value>> = rows.into_iter().map(|r| r.as_object().unwrap().clone()).collect();
        Dataset {
            reference: super::super::dataset::DatasetRef { path: "mem".into(), sha256: String::new(), n_rows: rows.len() },
            lines: (1..=rows.len()).collect(),
            rows,
        }
    }

    #[test]
    fn string_labels_get_sorted_ids() {
        let ds = dataset(vec![json!({"text": "a", "label": "pos"}), json!({"text": "b", "label": "neg"})]);
        let (task, refs) = TaskSpec::new(TaskKind::TextClassification).bind(&ds).unwrap();
        assert_eq!(task.label_map.as_ref().unwrap()["neg"], 0);
        assert_eq!(refs, [Target::Label(1), Target::Label(0)]);
        assert_eq!(task.postprocess(&json!("pos"), &refs[0]).unwrap(), Target::Label(1));
        assert_eq!(task.postprocess(&json!("other"), &refs[0]).unwrap(), Target::Label(-1));
        assert!(task.postprocess(&json!(1.5), &refs[0]).is_err());
    }

    #[test]
    fn integer_labels_reject_string_predictions() {
        let ds = dataset(vec![json!({"text": "a", "label": 1})]);
        let (task, refs) = TaskSpec::new(TaskKind::TextClassification).bind(&ds).unwrap();
        assert!(task.label_map.is_none());
        assert!(task.postprocess(&json!("1"), &refs[0]).is_err());
    }

    #[test]
    fn missing_column_is_a_parse_error() {
        let ds = dataset(vec![json!({"text": "a", "label": 1}), json!({"label": 0})]);
        assert!(matches!(
            TaskSpec::new(TaskKind::TextClassification).bind(&ds),
            Err(Error::DatasetParse { line: 2, .. })
        ));
    }

    #[test]
    fn token_tags_flatten_and_check_length() {
        let ds = dataset(vec![
            json!({"tokens": ["a", "b"], "tags": ["O", "B"]}),
            json!({"tokens": ["c"], "tags": ["O"]}),
        ]);
        let (task, refs) = TaskSpec::new(TaskKind::TokenClassification).bind(&ds).unwrap();
        let preds = vec![
            task.postprocess(&json!(["O", "O"]), &refs[0]).unwrap(),
            task.postprocess(&json!(["O"]), &refs[1]).unwrap(),
        ];
        let b = metric_batch(&preds, &refs, &[0, 1]);
        assert_eq!(b.ints("references").unwrap(), &[1, 0, 1]);
        assert_eq!(b.ints("predictions").unwrap(), &[1, 1, 1]);
        assert!(task.postprocess(&json!(["O"]), &refs[0]).is_err());
    }

    #[test]
    fn qa_answers() {
        let task = TaskSpec::new(TaskKind::QuestionAnsweringExtractive);
        assert_eq!(task.reference(&json!({"text": ["Paris", "paris"], "answer_start": [0, 5]})).unwrap(), Target::Text("Paris".into()));
        assert_eq!(task.reference(&json!(["x"])).unwrap(), Target::Text("x".into()));
        assert_eq!(task.postprocess(&json!({"answer": "y"}), &Target::Text("x".into())).unwrap(), Target::Text("y".into()));
        assert_eq!(task.preprocess(json!({"question": "q", "context": "c", "answers": "a"}).as_object().unwrap()), json!({"question": "q", "context": "c"}));
    }

    #[test]
    fn targets_round_trip_through_json() {
        let task = TaskSpec::new(TaskKind::TokenClassification);
        let t = Target::Tags(vec![3, -1]);
        assert_eq!(task.target_from_json(&t.to_json()).unwrap(), t);
        assert_eq!(TaskKind::parse("summarization").unwrap_err().to_string(), "unknown task `summarization`");
    }
}
