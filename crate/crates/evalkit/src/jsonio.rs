//! Conversions between JSON values and typed columns.
//!
//! Conversion is strict: an `int` column takes JSON integers only, a `string`
//! column JSON strings only. A `float` column accepts any JSON number.

use evalkit_core::{Batch, Column, ColumnType, FeatureSchema, ScoreValue, Scores};
use serde_json::{Map, Value};

fn describe(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(n) if n.is_i64() || n.is_u64() => "an integer",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

fn int(v: &Value) -> Result<i64, String> {
    v.as_i64().ok_or_else(|| format!("expected an integer, found {}", describe(v)))
}

fn float(v: &Value) -> Result<f64, String> {
    v.as_f64().ok_or_else(|| format!("expected a number, found {}", describe(v)))
}

fn string(v: &Value) -> Result<String, String> {
    v.as_str().map(str::to_string).ok_or_else(|| format!("expected a string, found {}", describe(v)))
}

fn seq<T>(v: &Value, item: impl Fn(&Value) -> Result<T, String>) -> Result<Vec<T>, String> {
    v.as_array()
        .ok_or_else(|| format!("expected an array, found {}", describe(v)))?
        .iter()
        .map(item)
        .collect()
}

/// Builds a column of type `ty` from one JSON value per row.
pub fn column_from_values<'a>(
    ty: ColumnType,
    values: impl IntoIterator<Item = &'a Value>,
) -> Result<Column, (usize, String)> {
    fn collect<'a, T>(
        values: impl IntoIterator<Item = &'a Value>,
        f: impl Fn(&Value) -> Result<T, String>,
    ) -> Result<Vec<T>, (usize, String)> {
        values.into_iter().enumerate().map(|(i, v)| f(v).map_err(|e| (i, e))).collect()
    }
    Ok(match ty {
        ColumnType::Int => Column::Int(collect(values, int)?),
        ColumnType::Float => Column::Float(collect(values, float)?),
        ColumnType::Str => Column::Str(collect(values, string)?),
        ColumnType::StrSeq => Column::StrSeq(collect(values, |v| seq(v, string))?),
        ColumnType::FloatSeq => Column::FloatSeq(collect(values, |v| seq(v, float))?),
    })
}

/// Builds a batch from JSON objects, one per row, taking exactly the schema's columns.
pub fn batch_from_rows(schema: &FeatureSchema, rows: &[Map<String, Value>]) -> Result<Batch, String> {
    let mut batch = Batch::new();
    for field in schema.fields() {
        let mut values = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            values.push(
                row.get(&field.name)
                    .ok_or_else(|| format!("row {i}: missing column `{}`", field.name))?,
            );
        }
        let col = column_from_values(field.ty, values)
            .map_err(|(i, e)| format!("row {i}, column `{}`: {e}", field.name))?;
        batch.push_column(field.name.clone(), col).map_err(|e| e.to_string())?;
    }
    Ok(batch)
}

/// Builds a batch from an object of column arrays, e.g. `{"predictions": [1, 0]}`.
pub fn batch_from_columns(schema: &FeatureSchema, columns: &Map<String, Value>) -> Result<Batch, String> {
    if let Some(extra) = columns.keys().find(|k| schema.get(k).is_none()) {
        return Err(format!("unexpected column `{extra}`"));
    }
    let mut batch = Batch::new();
    for field in schema.fields() {
        let values = columns
            .get(&field.name)
            .ok_or_else(|| format!("missing column `{}`", field.name))?
            .as_array()
            .ok_or_else(|| format!("column `{}` must be an array", field.name))?;
        let col = column_from_values(field.ty, values)
            .map_err(|(i, e)| format!("column `{}` item {i}: {e}", field.name))?;
        batch.push_column(field.name.clone(), col).map_err(|e| e.to_string())?;
    }
    Ok(batch)
}

fn float_json(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

/// The JSON value of row `i` of `col`.
pub fn cell(col: &Column, i: usize) -> Value {
    match col {
        Column::Int(v) => Value::from(v[i]),
        Column::Float(v) => float_json(v[i]),
        Column::Str(v) => Value::from(v[i].as_str()),
        Column::StrSeq(v) => Value::from(v[i].clone()),
        Column::FloatSeq(v) => Value::Array(v[i].iter().copied().map(float_json).collect()),
    }
}

pub fn row_object(batch: &Batch, i: usize) -> Map<String, Value> {
    batch.columns().map(|(n, c)| (n.to_string(), cell(c, i))).collect()
}

pub fn scores_from_json(v: Value) -> Result<Scores, String> {
    serde_json::from_value::<Scores>(v).map_err(|e| format!("invalid scores object: {e}"))
}

pub fn score_json(v: &ScoreValue) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}
