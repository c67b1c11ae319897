//! Column-oriented row batches.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, CoreResult};
use crate::schema::{ColumnType, FeatureSchema};

/// One typed column of values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "values")]
pub enum Column {
    #[serde(rename = "int")]
    Int(Vec<i64>),
    #[serde(rename = "float")]
    Float(Vec<f64>),
    #[serde(rename = "string")]
    Str(Vec<String>),
    #[serde(rename = "string-sequence")]
    StrSeq(Vec<Vec<String>>),
    #[serde(rename = "float-sequence")]
    FloatSeq(Vec<Vec<f64>>),
}

macro_rules! each_column {
    ($col:expr, $v:ident => $body:expr) => {
        match $col {
            Column::Int($v) => $body,
            Column::Float($v) => $body,
            Column::Str($v) => $body,
            Column::StrSeq($v) => $body,
            Column::FloatSeq($v) => $body,
        }
    };
}

impl Column {
    pub fn empty(ty: ColumnType) -> Self {
        match ty {
            ColumnType::Int => Column::Int(Vec::new()),
            ColumnType::Float => Column::Float(Vec::new()),
            ColumnType::Str => Column::Str(Vec::new()),
            ColumnType::StrSeq => Column::StrSeq(Vec::new()),
            ColumnType::FloatSeq => Column::FloatSeq(Vec::new()),
        }
    }

    pub fn ty(&self) -> ColumnType {
        match self {
            Column::Int(_) => ColumnType::Int,
            Column::Float(_) => ColumnType::Float,
            Column::Str(_) => ColumnType::Str,
            Column::StrSeq(_) => ColumnType::StrSeq,
            Column::FloatSeq(_) => ColumnType::FloatSeq,
        }
    }

    pub fn len(&self) -> usize {
        each_column!(self, v => v.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends `other` to `self`; both must have the same type.
    pub fn extend_from(&mut self, other: &Column) -> CoreResult<()> {
        match (self, other) {
            (Column::Int(a), Column::Int(b)) => a.extend_from_slice(b),
            (Column::Float(a), Column::Float(b)) => a.extend_from_slice(b),
            (Column::Str(a), Column::Str(b)) => a.extend_from_slice(b),
            (Column::StrSeq(a), Column::StrSeq(b)) => a.extend_from_slice(b),
            (Column::FloatSeq(a), Column::FloatSeq(b)) => a.extend_from_slice(b),
            (a, b) => {
                return Err(CoreError::SchemaMismatch(format!(
                    "cannot append {} values to a {} column",
                    b.ty(),
                    a.ty()
                )))
            }
        }
        Ok(())
    }

    /// Moves the values of `other` onto the end of `self`.
    pub fn append_owned(&mut self, other: Column) -> CoreResult<()> {
        match (self, other) {
            (Column::Int(a), Column::Int(mut b)) => a.append(&mut b),
            (Column::Float(a), Column::Float(mut b)) => a.append(&mut b),
            (Column::Str(a), Column::Str(mut b)) => a.append(&mut b),
            (Column::StrSeq(a), Column::StrSeq(mut b)) => a.append(&mut b),
            (Column::FloatSeq(a), Column::FloatSeq(mut b)) => a.append(&mut b),
            (a, b) => {
                return Err(CoreError::SchemaMismatch(format!(
                    "cannot append {} values to a {} column",
                    b.ty(),
                    a.ty()
                )))
            }
        }
        Ok(())
    }

    /// Gathers rows at `indices` (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> Column {
        fn pick<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
            idx.iter().map(|&i| v[i].clone()).collect()
        }
        match self {
            Column::Int(v) => Column::Int(pick(v, indices)),
            Column::Float(v) => Column::Float(pick(v, indices)),
            Column::Str(v) => Column::Str(pick(v, indices)),
            Column::StrSeq(v) => Column::StrSeq(pick(v, indices)),
            Column::FloatSeq(v) => Column::FloatSeq(pick(v, indices)),
        }
    }

    /// Heap bytes held by this column, counting vector capacity.
    pub fn heap_bytes(&self) -> usize {
        use core::mem::size_of;
        match self {
            Column::Int(v) => v.capacity() * size_of::<i64>(),
            Column::Float(v) => v.capacity() * size_of::<f64>(),
            Column::Str(v) => {
                v.capacity() * size_of::<String>() + v.iter().map(String::capacity).sum::<usize>()
            }
            Column::StrSeq(v) => {
                v.capacity() * size_of::<Vec<String>>()
                    + v.iter()
                        .map(|s| {
                            s.capacity() * size_of::<String>()
                                + s.iter().map(String::capacity).sum::<usize>()
                        })
                        .sum::<usize>()
            }
            Column::FloatSeq(v) => {
                v.capacity() * size_of::<Vec<f64>>()
                    + v.iter().map(|s| s.capacity() * size_of::<f64>()).sum::<usize>()
            }
        }
    }

    pub fn as_ints(&self) -> Option<&[i64]> {
        match self {
            Column::Int(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_floats(&self) -> Option<&[f64]> {
        match self {
            Column::Float(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_strs(&self) -> Option<&[String]> {
        match self {
            Column::Str(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_str_seqs(&self) -> Option<&[Vec<String>]> {
        match self {
            Column::StrSeq(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_float_seqs(&self) -> Option<&[Vec<f64>]> {
        match self {
            Column::FloatSeq(v) => Some(v),
            _ => None,
        }
    }
}

impl From<Vec<i64>> for Column {
    fn from(v: Vec<i64>) -> Self {
        Column::Int(v)
    }
}

impl From<Vec<f64>> for Column {
    fn from(v: Vec<f64>) -> Self {
        Column::Float(v)
    }
}

impl From<Vec<String>> for Column {
    fn from(v: Vec<String>) -> Self {
        Column::Str(v)
    }
}

impl From<Vec<&str>> for Column {
    fn from(v: Vec<&str>) -> Self {
        Column::Str(v.into_iter().map(String::from).collect())
    }
}

impl From<Vec<Vec<String>>> for Column {
    fn from(v: Vec<Vec<String>>) -> Self {
        Column::StrSeq(v)
    }
}

impl From<Vec<Vec<f64>>> for Column {
    fn from(v: Vec<Vec<f64>>) -> Self {
        Column::FloatSeq(v)
    }
}

/// A named set of equally long columns.
///
/// Column order is insertion order until the batch is conformed to a schema,
/// after which it follows the schema.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    columns: Vec<(String, Column)>,
}

impl Batch {
    pub fn new() -> Self {
        Batch::default()
    }

    /// Empty batch with one zero-length column per schema field.
    pub fn empty(schema: &FeatureSchema) -> Self {
        Batch {
            columns: schema
                .fields()
                .iter()
                .map(|f| (f.name.clone(), Column::empty(f.ty)))
                .collect(),
        }
    }

    /// Builds a batch, rejecting duplicate names and unequal column lengths.
    pub fn from_columns<I, S>(columns: I) -> CoreResult<Self>
    where
        I: IntoIterator<Item = (S, Column)>,
        S: Into<String>,
    {
        let mut batch = Batch::new();
        for (name, col) in columns {
            batch.push_column(name, col)?;
        }
        Ok(batch)
    }

    pub fn push_column(&mut self, name: impl Into<String>, column: Column) -> CoreResult<()> {
        let name = name.into();
        if self.columns.iter().any(|(n, _)| *n == name) {
            return Err(CoreError::SchemaMismatch(format!("duplicate column `{name}`")));
        }
        if let Some((_, first)) = self.columns.first() {
            if first.len() != column.len() {
                return Err(CoreError::RaggedBatch {
                    column: name,
                    expected: first.len(),
                    found: column.len(),
                });
            }
        }
        self.columns.push((name, column));
        Ok(())
    }

    /// Builder-style [`Batch::push_column`]; panics on a ragged or duplicate column.
    pub fn with(mut self, name: impl Into<String>, column: impl Into<Column>) -> Self {
        self.push_column(name, column.into()).expect("invalid column");
        self
    }

    pub fn num_rows(&self) -> usize {
        self.columns.first().map_or(0, |(_, c)| c.len())
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> impl Iterator<Item = (&str, &Column)> {
        self.columns.iter().map(|(n, c)| (n.as_str(), c))
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn into_columns(self) -> Vec<(String, Column)> {
        self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, c)| c)
    }

    fn typed<'a, T: ?Sized>(
        &'a self,
        name: &str,
        expected: ColumnType,
        get: impl FnOnce(&'a Column) -> Option<&'a T>,
    ) -> CoreResult<&'a T> {
        let col = self
            .column(name)
            .ok_or_else(|| CoreError::SchemaMismatch(format!("missing column `{name}`")))?;
        get(col).ok_or_else(|| {
            CoreError::SchemaMismatch(format!(
                "column `{name}` has type {}, expected {expected}",
                col.ty()
            ))
        })
    }

    pub fn ints(&self, name: &str) -> CoreResult<&[i64]> {
        self.typed(name, ColumnType::Int, Column::as_ints)
    }

    pub fn floats(&self, name: &str) -> CoreResult<&[f64]> {
        self.typed(name, ColumnType::Float, Column::as_floats)
    }

    pub fn strs(&self, name: &str) -> CoreResult<&[String]> {
        self.typed(name, ColumnType::Str, Column::as_strs)
    }

    pub fn str_seqs(&self, name: &str) -> CoreResult<&[Vec<String>]> {
        self.typed(name, ColumnType::StrSeq, Column::as_str_seqs)
    }

    pub fn float_seqs(&self, name: &str) -> CoreResult<&[Vec<f64>]> {
        self.typed(name, ColumnType::FloatSeq, Column::as_float_seqs)
    }

    /// Checks that the batch carries exactly the schema's columns with matching
    /// types, and reorders columns into schema order.
    pub fn conform(mut self, schema: &FeatureSchema) -> CoreResult<Batch> {
        if self.columns.len() != schema.len() {
            let extra: Vec<&str> = self
                .columns
                .iter()
                .map(|(n, _)| n.as_str())
                .filter(|n| schema.get(n).is_none())
                .collect();
            let missing: Vec<&str> = schema
                .fields()
                .iter()
                .map(|f| f.name.as_str())
                .filter(|n| self.column(n).is_none())
                .collect();
            return Err(CoreError::SchemaMismatch(format!(
                "expected columns {schema}; missing {missing:?}, unexpected {extra:?}"
            )));
        }
        let mut ordered = Vec::with_capacity(schema.len());
        for field in schema.fields() {
            let pos = self
                .columns
                .iter()
                .position(|(n, _)| *n == field.name)
                .ok_or_else(|| {
                    CoreError::SchemaMismatch(format!("missing column `{}`", field.name))
                })?;
            let (name, col) = self.columns.swap_remove(pos);
            if col.ty() != field.ty {
                return Err(CoreError::SchemaMismatch(format!(
                    "column `{name}` has type {}, expected {}",
                    col.ty(),
                    field.ty
                )));
            }
            ordered.push((name, col));
        }
        Ok(Batch { columns: ordered })
    }

    /// Appends the rows of `other`, which must have the same column names and types.
    pub fn append(&mut self, other: &Batch) -> CoreResult<()> {
        if self.columns.is_empty() {
            self.columns = other.columns.clone();
            return Ok(());
        }
        if other.columns.len() != self.columns.len() {
            return Err(CoreError::SchemaMismatch(format!(
                "cannot append a batch with {} columns to one with {}",
                other.columns.len(),
                self.columns.len()
            )));
        }
        for (name, col) in &mut self.columns {
            let src = other
                .column(name)
                .ok_or_else(|| CoreError::SchemaMismatch(format!("missing column `{name}`")))?;
            col.extend_from(src)?;
        }
        Ok(())
    }

    /// Like [`Batch::append`] but moves the rows of `other`.
    pub fn extend(&mut self, other: Batch) -> CoreResult<()> {
        if self.columns.is_empty() {
            self.columns = other.columns;
            return Ok(());
        }
        if other.columns.len() != self.columns.len() {
            return Err(CoreError::SchemaMismatch(format!(
                "cannot append a batch with {} columns to one with {}",
                other.columns.len(),
                self.columns.len()
            )));
        }
        let mut other = other.columns;
        for (name, col) in &mut self.columns {
            let pos = other
                .iter()
                .position(|(n, _)| n == name)
                .ok_or_else(|| CoreError::SchemaMismatch(format!("missing column `{name}`")))?;
            let (_, src) = other.swap_remove(pos);
            col.append_owned(src)?;
        }
        Ok(())
    }

    /// Gathers rows at `indices` into a new batch.
    pub fn select(&self, indices: &[usize]) -> Batch {
        Batch {
            columns: self
                .columns
                .iter()
                .map(|(n, c)| (n.clone(), c.select(indices)))
                .collect(),
        }
    }

    /// Copies a subset of columns, optionally renaming them (`(from, to)` pairs).
    pub fn project(&self, mapping: &[(&str, &str)]) -> CoreResult<Batch> {
        let mut out = Batch::new();
        for (from, to) in mapping {
            let col = self
                .column(from)
                .ok_or_else(|| CoreError::SchemaMismatch(format!("missing column `{from}`")))?;
            out.push_column(*to, col.clone())?;
        }
        Ok(out)
    }

    pub fn heap_bytes(&self) -> usize {
        self.columns.iter().map(|(n, c)| n.capacity() + c.heap_bytes()).sum()
    }
}
