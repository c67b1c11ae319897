//! Typed feature schemas.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, CoreResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ColumnType {
    #[serde(rename = "int")]
    Int,
    #[serde(rename = "float")]
    Float,
    #[serde(rename = "string")]
    Str,
    #[serde(rename = "string-sequence")]
    StrSeq,
    #[serde(rename = "float-sequence")]
    FloatSeq,
}

impl ColumnType {
    pub fn name(self) -> &'static str {
        match self {
            ColumnType::Int => "int",
            ColumnType::Float => "float",
            ColumnType::Str => "string",
            ColumnType::StrSeq => "string-sequence",
            ColumnType::FloatSeq => "float-sequence",
        }
    }

    /// One-byte tag used by on-disk encodings.
    pub fn tag(self) -> u8 {
        match self {
            ColumnType::Int => 1,
            ColumnType::Float => 2,
            ColumnType::Str => 3,
            ColumnType::StrSeq => 4,
            ColumnType::FloatSeq => 5,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            1 => ColumnType::Int,
            2 => ColumnType::Float,
            3 => ColumnType::Str,
            4 => ColumnType::StrSeq,
            5 => ColumnType::FloatSeq,
            _ => return None,
        })
    }
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Field {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ColumnType,
}

/// Ordered, uniquely named list of typed columns.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Field>", into = "Vec<Field>")]
pub struct FeatureSchema {
    fields: Vec<Field>,
}

impl FeatureSchema {
    pub fn new<I, S>(fields: I) -> CoreResult<Self>
    where
        I: IntoIterator<Item = (S, ColumnType)>,
        S: Into<String>,
    {
        let fields: Vec<Field> = fields
            .into_iter()
            .map(|(name, ty)| Field { name: name.into(), ty })
            .collect();
        Self::from_fields(fields)
    }

    pub fn from_fields(fields: Vec<Field>) -> CoreResult<Self> {
        for (i, field) in fields.iter().enumerate() {
            if field.name.is_empty() {
                return Err(CoreError::SchemaMismatch("column names must be non-empty".to_string()));
            }
            if fields[..i].iter().any(|f| f.name == field.name) {
                return Err(CoreError::SchemaMismatch(format!(
                    "duplicate column `{}`",
                    field.name
                )));
            }
        }
        Ok(FeatureSchema { fields })
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<ColumnType> {
        self.fields.iter().find(|f| f.name == name).map(|f| f.ty)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    /// Canonical text form, `name:type` pairs joined by `;`. Stable input for fingerprints.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (i, field) in self.fields.iter().enumerate() {
            if i > 0 {
                out.push(';');
            }
            out.push_str(&field.name);
            out.push(':');
            out.push_str(field.ty.name());
        }
        out
    }
}

impl TryFrom<Vec<Field>> for FeatureSchema {
    type Error = CoreError;

    fn try_from(fields: Vec<Field>) -> CoreResult<Self> {
        Self::from_fields(fields)
    }
}

impl From<FeatureSchema> for Vec<Field> {
    fn from(schema: FeatureSchema) -> Self {
        schema.fields
    }
}

impl fmt::Display for FeatureSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, field) in self.fields.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}: {}", field.name, field.ty)?;
        }
        f.write_str("}")
    }
}
