use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, CoreResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl ParamValue {
    pub fn type_name(&self) -> &'static str {
        match self {
            ParamValue::Bool(_) => "bool",
            ParamValue::Int(_) => "int",
            ParamValue::Float(_) => "float",
            ParamValue::Str(_) => "string",
        }
    }
}

impl From<bool> for ParamValue {
    fn from(v: bool) -> Self {
        ParamValue::Bool(v)
    }
}

impl From<i64> for ParamValue {
    fn from(v: i64) -> Self {
        ParamValue::Int(v)
    }
}

impl From<f64> for ParamValue {
    fn from(v: f64) -> Self {
        ParamValue::Float(v)
    }
}

impl From<&str> for ParamValue {
    fn from(v: &str) -> Self {
        ParamValue::Str(v.to_string())
    }
}

impl From<String> for ParamValue {
    fn from(v: String) -> Self {
        ParamValue::Str(v)
    }
}

/// Named parameter values. Ordered so that serialized forms are stable.
pub type Params = BTreeMap<String, ParamValue>;

/// Applies `overrides` on top of `defaults` without touching `defaults`.
///
/// Every override key must be declared in `defaults` and keep its type; an
/// integer is accepted where a float is declared.
pub fn resolve(defaults: &Params, overrides: &Params) -> CoreResult<Params> {
    let mut resolved = defaults.clone();
    for (name, value) in overrides {
        let declared = defaults.get(name).ok_or_else(|| CoreError::InvalidParameter {
            name: name.clone(),
            reason: "not a declared parameter".to_string(),
        })?;
        let value = match (declared, value) {
            (ParamValue::Float(_), ParamValue::Int(i)) => ParamValue::Float(*i as f64),
            (d, v) if core::mem::discriminant(d) == core::mem::discriminant(v) => v.clone(),
            (d, v) => {
                return Err(CoreError::InvalidParameter {
                    name: name.clone(),
                    reason: format!("expected {}, got {}", d.type_name(), v.type_name()),
                })
            }
        };
        resolved.insert(name.clone(), value);
    }
    Ok(resolved)
}

fn missing(name: &str) -> CoreError {
    CoreError::InvalidParameter { name: name.to_string(), reason: "missing".to_string() }
}

fn wrong(name: &str, want: &str) -> CoreError {
    CoreError::InvalidParameter { name: name.to_string(), reason: format!("expected {want}") }
}

pub fn get_str<'a>(params: &'a Params, name: &str) -> CoreResult<&'a str> {
    match params.get(name) {
        Some(ParamValue::Str(s)) => Ok(s),
        Some(_) => Err(wrong(name, "string")),
        None => Err(missing(name)),
    }
}

pub fn get_int(params: &Params, name: &str) -> CoreResult<i64> {
    match params.get(name) {
        Some(ParamValue::Int(v)) => Ok(*v),
        Some(_) => Err(wrong(name, "int")),
        None => Err(missing(name)),
    }
}

pub fn get_float(params: &Params, name: &str) -> CoreResult<f64> {
    match params.get(name) {
        Some(ParamValue::Float(v)) => Ok(*v),
        Some(ParamValue::Int(v)) => Ok(*v as f64),
        Some(_) => Err(wrong(name, "float")),
        None => Err(missing(name)),
    }
}

pub fn get_bool(params: &Params, name: &str) -> CoreResult<bool> {
    match params.get(name) {
        Some(ParamValue::Bool(v)) => Ok(*v),
        Some(_) => Err(wrong(name, "bool")),
        None => Err(missing(name)),
    }
}
