use serde::Serialize;
use serde_json::{json, Value};

use crate::error::Error;

/// One problem with one field of a submitted job spec.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        FieldError { field: field.into(), message: message.into() }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("invalid job spec: {}", .0.iter().map(|f| format!("{}: {}", f.field, f.message)).collect::<Vec<_>>().join("; "))]
    InvalidSpec(Vec<FieldError>),
    #[error("dataset {path} is unreadable: {reason}")]
    DatasetUnreadable { path: String, reason: String },
    #[error("{kind} {id} not found")]
    NotFound { kind: &'static str, id: String },
    #[error("proposal {id} was already {state}")]
    AlreadyDecided { id: String, state: String },
    #[error("token is not authorized for model {model}")]
    Unauthorized { model: String },
    #[error("metric `{metric}` does not declare whether higher is better")]
    UnknownMetricDirection { metric: String },
    #[error("unknown metric `{metric}`")]
    UnknownMetric { metric: String },
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("storage failure: {0}")]
    Storage(#[from] rusqlite::Error),
    #[error(transparent)]
    Internal(#[from] Error),
}

pub type ServiceResult<T> = std::result::Result<T, ServiceError>;

impl ServiceError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::InvalidSpec(_) => "invalid_spec",
            ServiceError::DatasetUnreadable { .. } => "dataset_unreadable",
            ServiceError::NotFound { .. } => "not_found",
            ServiceError::AlreadyDecided { .. } => "already_decided",
            ServiceError::Unauthorized { .. } => "unauthorized",
            ServiceError::UnknownMetricDirection { .. } => "unknown_metric_direction",
            ServiceError::UnknownMetric { .. } => "unknown_metric",
            ServiceError::InvalidValue(_) => "invalid_value",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::Storage(_) | ServiceError::Internal(_) => "internal",
        }
    }

    pub fn http_status(&self) -> u16 {
        match self {
            ServiceError::BadRequest(_) => 400,
            ServiceError::Unauthorized { .. } => 401,
            ServiceError::NotFound { .. } => 404,
            ServiceError::AlreadyDecided { .. } => 409,
            ServiceError::InvalidSpec(_)
            | ServiceError::DatasetUnreadable { .. }
            | ServiceError::UnknownMetricDirection { .. }
            | ServiceError::UnknownMetric { .. }
            | ServiceError::InvalidValue(_) => 422,
            ServiceError::Storage(_) | ServiceError::Internal(_) => 500,
        }
    }

    pub fn is_user_error(&self) -> bool {
        self.http_status() < 500
    }

    /// `{"error": {"code", "message", "fields"?}}`
    pub fn to_json(&self) -> Value {
        let mut body = json!({ "code": self.code(), "message": self.to_string() });
        if let ServiceError::InvalidSpec(fields) = self {
            body["fields"] = json!(fields);
        }
        json!({ "error": body })
    }
}
