//! HTTP interface. Bodies are JSON; failures are
//! `{"error": {"code": "...", "message": "..."}}` with a matching status.
//!
//! | Method | Path | |
//! |---|---|---|
//! | POST | `/jobs` | submit a job spec; `"force": true` skips deduplication |
//! | GET | `/jobs` | list jobs, `?state=` filters |
//! | GET | `/jobs/{id}` | one job |
//! | GET | `/proposals/{id}` | one proposal with its report |
//! | POST | `/proposals/{id}/review` | `{"decision": "approve" \| "close"}` with `Authorization: Bearer <token>` |
//! | GET | `/leaderboards` | `?dataset=&metric=&task=&verified=&include_closed=` |
//! | POST | `/results/self-reported` | import an external result |
//! | GET | `/model-card-metadata` | `?model=`; approved results of one model |

use std::collections::HashMap;
use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Value};

use super::{
    Decision, DatasetPin, FieldError, JobSpec, JobState, LeaderboardQuery, SelfReported, Service, ServiceError,
    ServiceResult,
};

pub struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.0.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self.0.to_json())).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;
type Shared = Arc<Service>;

/// Runs a store-touching call off the async executor.
async fn blocking<T: Send + 'static>(
    svc: &Shared,
    f: impl FnOnce(&Service) -> ServiceResult<T> + Send + 'static,
) -> Result<T, ApiError> {
    let svc = Arc::clone(svc);
    tokio::task::spawn_blocking(move || f(&svc))
        .await
        .map_err(|e| ApiError(ServiceError::BadRequest(format!("request handler panicked: {e}"))))?
        .map_err(ApiError)
}

fn parse_body(body: &Bytes) -> Result<Value, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError(ServiceError::BadRequest(format!("body is not JSON: {e}"))))
}

fn flag(params: &HashMap<String, String>, name: &str) -> Result<Option<bool>, ApiError> {
    params
        .get(name)
        .map(|v| match v.as_str() {
            "true" | "1" => Ok(true),
            "false" | "0" => Ok(false),
            _ => Err(ApiError(ServiceError::BadRequest(format!("`{name}` must be true or false")))),
        })
        .transpose()
}

fn required<'a>(params: &'a HashMap<String, String>, name: &str) -> Result<&'a str, ApiError> {
    params
        .get(name)
        .map(String::as_str)
        .filter(|v| !v.is_empty())
        .ok_or_else(|| ApiError(ServiceError::BadRequest(format!("query parameter `{name}` is required"))))
}

async fn submit_job(State(svc): State<Shared>, body: Bytes) -> ApiResult {
    let mut v = parse_body(&body)?;
    let force = match v.as_object_mut().and_then(|o| o.remove("force")) {
        None => false,
        Some(Value::Bool(b)) => b,
        Some(_) => return Err(ServiceError::InvalidSpec(vec![FieldError::new("force", "must be a boolean")]).into()),
    };
    let spec: JobSpec = serde_json::from_value(v)
        .map_err(|e| ServiceError::InvalidSpec(vec![FieldError::new("spec", e.to_string())]))?;
    let submitted = blocking(&svc, move |s| s.submit(spec, force)).await?;
    let status = if submitted.created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(submitted)).into_response())
}

async fn list_jobs(State(svc): State<Shared>, Query(params): Query<HashMap<String, String>>) -> ApiResult {
    let state = match params.get("state") {
        None => None,
        Some(s) => Some(
            JobState::parse(s).ok_or_else(|| ServiceError::BadRequest(format!("unknown job state `{s}`")))?,
        ),
    };
    let jobs = blocking(&svc, move |s| s.jobs(state)).await?;
    Ok(Json(json!({ "jobs": jobs })).into_response())
}

async fn get_job(State(svc): State<Shared>, Path(id): Path<String>) -> ApiResult {
    Ok(Json(blocking(&svc, move |s| s.job(&id)).await?).into_response())
}

async fn get_proposal(State(svc): State<Shared>, Path(id): Path<String>) -> ApiResult {
    Ok(Json(blocking(&svc, move |s| s.proposal(&id)).await?).into_response())
}

async fn review(State(svc): State<Shared>, Path(id): Path<String>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let token = headers
        .get("authorization")
        .and_then(|h| h.to_str().ok())
        .and_then(|h| h.strip_prefix("Bearer "))
        .unwrap_or_default()
        .trim()
        .to_string();
    let v = parse_body(&body)?;
    let decision: Decision = serde_json::from_value(v.get("decision").cloned().unwrap_or(Value::Null))
        .map_err(|_| ServiceError::BadRequest("`decision` must be \"approve\" or \"close\"".into()))?;
    Ok(Json(blocking(&svc, move |s| s.review(&id, decision, &token)).await?).into_response())
}

async fn leaderboard(State(svc): State<Shared>, Query(params): Query<HashMap<String, String>>) -> ApiResult {
    let q = LeaderboardQuery {
        dataset: required(&params, "dataset")?.to_string(),
        metric: required(&params, "metric")?.to_string(),
        task: params.get("task").filter(|t| !t.is_empty()).cloned(),
        verified: flag(&params, "verified")?,
        include_closed: flag(&params, "include_closed")?.unwrap_or(false),
    };
    let entries = blocking(&svc, move |s| s.leaderboard(&q)).await?;
    Ok(Json(json!({ "entries": entries })).into_response())
}

/// `value` may be a number or a numeric string such as "NaN", which is then rejected as invalid.
fn self_reported(v: Value) -> Result<SelfReported, ServiceError> {
    let bad = |m: &str| ServiceError::BadRequest(m.to_string());
    let obj = v.as_object().ok_or_else(|| bad("body must be an object"))?;
    let text = |k: &str| obj.get(k).and_then(Value::as_str).map(str::to_string);
    let dataset = match obj.get("dataset") {
        Some(Value::String(s)) => DatasetPin { path: s.clone(), sha256: None },
        Some(d @ Value::Object(_)) => serde_json::from_value(d.clone()).map_err(|e| bad(&format!("dataset: {e}")))?,
        _ => return Err(bad("`dataset` is required")),
    };
    let value = match obj.get("value") {
        Some(Value::Number(n)) => n.as_f64().ok_or_else(|| ServiceError::InvalidValue(n.to_string()))?,
        Some(Value::String(s)) => {
            s.trim().parse::<f64>().map_err(|_| ServiceError::InvalidValue(format!("`{s}` is not a number")))?
        }
        Some(other) => return Err(ServiceError::InvalidValue(format!("{other} is not a number"))),
        None => return Err(bad("`value` is required")),
    };
    Ok(SelfReported {
        model: text("model").ok_or_else(|| bad("`model` is required"))?,
        dataset,
        task: text("task"),
        metric: text("metric").ok_or_else(|| bad("`metric` is required"))?,
        value,
        source: text("source"),
    })
}

async fn import(State(svc): State<Shared>, body: Bytes) -> ApiResult {
    let r = self_reported(parse_body(&body)?)?;
    let p = blocking(&svc, move |s| s.import_self_reported(r)).await?;
    Ok((StatusCode::CREATED, Json(p)).into_response())
}

async fn model_card(State(svc): State<Shared>, Query(params): Query<HashMap<String, String>>) -> ApiResult {
    let model = required(&params, "model")?.to_string();
    Ok(Json(blocking(&svc, move |s| s.model_card_metadata(&model)).await?).into_response())
}

async fn not_found() -> ApiError {
    ApiError(ServiceError::NotFound { kind: "route", id: String::new() })
}

pub fn router(svc: Shared) -> Router {
    Router::new()
        .route("/jobs", post(submit_job).get(list_jobs))
        .route("/jobs/:id", get(get_job))
        .route("/proposals/:id", get(get_proposal))
        .route("/proposals/:id/review", post(review))
        .route("/leaderboards", get(leaderboard))
        .route("/results/self-reported", post(import))
        .route("/model-card-metadata", get(model_card))
        .fallback(not_found)
        .with_state(svc)
}

/// Serves the API on an already bound listener until `shutdown` resolves.
pub async fn serve(
    svc: Shared,
    listener: tokio::net::TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(svc)).with_graceful_shutdown(shutdown).await
}

/// Binds `addr`, returning the listener and the bound address (useful with port 0).
pub async fn bind(addr: SocketAddr) -> std::io::Result<(tokio::net::TcpListener, SocketAddr)> {
    let l = tokio::net::TcpListener::bind(addr).await?;
    let a = l.local_addr()?;
    Ok((l, a))
}
