//! JSON-over-HTTP front end for [`SessionService`].

use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use wmsurface_core::domain::StimulusParams;
use wmsurface_core::pattern::{generate_with, PatternConfig};
use wmsurface_core::service::{CreateSessionRequest, OutcomeRequest};
use wmsurface_core::{Error, SessionService};

/// Body of every error response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status, body: ErrorBody { code: code.into(), message: message.into() } }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            Error::State(_) => (StatusCode::CONFLICT, "conflict"),
            Error::InvalidInput(_) => (StatusCode::UNPROCESSABLE_ENTITY, "validation"),
            Error::Domain(_) => (StatusCode::UNPROCESSABLE_ENTITY, "domain"),
            Error::Config(_) => (StatusCode::BAD_REQUEST, "bad_config"),
            Error::Unsupported(_) => (StatusCode::BAD_REQUEST, "unsupported"),
            Error::Degenerate(_) | Error::NonFinite(_) => (StatusCode::UNPROCESSABLE_ENTITY, "numerical"),
            Error::Storage(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "malformed_body", r.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "malformed_query", r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Model updates can take a noticeable fraction of a second, so they run
/// off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, Error> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(ApiError::from)
}

pub fn router(service: Arc<SessionService>) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/outcome", post(report_outcome))
        .route("/sessions/{id}/posterior", get(posterior))
        .route("/sessions/{id}/archive", post(archive).get(archive))
        .route("/patterns", get(pattern))
        .with_state(service)
}

async fn create_session(
    State(svc): State<Arc<SessionService>>,
    body: Result<Json<CreateSessionRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<wmsurface_core::service::SessionResponse>), ApiError> {
    let Json(req) = body?;
    let resp = blocking(move || svc.create_session(req)).await?;
    Ok((StatusCode::CREATED, Json(resp)))
}

async fn list_sessions(State(svc): State<Arc<SessionService>>) -> Json<Vec<String>> {
    Json(svc.session_ids())
}

async fn get_session(
    State(svc): State<Arc<SessionService>>,
    Path(id): Path<String>,
) -> ApiResult<wmsurface_core::service::SessionResponse> {
    Ok(Json(svc.session(&id)?))
}

async fn report_outcome(
    State(svc): State<Arc<SessionService>>,
    Path(id): Path<String>,
    body: Result<Json<OutcomeRequest>, JsonRejection>,
) -> ApiResult<wmsurface_core::service::OutcomeResponse> {
    let Json(req) = body?;
    Ok(Json(blocking(move || svc.report_outcome(&id, req)).await?))
}

async fn posterior(State(svc): State<Arc<SessionService>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let view = svc.posterior(&id)?;
    Ok(Json(&*view).into_response())
}

async fn archive(
    State(svc): State<Arc<SessionService>>,
    Path(id): Path<String>,
) -> ApiResult<wmsurface_core::domain::SessionRecord> {
    Ok(Json(blocking(move || svc.archive(&id)).await?))
}

/// Largest candidate pool a request may ask for.
pub const MAX_POOL: usize = 10_000;

#[derive(Debug, Deserialize)]
pub struct PatternQuery {
    #[serde(rename = "L")]
    pub l: u32,
    #[serde(rename = "K")]
    pub k: u32,
    #[serde(default)]
    pub seed: u64,
    pub pool: Option<usize>,
}

async fn pattern(q: Result<Query<PatternQuery>, QueryRejection>) -> ApiResult<wmsurface_core::PatternSpec> {
    let Query(q) = q?;
    let params = StimulusParams::new(q.l, q.k)?;
    let mut cfg = PatternConfig::default();
    if let Some(pool) = q.pool {
        if !(1..=MAX_POOL).contains(&pool) {
            return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", format!("pool must be in 1..={MAX_POOL}")));
        }
        cfg.pool_size = pool;
    }
    Ok(Json(blocking(move || generate_with(params, q.seed, &cfg)).await?))
}
