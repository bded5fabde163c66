//! HTTP API, version 1. All bodies are JSON.
//!
//! | method | path                           | success            |
//! |--------|--------------------------------|--------------------|
//! | POST   | /v1/runs                       | 201 created, 200 idempotent replay |
//! | GET    | /v1/runs                       | 200 list of run ids |
//! | GET    | /v1/runs/{id}                  | 200 run summary    |
//! | GET    | /v1/runs/{id}/metrics          | 200 metric series  |
//! | GET    | /v1/runs/{id}/transcript       | 200 transcript     |
//! | POST   | /v1/runs/{id}/tasks/next       | 200 task, 204 none ready |
//! | POST   | /v1/sessions/choice            | 200 choice receipt |
//! | POST   | /v1/sessions/revision          | 200 revision receipt |
//! | POST   | /v1/sessions/visibility        | 204                |
//! | POST   | /v1/sessions/abandon           | 204                |
//!
//! Errors carry `{"error": code, "message": text}` plus `not_before` for
//! `too_early` and `words`/`min_words` for `too_short`. Status codes: 400
//! invalid input, 401 unknown, used or expired token, 404 unknown run, 409
//! state conflict, 410 run no longer accepting work, 422 revision too short,
//! 425 revision before the display period ends.

use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use opinion_core::RunConfig;
use serde::Deserialize;
use serde_json::json;

use crate::service::{Service, ServiceError};

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let message = self.to_string();
        let (status, body) = match &self {
            ServiceError::NotFound(_) => (StatusCode::NOT_FOUND, json!({"error": "not_found"})),
            ServiceError::Gone(_) => (StatusCode::GONE, json!({"error": "gone"})),
            ServiceError::Unauthorized(_) => {
                (StatusCode::UNAUTHORIZED, json!({"error": "invalid_token"}))
            }
            ServiceError::Conflict(_) => (StatusCode::CONFLICT, json!({"error": "conflict"})),
            ServiceError::BadRequest(_) => {
                (StatusCode::BAD_REQUEST, json!({"error": "bad_request"}))
            }
            ServiceError::TooEarly { not_before } => (
                StatusCode::TOO_EARLY,
                json!({"error": "too_early", "not_before": not_before}),
            ),
            ServiceError::TooShort { words, min } => (
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({"error": "too_short", "words": words, "min_words": min}),
            ),
            ServiceError::Internal(_) => {
                tracing::error!(error = %message, "internal error");
                (StatusCode::INTERNAL_SERVER_ERROR, json!({"error": "internal"}))
            }
        };
        let mut body = body;
        body["message"] = json!(message);
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ServiceError>;

#[derive(Debug, Deserialize)]
pub struct NextTaskRequest {
    pub participant_id: String,
}

#[derive(Debug, Deserialize)]
pub struct ChoiceRequest {
    pub token: String,
    pub index: usize,
}

#[derive(Debug, Deserialize)]
pub struct RevisionRequest {
    pub token: String,
    pub text: String,
}

#[derive(Debug, Deserialize)]
pub struct VisibilityRequest {
    pub token: String,
    pub hidden: bool,
}

#[derive(Debug, Deserialize)]
pub struct TokenRequest {
    pub token: String,
}

fn body<T>(r: Result<Json<T>, axum::extract::rejection::JsonRejection>) -> ApiResult<T> {
    r.map(|Json(v)| v)
        .map_err(|e| ServiceError::BadRequest(e.body_text()))
}

async fn create_run(
    State(svc): State<Arc<Service>>,
    headers: HeaderMap,
    config: Result<Json<RunConfig>, axum::extract::rejection::JsonRejection>,
) -> ApiResult<Response> {
    let config = body(config)?;
    let key = headers
        .get(IDEMPOTENCY_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::to_string);
    let created = svc.create_run(config, key)?;
    let status = if created.created {
        StatusCode::CREATED
    } else {
        StatusCode::OK
    };
    Ok((status, Json(created)).into_response())
}

async fn list_runs(State(svc): State<Arc<Service>>) -> Json<serde_json::Value> {
    Json(json!({ "runs": svc.run_ids() }))
}

async fn get_run(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(svc.summary(&id)?).into_response())
}

async fn get_metrics(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let series = tokio::task::spawn_blocking(move || svc.metrics(&id))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))??;
    Ok(Json(series).into_response())
}

async fn get_transcript(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    Ok(Json(svc.transcript(&id)?).into_response())
}

async fn next_task(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    req: Result<Json<NextTaskRequest>, axum::extract::rejection::JsonRejection>,
) -> ApiResult<Response> {
    let req = body(req)?;
    Ok(match svc.next_task(&id, &req.participant_id)? {
        Some(task) => Json(task).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

async fn submit_choice(
    State(svc): State<Arc<Service>>,
    req: Result<Json<ChoiceRequest>, axum::extract::rejection::JsonRejection>,
) -> ApiResult<Response> {
    let req = body(req)?;
    Ok(Json(svc.submit_choice(&req.token, req.index)?).into_response())
}

async fn submit_revision(
    State(svc): State<Arc<Service>>,
    req: Result<Json<RevisionRequest>, axum::extract::rejection::JsonRejection>,
) -> ApiResult<Response> {
    let req = body(req)?;
    Ok(Json(svc.submit_revision(&req.token, &req.text)?).into_response())
}

async fn visibility(
    State(svc): State<Arc<Service>>,
    req: Result<Json<VisibilityRequest>, axum::extract::rejection::JsonRejection>,
) -> ApiResult<StatusCode> {
    let req = body(req)?;
    svc.log_visibility(&req.token, req.hidden)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn abandon(
    State(svc): State<Arc<Service>>,
    req: Result<Json<TokenRequest>, axum::extract::rejection::JsonRejection>,
) -> ApiResult<StatusCode> {
    let req = body(req)?;
    svc.abandon(&req.token)?;
    Ok(StatusCode::NO_CONTENT)
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/v1/runs", post(create_run).get(list_runs))
        .route("/v1/runs/{id}", get(get_run))
        .route("/v1/runs/{id}/metrics", get(get_metrics))
        .route("/v1/runs/{id}/transcript", get(get_transcript))
        .route("/v1/runs/{id}/tasks/next", post(next_task))
        .route("/v1/sessions/choice", post(submit_choice))
        .route("/v1/sessions/revision", post(submit_revision))
        .route("/v1/sessions/visibility", post(visibility))
        .route("/v1/sessions/abandon", post(abandon))
        .with_state(service)
}
