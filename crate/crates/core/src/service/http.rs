use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use super::{Service, ServiceError};
use crate::annotation::Answer;
use crate::error::Error;

/// Header carrying the shared access token when one is configured.
pub const TOKEN_HEADER: &str = "x-workpulse-token";

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let message = self.to_string();
        let (code, body) = match self {
            ServiceError::UnknownProject(_) | ServiceError::UnknownBatch(_) | ServiceError::NotInQueue(_) => {
                (StatusCode::NOT_FOUND, json!({ "error": message }))
            }
            ServiceError::AlreadyAssigned(view) => {
                (StatusCode::CONFLICT, json!({ "error": message, "assignment": view }))
            }
            ServiceError::NoAssignment { .. } | ServiceError::ResubmissionConflict(_) => {
                (StatusCode::CONFLICT, json!({ "error": message }))
            }
            ServiceError::Expired { .. } => (StatusCode::GONE, json!({ "error": message })),
            ServiceError::Incomplete { answered, expected } => (
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({ "error": message, "answered": answered, "expected": expected }),
            ),
            ServiceError::InvalidAnswers(_) => (StatusCode::UNPROCESSABLE_ENTITY, json!({ "error": message })),
            ServiceError::Unauthorized => (StatusCode::UNAUTHORIZED, json!({ "error": message })),
            ServiceError::Core(Error::Invalid(_)) => (StatusCode::BAD_REQUEST, json!({ "error": message })),
            ServiceError::Core(_) => {
                log::error!("{message}");
                (StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": message }))
            }
        };
        (code, Json(body)).into_response()
    }
}

type Shared = Arc<Service>;

fn authorize(svc: &Service, headers: &HeaderMap) -> Result<(), ServiceError> {
    match &svc.config().token {
        None => Ok(()),
        Some(expected) => match headers.get(TOKEN_HEADER).and_then(|v| v.to_str().ok()) {
            Some(got) if got == expected => Ok(()),
            _ => Err(ServiceError::Unauthorized),
        },
    }
}

#[derive(Deserialize)]
struct WorkerQuery {
    worker: String,
}

async fn next_batch(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Path(project): Path<String>,
    Query(q): Query<WorkerQuery>,
) -> Result<Response, ServiceError> {
    authorize(&svc, &headers)?;
    Ok(match svc.next_batch(&project, &q.worker)? {
        Some(view) => Json(view).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

#[derive(Deserialize)]
struct LabelsBody {
    worker_id: String,
    answers: BTreeMap<usize, Answer>,
}

async fn submit_labels(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Path((project, batch)): Path<(String, String)>,
    Json(body): Json<LabelsBody>,
) -> Result<Response, ServiceError> {
    authorize(&svc, &headers)?;
    let receipt = svc.submit_labels(&project, &body.worker_id, &batch, &body.answers)?;
    Ok(Json(receipt).into_response())
}

async fn status(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Path(project): Path<String>,
) -> Result<Response, ServiceError> {
    authorize(&svc, &headers)?;
    Ok(Json(svc.status(&project)?).into_response())
}

#[derive(Deserialize)]
struct QueueQuery {
    #[serde(default)]
    include_decided: bool,
}

async fn adjudication_queue(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Path(project): Path<String>,
    Query(q): Query<QueueQuery>,
) -> Result<Response, ServiceError> {
    authorize(&svc, &headers)?;
    Ok(Json(svc.adjudication_queue(&project, q.include_decided)?).into_response())
}

#[derive(Deserialize)]
struct AdjudicationBody {
    tweet_id: String,
    expert_id: String,
    job_related: bool,
}

async fn adjudicate(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Path(project): Path<String>,
    Json(body): Json<AdjudicationBody>,
) -> Result<Response, ServiceError> {
    authorize(&svc, &headers)?;
    let out = svc.adjudicate(&project, &body.tweet_id, body.job_related, &body.expert_id)?;
    Ok(Json(out).into_response())
}

async fn export_labels(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Path(project): Path<String>,
) -> Result<Response, ServiceError> {
    authorize(&svc, &headers)?;
    let csv = svc.export_labels_csv(&project)?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv).into_response())
}

pub fn router(svc: Arc<Service>) -> Router {
    let v1 = Router::new()
        .route("/projects/{id}/next-batch", get(next_batch))
        .route("/projects/{id}/batches/{batch}/labels", post(submit_labels))
        .route("/projects/{id}/status", get(status))
        .route("/projects/{id}/adjudication-queue", get(adjudication_queue))
        .route("/projects/{id}/adjudications", post(adjudicate))
        .route("/projects/{id}/export/labels.csv", get(export_labels));
    Router::new().nest("/v1", v1).with_state(svc)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    svc: Arc<Service>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(svc))
        .with_graceful_shutdown(shutdown)
        .await
}
