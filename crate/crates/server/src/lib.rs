//! HTTP routes over [`SearchService`]. Handlers run the synchronous pipeline
//! on the blocking pool so the executor keeps serving other connections.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use semrank_core::scoring::wire::{WireScoreRequest, WireScoreResponse};
use semrank_core::search::{SearchError, SearchRequest, SearchService};
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: &str, message: impl Into<String>) -> Self {
        Self { status, body: ErrorBody { error: error.into(), message: message.into() } }
    }
}

impl From<SearchError> for ApiError {
    fn from(e: SearchError) -> Self {
        let status = match e {
            SearchError::Request(_) | SearchError::Retrieval(_) | SearchError::Scoring(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, "search_failed", e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_body", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "worker_failed", e.to_string()))?
}

async fn search(
    State(svc): State<Arc<SearchService>>,
    body: Result<Json<SearchRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body?;
    let resp = blocking(move || svc.handle_search(&req).map_err(ApiError::from)).await?;
    Ok(Json(resp).into_response())
}

async fn score(
    State(svc): State<Arc<SearchService>>,
    body: Result<Json<WireScoreRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body?;
    let resp = blocking(move || {
        let id = req.request_id.clone();
        let engine_req = req
            .into_engine(svc.tokenizer(), svc.engine().weights().config.d_model)
            .map_err(|e| ApiError::from(SearchError::from(e)))?;
        let result = svc.engine().score(&engine_req).map_err(|e| ApiError::from(SearchError::from(e)))?;
        Ok(WireScoreResponse::from_result(id, &result))
    })
    .await?;
    Ok(Json(resp).into_response())
}

async fn healthz(State(svc): State<Arc<SearchService>>) -> Response {
    let h = svc.health_and_metrics();
    Json(serde_json::json!({
        "status": h.status,
        "model_version": h.model_version,
        "weights_checksum": h.weights_checksum,
        "corpus_docs": h.corpus_docs,
        "depth": h.depth,
    }))
    .into_response()
}

async fn metrics(State(svc): State<Arc<SearchService>>) -> Response {
    Json(svc.health_and_metrics()).into_response()
}

pub fn router(service: Arc<SearchService>) -> Router {
    Router::new()
        .route("/search", post(search))
        .route("/score", post(score))
        .route("/healthz", get(healthz))
        .route("/metrics", get(metrics))
        .with_state(service)
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr, service: Arc<SearchService>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(service)).await
}
