use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use crate::collection::Upload;
use crate::error::{Result, ServiceError};
use crate::session::LabelRequest;
use crate::store::{CreateSession, Service};

pub const DEFAULT_TOP_K: usize = 16;
const MAX_UPLOAD_BYTES: usize = 1 << 30;

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/collections", post(create_collection))
        .route("/collections/{cid}/sessions", post(create_session))
        .route("/sessions/{sid}", get(summary))
        .route("/sessions/{sid}/ranking", get(ranking))
        .route("/sessions/{sid}/query", get(query))
        .route("/sessions/{sid}/labels", post(submit_label))
        .route("/sessions/{sid}/history", get(history))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(service)
}

/// Runs blocking service work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> Result<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Io(std::io::Error::other(e)))?
}

fn body<T>(r: std::result::Result<Json<T>, JsonRejection>) -> Result<T> {
    r.map(|Json(v)| v)
        .map_err(|e| ServiceError::Validation(e.body_text()))
}

async fn create_collection(
    State(svc): State<Arc<Service>>,
    mut form: Multipart,
) -> Result<Response> {
    let mut upload = Upload::default();
    let mut seen = [false; 3];
    while let Some(field) = form
        .next_field()
        .await
        .map_err(|e| ServiceError::Validation(e.body_text()))?
    {
        let name = field.name().unwrap_or_default().to_string();
        let bytes = field
            .bytes()
            .await
            .map_err(|e| ServiceError::Validation(e.body_text()))?
            .to_vec();
        match name.as_str() {
            "features" => (upload.features, seen[0]) = (bytes, true),
            "classes" => (upload.classes, seen[1]) = (bytes, true),
            "taxonomy" => (upload.taxonomy, seen[2]) = (bytes, true),
            "config" => upload.config = Some(bytes),
            other => {
                return Err(ServiceError::Validation(format!(
                    "unexpected form part `{other}`"
                )))
            }
        }
    }
    for (present, file) in seen.iter().zip(["features", "classes", "taxonomy"]) {
        if !present {
            return Err(ServiceError::ingest(file, "missing form part"));
        }
    }
    let desc = blocking(move || svc.create_collection(&upload)).await?;
    Ok((StatusCode::CREATED, Json(desc)).into_response())
}

async fn create_session(
    State(svc): State<Arc<Service>>,
    Path(cid): Path<String>,
    req: std::result::Result<Json<CreateSession>, JsonRejection>,
) -> Result<Response> {
    let req = body(req)?;
    let state = blocking(move || svc.create_session(&cid, &req)).await?;
    Ok((StatusCode::CREATED, Json(state.summary())).into_response())
}

async fn summary(State(svc): State<Arc<Service>>, Path(sid): Path<String>) -> Result<Response> {
    Ok(Json(svc.session(&sid)?.summary()).into_response())
}

#[derive(Debug, Deserialize)]
struct RankingParams {
    top_k: Option<usize>,
    offset: Option<usize>,
}

async fn ranking(
    State(svc): State<Arc<Service>>,
    Path(sid): Path<String>,
    params: std::result::Result<Query<RankingParams>, QueryRejection>,
) -> Result<Response> {
    let Query(p) = params.map_err(|e| ServiceError::Validation(e.body_text()))?;
    let state = svc.session(&sid)?;
    Ok(
        Json(state.ranking(p.top_k.unwrap_or(DEFAULT_TOP_K), p.offset.unwrap_or(0)))
            .into_response(),
    )
}

async fn query(State(svc): State<Arc<Service>>, Path(sid): Path<String>) -> Result<Response> {
    Ok(Json(svc.session(&sid)?.query()?).into_response())
}

async fn submit_label(
    State(svc): State<Arc<Service>>,
    Path(sid): Path<String>,
    req: std::result::Result<Json<LabelRequest>, JsonRejection>,
) -> Result<Response> {
    let req = body(req)?;
    let state = blocking(move || svc.submit_label(&sid, req)).await?;
    Ok(Json(state.label_response()).into_response())
}

async fn history(State(svc): State<Arc<Service>>, Path(sid): Path<String>) -> Result<Response> {
    let state = svc.session(&sid)?;
    Ok(Json(json!({ "session_id": state.id, "events": state.events })).into_response())
}

/// Binds `addr` and serves until ctrl-c.
pub async fn serve(service: Arc<Service>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
