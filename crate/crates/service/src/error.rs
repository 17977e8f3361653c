use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, ServiceError>;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown collection `{0}`")]
    UnknownCollection(String),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("item {item} is not the pending query item {pending:?}")]
    NotPendingItem { item: usize, pending: Option<usize> },
    #[error("item {0} is already labeled")]
    AlreadyLabeled(usize),
    #[error("no unlabeled item left to query")]
    PoolExhausted,
    #[error("seed labels contain no positive item")]
    NoPositiveSeed,
    #[error("{file}: {reason}")]
    Ingest { file: &'static str, reason: String },
    #[error("{0}")]
    Validation(String),
    #[error("session is busy, retry later")]
    Busy,
    #[error("corrupt session log `{session}`: {reason}")]
    CorruptLog { session: String, reason: String },
    #[error(transparent)]
    Core(#[from] retrieve_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownCollection(_) => "UnknownCollection",
            ServiceError::UnknownSession(_) => "UnknownSession",
            ServiceError::NotPendingItem { .. } => "NotPendingItem",
            ServiceError::AlreadyLabeled(_) => "AlreadyLabeled",
            ServiceError::PoolExhausted => "PoolExhausted",
            ServiceError::NoPositiveSeed => "NoPositiveSeed",
            ServiceError::Ingest { .. } => "IngestError",
            ServiceError::Validation(_) => "ValidationError",
            ServiceError::Busy => "Busy",
            ServiceError::CorruptLog { .. } => "CorruptLog",
            ServiceError::Core(_) | ServiceError::Io(_) => "Internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::UnknownCollection(_) | ServiceError::UnknownSession(_) => {
                StatusCode::NOT_FOUND
            }
            ServiceError::NotPendingItem { .. }
            | ServiceError::AlreadyLabeled(_)
            | ServiceError::PoolExhausted => StatusCode::CONFLICT,
            ServiceError::NoPositiveSeed
            | ServiceError::Ingest { .. }
            | ServiceError::Validation(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Busy => StatusCode::SERVICE_UNAVAILABLE,
            ServiceError::CorruptLog { .. } | ServiceError::Core(_) | ServiceError::Io(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        }
    }

    pub(crate) fn ingest(file: &'static str, reason: impl ToString) -> Self {
        ServiceError::Ingest {
            file,
            reason: reason.to_string(),
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() && status != StatusCode::SERVICE_UNAVAILABLE {
            tracing::error!(error = %self, "request failed");
        }
        let body = Json(json!({ "error": self.code(), "detail": self.to_string() }));
        let mut resp = (status, body).into_response();
        if status == StatusCode::SERVICE_UNAVAILABLE {
            resp.headers_mut().insert(
                axum::http::header::RETRY_AFTER,
                axum::http::HeaderValue::from_static("1"),
            );
        }
        resp
    }
}
