use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use makeupbag_core::Error as CoreError;
use makeupbag_models::ModelError;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("unknown session `{0}`")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("operation timed out")]
    Timeout,
    #[error("{0}")]
    Internal(String),
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Timeout => StatusCode::GATEWAY_TIMEOUT,
            ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl From<CoreError> for ServiceError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::DimensionMismatch { .. }
            | CoreError::NoFace
            | CoreError::SchemaMismatch(..)
            | CoreError::SchemaMissing { .. }
            | CoreError::DegenerateTriangle(_)
            | CoreError::InsufficientData(_) => ServiceError::Unprocessable(e.to_string()),
            CoreError::UnsupportedFormat(_)
            | CoreError::Corrupt(_)
            | CoreError::InvalidArgument(_)
            | CoreError::UnknownRegion(_) => ServiceError::BadRequest(e.to_string()),
            other => ServiceError::Internal(other.to_string()),
        }
    }
}

impl From<ModelError> for ServiceError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Core(c) => c.into(),
            ModelError::Undersized(m) => ServiceError::Unprocessable(m),
            other => ServiceError::Internal(other.to_string()),
        }
    }
}

impl From<std::io::Error> for ServiceError {
    fn from(e: std::io::Error) -> Self {
        ServiceError::Internal(e.to_string())
    }
}

impl From<serde_json::Error> for ServiceError {
    fn from(e: serde_json::Error) -> Self {
        ServiceError::Internal(e.to_string())
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        if let ServiceError::Internal(m) = &self {
            tracing::error!("{m}");
        }
        (self.status(), Json(json!({ "error": self.to_string() }))).into_response()
    }
}
