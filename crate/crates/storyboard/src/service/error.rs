use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

use crate::backends::BackendError;
use crate::pipeline::PipelineError;
use crate::store::StoreError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub http_status: u16,
    pub machine_code: String,
    pub message: String,
    pub retryable: bool,
}

impl ApiError {
    pub fn new(
        status: StatusCode,
        code: &str,
        message: impl Into<String>,
        retryable: bool,
    ) -> Self {
        ApiError {
            http_status: status.as_u16(),
            machine_code: code.into(),
            message: message.into(),
            retryable,
        }
    }

    pub fn invalid_body(message: impl Into<String>) -> Self {
        ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid_body",
            message,
            false,
        )
    }

    pub fn not_found(code: &str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, code, message, false)
    }
}

impl From<BackendError> for ApiError {
    fn from(e: BackendError) -> Self {
        let (status, code, retryable) = match &e {
            BackendError::Transport(_) => (StatusCode::BAD_GATEWAY, "backend_transport", true),
            BackendError::Auth(_) => (StatusCode::BAD_GATEWAY, "backend_auth", false),
            BackendError::ModelRefusal(_) => (StatusCode::BAD_GATEWAY, "model_refusal", true),
            BackendError::BackendBusy(_) => (StatusCode::SERVICE_UNAVAILABLE, "backend_busy", true),
            BackendError::InvalidParameters(_) => (
                StatusCode::UNPROCESSABLE_ENTITY,
                "backend_invalid_parameters",
                false,
            ),
            BackendError::InvalidResponse(_) => {
                (StatusCode::BAD_GATEWAY, "backend_invalid_response", true)
            }
        };
        ApiError::new(status, code, e.to_string(), retryable)
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let (status, code, retryable) = match &e {
            StoreError::Io { .. } => (StatusCode::INTERNAL_SERVER_ERROR, "storage_io", true),
            StoreError::Invalid(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_project", false),
            StoreError::UnsupportedSchema { .. } => (
                StatusCode::INTERNAL_SERVER_ERROR,
                "unsupported_schema",
                false,
            ),
            StoreError::Corrupt(_) => (StatusCode::INTERNAL_SERVER_ERROR, "corrupt_project", false),
            StoreError::NotFound(_) => (StatusCode::NOT_FOUND, "project_not_found", false),
            StoreError::ImageMissing(_) => (StatusCode::NOT_FOUND, "image_missing", false),
            StoreError::NothingRendered => (StatusCode::CONFLICT, "nothing_rendered", false),
        };
        ApiError::new(status, code, e.to_string(), retryable)
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let e = match e {
            PipelineError::Backend(b) => return b.into(),
            PipelineError::Storage(s) => return s.into(),
            other => other,
        };
        let unprocessable = StatusCode::UNPROCESSABLE_ENTITY;
        let (status, code) = match &e {
            PipelineError::Backend(_) | PipelineError::Storage(_) => unreachable!(),
            PipelineError::EmptyNarrative => (unprocessable, "empty_narrative"),
            PipelineError::InvalidFrameCount => (unprocessable, "invalid_frame_count"),
            PipelineError::InvalidFrame(_) => (unprocessable, "invalid_frame"),
            PipelineError::EmptyText => (unprocessable, "empty_text"),
            PipelineError::IndexOutOfRange { .. } => (StatusCode::NOT_FOUND, "frame_not_found"),
            PipelineError::FrameNotReady { .. } => (StatusCode::CONFLICT, "frame_not_ready"),
            PipelineError::StyleMissing => (StatusCode::CONFLICT, "style_missing"),
            PipelineError::ParseExhausted { .. } => {
                return ApiError::new(
                    StatusCode::BAD_GATEWAY,
                    "parse_exhausted",
                    e.to_string(),
                    true,
                )
            }
        };
        ApiError::new(status, code, e.to_string(), false)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status =
            StatusCode::from_u16(self.http_status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}
