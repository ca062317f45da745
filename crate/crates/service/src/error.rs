use axum::extract::multipart::MultipartError;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

/// Request failures, each mapped to one HTTP status.
#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("checkpoint not loaded")]
    NotReady,
    #[error("missing form part `{0}`")]
    MissingPart(&'static str),
    #[error("form part `{part}` is not a decodable PNG or JPEG: {message}")]
    Undecodable { part: &'static str, message: String },
    #[error("form part `{part}` is {width}x{height}, above the {max_pixels}-pixel cap")]
    TooLarge {
        part: &'static str,
        width: u32,
        height: u32,
        max_pixels: u64,
    },
    #[error("no gallery image with id `{0}`")]
    UnknownGuidance(String),
    #[error("malformed form: {message}")]
    Form { status: StatusCode, message: String },
    #[error(transparent)]
    Core(#[from] cidn_core::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::NotReady => StatusCode::SERVICE_UNAVAILABLE,
            ApiError::MissingPart(_) | ApiError::Undecodable { .. } => StatusCode::BAD_REQUEST,
            ApiError::TooLarge { .. } => StatusCode::PAYLOAD_TOO_LARGE,
            ApiError::UnknownGuidance(_) => StatusCode::NOT_FOUND,
            ApiError::Form { status, .. } => *status,
            ApiError::Core(cidn_core::Error::InvalidArgument(_) | cidn_core::Error::Shape(_)) => {
                StatusCode::BAD_REQUEST
            }
            ApiError::Core(_) | ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl From<MultipartError> for ApiError {
    fn from(e: MultipartError) -> Self {
        ApiError::Form {
            status: e.status(),
            message: e.body_text(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            log::error!("{self}");
        }
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}
