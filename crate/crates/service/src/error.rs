use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use persona_feedback_core::engine::EngineError;
use persona_feedback_core::history::HistoryError;
use persona_feedback_core::persona::PersonaError;
use persona_feedback_core::prompt::PromptError;
use serde::{Deserialize, Serialize};

use crate::store::StoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    EmptySelection,
    PersonaNotFound,
    CardNotFound,
    DocumentNotFound,
    ProviderError,
    MalformedRequest,
    StaleSelection,
    Unauthorized,
    Internal,
}

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::EmptySelection => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCode::PersonaNotFound | ErrorCode::CardNotFound | ErrorCode::DocumentNotFound => {
                StatusCode::NOT_FOUND
            }
            ErrorCode::ProviderError => StatusCode::BAD_GATEWAY,
            ErrorCode::MalformedRequest => StatusCode::BAD_REQUEST,
            ErrorCode::StaleSelection => StatusCode::CONFLICT,
            ErrorCode::Unauthorized => StatusCode::UNAUTHORIZED,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

/// Error body returned by every endpoint: `{"code": "...", "message": "..."}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn malformed(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::MalformedRequest, message)
    }

    pub fn document_not_found(id: &str) -> Self {
        Self::new(
            ErrorCode::DocumentNotFound,
            format!("document {id} not found"),
        )
    }

    pub fn persona_not_found(id: &str) -> Self {
        Self::new(
            ErrorCode::PersonaNotFound,
            format!("persona {id} not found"),
        )
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}: {}", self.code, self.message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.code == ErrorCode::Internal {
            tracing::error!(message = %self.message, "internal error");
        }
        (self.code.status(), Json(self)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::malformed(r.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        Self::malformed(r.body_text())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::InvalidId(_) => Self::malformed(e.to_string()),
            _ => Self::new(ErrorCode::Internal, e.to_string()),
        }
    }
}

impl From<PersonaError> for ApiError {
    fn from(e: PersonaError) -> Self {
        Self::malformed(e.to_string())
    }
}

impl From<HistoryError> for ApiError {
    fn from(e: HistoryError) -> Self {
        match e {
            HistoryError::CardNotFound(_) => Self::new(ErrorCode::CardNotFound, e.to_string()),
            _ => Self::new(ErrorCode::Internal, e.to_string()),
        }
    }
}

impl From<PromptError> for ApiError {
    fn from(e: PromptError) -> Self {
        match e {
            PromptError::EmptySelection => Self::new(ErrorCode::EmptySelection, e.to_string()),
            _ => Self::new(ErrorCode::Internal, e.to_string()),
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let code = match &e {
            EngineError::EmptySelection => ErrorCode::EmptySelection,
            EngineError::SelectionOutOfBounds { .. } => ErrorCode::StaleSelection,
            EngineError::PersonaNotFound(_) => ErrorCode::PersonaNotFound,
            EngineError::InvalidParams(_) => ErrorCode::MalformedRequest,
            EngineError::Provider(_) | EngineError::EmptyFeedback => ErrorCode::ProviderError,
            EngineError::History(_) => ErrorCode::Internal,
        };
        Self::new(code, e.to_string())
    }
}
