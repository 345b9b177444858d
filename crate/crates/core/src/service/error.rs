use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("unknown study {0}")]
    UnknownStudy(String),
    #[error("unknown tuple {0}")]
    UnknownTuple(String),
    #[error("{message}")]
    Invalid { field: String, message: String },
    #[error("annotator {annotator} already answered tuple {tuple}")]
    Duplicate { annotator: String, tuple: String },
    #[error("tuple {0} was not served to this annotator")]
    NotServed(String),
    #[error("assignment of tuple {0} has expired")]
    Expired(String),
    #[error("tuple {0} already has all its annotations")]
    QuotaMet(String),
    #[error("study is not complete; request provisional scores instead")]
    Incomplete,
    #[error("{0}")]
    Storage(String),
}

impl ServiceError {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        ServiceError::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownStudy(_) => "unknown_study",
            ServiceError::UnknownTuple(_) => "unknown_tuple",
            ServiceError::Invalid { .. } => "invalid",
            ServiceError::Duplicate { .. } => "duplicate",
            ServiceError::NotServed(_) => "not_served",
            ServiceError::Expired(_) => "expired",
            ServiceError::QuotaMet(_) => "quota_met",
            ServiceError::Incomplete => "incomplete",
            ServiceError::Storage(_) => "storage",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::UnknownStudy(_) | ServiceError::UnknownTuple(_) => StatusCode::NOT_FOUND,
            ServiceError::Invalid { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Duplicate { .. }
            | ServiceError::NotServed(_)
            | ServiceError::QuotaMet(_)
            | ServiceError::Incomplete => StatusCode::CONFLICT,
            ServiceError::Expired(_) => StatusCode::GONE,
            ServiceError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn field(&self) -> Option<String> {
        match self {
            ServiceError::Invalid { field, .. } => Some(field.clone()),
            ServiceError::UnknownTuple(_) | ServiceError::NotServed(_) | ServiceError::Expired(_) | ServiceError::QuotaMet(_) => {
                Some("tuple_id".into())
            }
            ServiceError::Duplicate { .. } => Some("tuple_id".into()),
            _ => None,
        }
    }
}

impl From<crate::error::Error> for ServiceError {
    fn from(e: crate::error::Error) -> Self {
        if e.is_io() {
            ServiceError::Storage(e.to_string())
        } else {
            ServiceError::invalid("request", e.to_string())
        }
    }
}

/// Error body returned by every endpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub field: Option<String>,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            code: self.code().to_string(),
            message: self.to_string(),
            field: self.field(),
        };
        (self.status(), Json(body)).into_response()
    }
}
