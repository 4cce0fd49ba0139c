//! JSON error responses shared by every role.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use gridplan_core::pathfinder::PathError;
use gridplan_core::solver::SolveError;
use serde_json::{json, Value};

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: Value,
}

impl ApiError {
    pub fn new(status: StatusCode, kind: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: json!({"error": kind, "message": message.into()}),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "BadRequest", message)
    }

    pub fn graph_unavailable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, "GraphUnavailable", message)
    }
}

impl From<PathError> for ApiError {
    fn from(e: PathError) -> Self {
        let status = match e {
            PathError::UnknownNode { .. } => StatusCode::NOT_FOUND,
            PathError::Unreachable { .. } | PathError::NoNodeInRange { .. } => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError {
            status,
            body: serde_json::to_value(&e).expect("error serializes"),
        }
    }
}

impl From<SolveError> for ApiError {
    fn from(e: SolveError) -> Self {
        let status = match e {
            SolveError::InvalidRequest { .. } => StatusCode::BAD_REQUEST,
            SolveError::UnknownNode { .. } => StatusCode::NOT_FOUND,
            SolveError::NoNodeInRange { .. } | SolveError::UnreachableTargets { .. } | SolveError::Infeasible { .. } => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            SolveError::PathServiceUnavailable { .. } => StatusCode::SERVICE_UNAVAILABLE,
        };
        ApiError {
            status,
            body: serde_json::to_value(&e).expect("error serializes"),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

/// Serializes `value` as the response body with status 200.
pub fn json_bytes<T: serde::Serialize>(value: &T) -> Response {
    let body = serde_json::to_vec(value).expect("response serializes");
    ([(axum::http::header::CONTENT_TYPE, "application/json")], body).into_response()
}
