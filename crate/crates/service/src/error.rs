use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;

use gicoord_api::{code, ErrorBody};
use gicoord_core::Error;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: code.into(),
                message: message.into(),
                violations: Vec::new(),
                threads: Vec::new(),
                current_version: None,
            },
        }
    }

    pub fn conflict(current: u64, expected: u64) -> Self {
        let mut e = Self::new(
            StatusCode::CONFLICT,
            code::VERSION_CONFLICT,
            format!("expected version {expected}, session is at {current}"),
        );
        e.body.current_version = Some(current);
        e
    }

    pub fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code::NOT_FOUND, what)
    }

    pub fn precondition(what: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, code::PRECONDITION, what)
    }

    pub fn bad_request(what: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code::BAD_REQUEST, what)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::Validation(v) => {
                let mut out = Self::new(StatusCode::UNPROCESSABLE_ENTITY, code::VALIDATION, message);
                out.body.violations = v;
                out
            }
            Error::Infeasible { threads } => {
                let mut out = Self::new(StatusCode::UNPROCESSABLE_ENTITY, code::INFEASIBLE, message);
                out.body.threads = threads;
                out
            }
            Error::ReplanRequired { threads } => {
                let mut out = Self::new(StatusCode::CONFLICT, code::REPLAN_REQUIRED, message);
                out.body.threads = threads;
                out
            }
            Error::StaleDecision(_) | Error::Staleness => Self::new(StatusCode::CONFLICT, code::STALE, message),
            Error::Conflict(..) => Self::new(StatusCode::CONFLICT, code::CONFLICT, message),
            Error::Contract(_) | Error::Size(_) | Error::Parse { .. } | Error::Version(_) | Error::Ordering { .. } => {
                Self::new(StatusCode::BAD_REQUEST, code::BAD_REQUEST, message)
            }
            Error::Livelock(_) => Self::new(StatusCode::INTERNAL_SERVER_ERROR, code::INTERNAL, message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
