use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use mg_core::{Error, SchemeError};
use serde::{Deserialize, Serialize};

/// JSON error body shared by every service.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remediation: Option<SchemeError>,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody { code: code.to_owned(), message: message.into(), remediation: None },
        }
    }

    pub fn with_remediation(mut self, remediation: SchemeError) -> Self {
        self.body.remediation = Some(remediation);
        self
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn unauthorized() -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing, invalid or expired token")
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

/// Status and code for core errors surfaced through an HTTP API.
impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::EmptyPayload | Error::MalformedArmor => (StatusCode::BAD_REQUEST, "malformed_armor"),
            Error::InvalidPackage(_) => (StatusCode::BAD_REQUEST, "invalid_package"),
            Error::InvalidIdentity(_) => (StatusCode::BAD_REQUEST, "invalid_identity"),
            Error::InvalidInput(_) | Error::EmptyPassword => (StatusCode::BAD_REQUEST, "bad_request"),
            Error::UnknownScheme(_) => (StatusCode::BAD_REQUEST, "unknown_scheme"),
            Error::SchemeMismatch { .. } => (StatusCode::BAD_REQUEST, "scheme_mismatch"),
            Error::Unsupported(_) => (StatusCode::BAD_REQUEST, "unsupported"),
            Error::WrongPassword => (StatusCode::UNAUTHORIZED, "wrong_password"),
            Error::PasswordRequired(_) => (StatusCode::UNPROCESSABLE_ENTITY, "password_required"),
            Error::FingerprintMismatch(_) | Error::NoMatchingKey => (StatusCode::UNPROCESSABLE_ENTITY, "no_matching_key"),
            Error::IntegrityFailure => (StatusCode::UNPROCESSABLE_ENTITY, "integrity_failure"),
            Error::BadSignature => (StatusCode::UNPROCESSABLE_ENTITY, "bad_signature"),
            Error::UnknownRecipient(_) => (StatusCode::NOT_FOUND, "unknown_recipient"),
            Error::UnknownKeySystem(_) => (StatusCode::NOT_FOUND, "unknown_key_system"),
            Error::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            Error::NotOwner(_) => (StatusCode::FORBIDDEN, "not_owner"),
            Error::Exists(_) => (StatusCode::CONFLICT, "exists"),
            Error::PayloadTooLarge { .. } => (StatusCode::PAYLOAD_TOO_LARGE, "payload_too_large"),
            Error::ServerUnreachable(_) | Error::Remote(_) => (StatusCode::BAD_GATEWAY, "upstream"),
            Error::CorruptStore(_) | Error::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

pub type ApiResult<T> = std::result::Result<T, ApiError>;
