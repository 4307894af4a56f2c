//! Session service: runs live sessions on their own threads and exposes them
//! over HTTP and WebSocket. Also home to the HTTP advisor backend and a stub
//! completion server for testing it.

pub mod driver;
pub mod http_advisor;
pub mod metrics;
pub mod service;
pub mod stub;
pub mod wire;

use axum::http::StatusCode;
use cmdr_core::session::SessionError;

pub use driver::SessionHandle;
pub use http_advisor::HttpAdvisor;
pub use service::{build_advisor, merge_json, CreateSession, Created, Service, ServiceConfig};
pub use stub::{StubAdvisorServer, StubOptions, StubReply};
pub use wire::{WireMessage, WireType};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("session driver has stopped")]
    Closed,
    #[error("i/o error: {0}")]
    Io(String),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownSession(_) => "unknown_session",
            ServiceError::Session(e) => error_code(e),
            ServiceError::Closed => "session_closed",
            ServiceError::Io(_) => "io",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ServiceError::Session(SessionError::Internal(_)) | ServiceError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            ServiceError::Session(SessionError::Advisor(_)) => StatusCode::BAD_GATEWAY,
            ServiceError::Session(
                SessionError::SessionEnded | SessionError::AdvisorBusy | SessionError::StaleProposal(_),
            )
            | ServiceError::Closed => StatusCode::CONFLICT,
            ServiceError::Session(_) => StatusCode::BAD_REQUEST,
        }
    }
}

/// Stable snake_case code for a session error, used in `error` frames and
/// HTTP error bodies.
pub fn error_code(e: &SessionError) -> &'static str {
    e.code()
}
