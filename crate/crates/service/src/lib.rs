//! Long-running dialogue service. Clients talk JSON messages over a
//! WebSocket; every session's transcript is written to its own file.

pub mod config;
pub mod protocol;
pub mod registry;
pub mod server;

use dialschema::pack::PackDiagnostic;
use dialschema::session::SessionError;
use thiserror::Error;

pub use config::ServiceConfig;
pub use protocol::{ErrorCode, Resume, WireMessage, PROTOCOL_VERSION};
pub use registry::Registry;
pub use server::{serve, start, RunningService};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("pack failed validation ({} diagnostic(s))", .0.len())]
    PackValidationFailed(Vec<PackDiagnostic>),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("session {0} is read-only")]
    ReadOnly(String),
    #[error("sequence number {seq} is not after {last}")]
    Replay { seq: u64, last: u64 },
    #[error("bad token")]
    Unauthorized,
    #[error("bad message: {0}")]
    BadMessage(String),
    #[error("persistence: {0}")]
    Persistence(String),
    #[error("cannot listen: {0}")]
    Bind(String),
    #[error(transparent)]
    Session(#[from] SessionError),
}

impl ServiceError {
    pub fn code(&self) -> ErrorCode {
        match self {
            ServiceError::UnknownSession(_) => ErrorCode::UnknownSession,
            ServiceError::ReadOnly(_) => ErrorCode::ReadOnly,
            ServiceError::Replay { .. } => ErrorCode::Replay,
            ServiceError::Unauthorized => ErrorCode::Unauthorized,
            ServiceError::BadMessage(_) => ErrorCode::BadMessage,
            ServiceError::Session(SessionError::SessionClosed) => ErrorCode::SessionClosed,
            _ => ErrorCode::Internal,
        }
    }
}
