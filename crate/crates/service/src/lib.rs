//! HTTP service and offline tooling around `persona-feedback-core`.

pub mod api;
pub mod commands;
pub mod config;
pub mod error;
pub mod store;

pub use api::{router, AppState};
pub use config::{ProviderKind, ServiceConfig};
pub use error::{ApiError, ErrorCode};
