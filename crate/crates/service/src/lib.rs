//! Command line and HTTP front end for hullpaint.
//!
//! The command line covers batch use (`fit`, `edit`, `render`,
//! `hull-preview`); `serve` starts the HTTP service that backs the
//! annotation UI. See [`server`] for the endpoints.

pub mod cli;
pub mod error;
pub mod jobs;
pub mod server;

pub use error::{ServiceError, ServiceResult};
pub use server::{router, AppState, RunningService, ServiceConfig};
