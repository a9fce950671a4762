//! HTTP service exposing panel-ready data, and the in-process views it is
//! a thin layer over.

mod error;
pub mod http;
pub mod views;

pub use error::{ApiError, ErrorCode};
pub use http::{app, router, serve, AppState};
