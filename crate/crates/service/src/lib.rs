//! HTTP control and live streaming for the acquisition engine.
//!
//! | method | path                 | body / response                         |
//! |--------|----------------------|-----------------------------------------|
//! | GET    | `/status`            | phase and session counters              |
//! | GET    | `/config`            | current acquisition config              |
//! | PUT    | `/config`            | new config; 409 while acquiring, 422    |
//! | POST   | `/acquisition/start` | 409 unless idle, 502 if device is down  |
//! | POST   | `/acquisition/stop`  | 409 when idle                           |
//! | GET    | `/stream`            | NDJSON sample records                   |
//! | GET    | `/log`               | latest CSV log                          |

use std::sync::Arc;

use daq_core::acquisition::FieldError;
use thiserror::Error;

mod config;
mod http;
mod state;

pub use config::{DeviceEndpoint, ServiceConfig};
pub use http::{router, NDJSON};
pub use state::{Ack, Phase, Service, Status};

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{0}")]
    Conflict(String),
    #[error("invalid configuration")]
    Invalid(Vec<FieldError>),
    #[error("device unreachable: {0}")]
    BadGateway(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Internal(String),
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("config: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Binds `cfg.listen` and serves until `shutdown` resolves, then stops any
/// running session.
pub async fn serve(
    cfg: ServiceConfig,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    let listener = tokio::net::TcpListener::bind(&cfg.listen).await?;
    log::info!("listening on {}", listener.local_addr()?);
    serve_on(listener, Service::new(cfg), shutdown).await
}

pub async fn serve_on(
    listener: tokio::net::TcpListener,
    service: Arc<Service>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    let app = router(Arc::clone(&service));
    // Streams only end once the buffer closes, so stop the service before
    // waiting for connections to drain.
    let shutdown = async move {
        shutdown.await;
        tokio::task::spawn_blocking(move || service.shutdown()).await.ok();
    };
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await?;
    Ok(())
}
