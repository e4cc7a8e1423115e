use std::convert::Infallible;
use std::sync::Arc;
use std::time::Duration;

use axum::body::{Body, Bytes};
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use daq_core::acquisition::{AcquisitionConfig, FieldError, Next};
use tokio::sync::mpsc;

use crate::state::{Ack, Service, Status};
use crate::ApiError;

pub const NDJSON: &str = "application/x-ndjson";

// How often an idle stream checks whether its client is still there.
const IDLE_CHECK: Duration = Duration::from_millis(250);

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/status", get(status))
        .route("/config", get(get_config).put(put_config))
        .route("/acquisition/start", post(start))
        .route("/acquisition/stop", post(stop))
        .route("/stream", get(stream))
        .route("/log", get(latest_log))
        .with_state(service)
}

async fn status(State(svc): State<Arc<Service>>) -> Json<Status> {
    Json(svc.status())
}

async fn get_config(State(svc): State<Arc<Service>>) -> Json<AcquisitionConfig> {
    Json(svc.config())
}

async fn put_config(
    State(svc): State<Arc<Service>>,
    body: Bytes,
) -> Result<Json<AcquisitionConfig>, ApiError> {
    let cfg: AcquisitionConfig = serde_json::from_slice(&body).map_err(|e| {
        ApiError::Invalid(vec![FieldError {
            field: "body".into(),
            message: e.to_string(),
        }])
    })?;
    blocking(move || svc.put_config(cfg)).await.map(Json)
}

async fn start(State(svc): State<Arc<Service>>) -> Result<Json<Ack>, ApiError> {
    blocking(move || svc.start()).await.map(Json)
}

async fn stop(State(svc): State<Arc<Service>>) -> Result<Json<Ack>, ApiError> {
    blocking(move || svc.stop()).await.map(Json)
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

/// One JSON record per line, from the moment of connection on. The
/// subscription lives on a blocking thread and ends when the client goes.
async fn stream(State(svc): State<Arc<Service>>) -> Response {
    let mut sub = svc.subscribe();
    let (tx, rx) = mpsc::channel::<Bytes>(256);
    tokio::task::spawn_blocking(move || loop {
        match sub.next_timeout(IDLE_CHECK) {
            Next::Record(r) => {
                let mut line = match serde_json::to_vec(&*r) {
                    Ok(l) => l,
                    Err(e) => {
                        log::error!("record serialization failed: {e}");
                        continue;
                    }
                };
                line.push(b'\n');
                if tx.blocking_send(Bytes::from(line)).is_err() {
                    break;
                }
            }
            Next::Timeout if tx.is_closed() => break,
            Next::Timeout => {}
            Next::Closed => break,
        }
    });
    let body = futures::stream::unfold(rx, |mut rx| async move {
        rx.recv().await.map(|b| (Ok::<_, Infallible>(b), rx))
    });
    ([(header::CONTENT_TYPE, NDJSON)], Body::from_stream(body)).into_response()
}

async fn latest_log(State(svc): State<Arc<Service>>) -> Result<Response, ApiError> {
    let path = svc
        .latest_log()
        .ok_or_else(|| ApiError::NotFound("no log written yet".into()))?;
    let data = tokio::fs::read(&path)
        .await
        .map_err(|e| ApiError::Internal(format!("{}: {e}", path.display())))?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], data).into_response())
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let code = match &self {
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::BadGateway(_) => StatusCode::BAD_GATEWAY,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let body = match &self {
            ApiError::Invalid(errors) => serde_json::json!({ "error": self.to_string(), "errors": errors }),
            _ => serde_json::json!({ "error": self.to_string() }),
        };
        (code, Json(body)).into_response()
    }
}
