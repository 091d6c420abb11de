//! HTTP/1.1 binding of [`Service::route`] with permissive CORS.

use std::future::Future;
use std::sync::{Arc, OnceLock};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderValue, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::Router;
use tokio::net::TcpListener;

use super::Service;

pub const DEFAULT_PORT: u16 = 8080;

/// Shared handler state. Until a service is installed every route answers
/// 503, which lets the listener come up before the skill has loaded.
#[derive(Clone)]
pub struct AppState {
    service: Arc<OnceLock<Arc<Service>>>,
    cors_origin: HeaderValue,
}

impl AppState {
    pub fn pending(cors_origin: &str) -> Self {
        AppState {
            service: Arc::new(OnceLock::new()),
            cors_origin: HeaderValue::from_str(cors_origin)
                .unwrap_or(HeaderValue::from_static("*")),
        }
    }

    pub fn ready(service: Arc<Service>, cors_origin: &str) -> Self {
        let state = Self::pending(cors_origin);
        state.install(service);
        state
    }

    /// Returns false if a service was already installed.
    pub fn install(&self, service: Arc<Service>) -> bool {
        self.service.set(service).is_ok()
    }
}

pub fn app(state: AppState) -> Router {
    Router::new().fallback(handle).with_state(state)
}

async fn handle(State(state): State<AppState>, method: Method, uri: Uri, body: Bytes) -> Response {
    let mut response = if method == Method::OPTIONS {
        StatusCode::NO_CONTENT.into_response()
    } else {
        match state.service.get().cloned() {
            None => json_response(
                503,
                br#"{"code":503,"error":"skill is still loading"}"#.to_vec(),
            ),
            Some(service) => {
                let path = uri.path().to_string();
                let routed = tokio::task::spawn_blocking(move || {
                    service.route(method.as_str(), &path, &body)
                })
                .await;
                match routed {
                    Ok(r) => json_response(r.status, r.body),
                    Err(_) => {
                        json_response(500, br#"{"code":500,"error":"handler failed"}"#.to_vec())
                    }
                }
            }
        }
    };
    let headers = response.headers_mut();
    headers.insert(
        header::ACCESS_CONTROL_ALLOW_ORIGIN,
        state.cors_origin.clone(),
    );
    headers.insert(
        header::ACCESS_CONTROL_ALLOW_METHODS,
        HeaderValue::from_static("GET, POST, DELETE, OPTIONS"),
    );
    headers.insert(
        header::ACCESS_CONTROL_ALLOW_HEADERS,
        HeaderValue::from_static("content-type"),
    );
    response
}

fn json_response(status: u16, body: Vec<u8>) -> Response {
    let status = StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    if body.is_empty() {
        return status.into_response();
    }
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

pub async fn serve(
    listener: TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, app(state))
        .with_graceful_shutdown(shutdown)
        .await
}
