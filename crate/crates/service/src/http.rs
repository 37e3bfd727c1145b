// SPDX-License-Identifier: Apache-2.0

//! HTTP surface.
//!
//! | Method | Path                         | Body                         | Success                     |
//! |--------|------------------------------|------------------------------|-----------------------------|
//! | POST   | `/attest`                    | CMW, CBOR or JSON by type    | 200, signed result (CBOR)   |
//! | GET    | `/verifier-key`              |                              | 200, hex Ed25519 public key |
//! | GET    | `/metrics`                   |                              | 200, JSON                   |
//! | POST   | `/admin/policies`            | policy TOML                  | 200, `{"policy_id"}`        |
//! | POST   | `/admin/reference-values`    | TOML, or JSON by type        | 200, `{"installed"}`        |
//! | POST   | `/admin/trust-store/reload`  |                              | 200, `{"signers"}`          |
//! | POST   | `/admin/cache/clear`         |                              | 200, `{}`                   |
//!
//! Errors carry a JSON body `{"code", "detail"}`. Admin routes require
//! `Authorization: Bearer <admin_token>` and answer 401 otherwise, including
//! when no token is configured. The token travels in clear text, so the
//! admin surface belongs on a trusted network or behind a TLS proxy.
//!
//! `/attest` responses carry `x-trustmee-timing` (stage microseconds, see
//! `StageTimings::to_header`) and `x-trustmee-source` (how the component
//! was resolved).

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{DefaultBodyLimit, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde_json::json;
use tokio::sync::oneshot;
use trustmee_core::cmw::Format;
use trustmee_core::ear::MEDIA_TYPE_EAR;

use crate::verifier::{AdminError, AttestError, Verifier};

pub const HEADER_TIMING: &str = "x-trustmee-timing";
pub const HEADER_SOURCE: &str = "x-trustmee-source";

fn error(status: u16, code: &str, detail: impl std::fmt::Display) -> Response {
    let status = StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (status, axum::Json(json!({ "code": code, "detail": detail.to_string() }))).into_response()
}

fn attest_error(e: &AttestError) -> Response {
    error(e.status(), e.code(), e)
}

fn admin_error(e: &AdminError) -> Response {
    error(e.status(), e.code(), e)
}

fn content_type(headers: &HeaderMap) -> Option<&str> {
    headers.get(header::CONTENT_TYPE).and_then(|v| v.to_str().ok())
}

/// Reads at most `limit` bytes; `Err` carries a ready 413 response.
async fn read_body(body: Body, limit: usize) -> Result<Bytes, Response> {
    axum::body::to_bytes(body, limit).await.map_err(|_| {
        let e = AttestError::TooLarge { len: limit + 1, limit };
        error(413, e.code(), format!("request body exceeds limit of {limit} bytes"))
    })
}

async fn attest(State(v): State<Arc<Verifier>>, req: Request) -> Response {
    let format = match content_type(req.headers()) {
        None => Format::Cbor,
        Some(ct) => match Format::from_media_type(ct) {
            Some(f) => f,
            None => return error(415, "unsupported_media_type", format!("unsupported content type {ct:?}")),
        },
    };
    let body = match read_body(req.into_body(), v.max_request_bytes()).await {
        Ok(b) => b,
        Err(resp) => return resp,
    };
    let verifier = v.clone();
    let outcome = tokio::task::spawn_blocking(move || verifier.attest(&body, format)).await;
    match outcome {
        Ok(Ok(a)) => {
            let mut resp = (StatusCode::OK, a.encoded).into_response();
            let h = resp.headers_mut();
            h.insert(header::CONTENT_TYPE, HeaderValue::from_static(MEDIA_TYPE_EAR));
            if let Ok(t) = HeaderValue::from_str(&a.timings.to_header()) {
                h.insert(HEADER_TIMING, t);
            }
            h.insert(HEADER_SOURCE, HeaderValue::from_static(a.source.as_str()));
            resp
        }
        Ok(Err(e)) => attest_error(&e),
        Err(join) => {
            tracing::error!(error = %join, "attestation task failed");
            attest_error(&AttestError::Internal("attestation task failed".into()))
        }
    }
}

async fn verifier_key(State(v): State<Arc<Verifier>>) -> String {
    hex::encode(v.public_key())
}

async fn metrics(State(v): State<Arc<Verifier>>) -> Response {
    axum::Json(v.metrics()).into_response()
}

fn authorized(v: &Verifier, headers: &HeaderMap) -> bool {
    let Some(expected) = v.admin_token() else { return false };
    let presented = headers
        .get(header::AUTHORIZATION)
        .and_then(|h| h.to_str().ok())
        .and_then(|h| h.strip_prefix("Bearer "));
    // Constant-time comparison of equal-length tokens.
    presented.is_some_and(|p| {
        p.len() == expected.len() && p.bytes().zip(expected.bytes()).fold(0u8, |acc, (a, b)| acc | (a ^ b)) == 0
    })
}

fn unauthorized() -> Response {
    let mut r = error(401, "unauthorized", "missing or invalid admin token");
    r.headers_mut().insert(header::WWW_AUTHENTICATE, HeaderValue::from_static("Bearer"));
    r
}

async fn admin_text(v: &Verifier, headers: &HeaderMap, body: Body) -> Result<String, Response> {
    if !authorized(v, headers) {
        return Err(unauthorized());
    }
    let bytes = read_body(body, v.max_request_bytes()).await?;
    String::from_utf8(bytes.to_vec()).map_err(|_| admin_error(&AdminError::BadInput("body is not UTF-8".into())))
}

async fn admin_policies(State(v): State<Arc<Verifier>>, req: Request) -> Response {
    let (parts, body) = req.into_parts();
    let text = match admin_text(&v, &parts.headers, body).await {
        Ok(t) => t,
        Err(r) => return r,
    };
    match v.install_policy(&text) {
        Ok(id) => axum::Json(json!({ "policy_id": id })).into_response(),
        Err(e) => admin_error(&e),
    }
}

async fn admin_reference_values(State(v): State<Arc<Verifier>>, req: Request) -> Response {
    let (parts, body) = req.into_parts();
    let json = content_type(&parts.headers).is_some_and(|ct| ct.starts_with("application/json"));
    let text = match admin_text(&v, &parts.headers, body).await {
        Ok(t) => t,
        Err(r) => return r,
    };
    match v.install_reference_values(&text, json) {
        Ok(n) => axum::Json(json!({ "installed": n })).into_response(),
        Err(e) => admin_error(&e),
    }
}

async fn admin_reload(State(v): State<Arc<Verifier>>, headers: HeaderMap) -> Response {
    if !authorized(&v, &headers) {
        return unauthorized();
    }
    let verifier = v.clone();
    match tokio::task::spawn_blocking(move || verifier.reload_trust_store()).await {
        Ok(Ok(n)) => axum::Json(json!({ "signers": n })).into_response(),
        Ok(Err(e)) => admin_error(&e),
        Err(_) => error(500, "internal", "reload task failed"),
    }
}

async fn admin_cache_clear(State(v): State<Arc<Verifier>>, headers: HeaderMap) -> Response {
    if !authorized(&v, &headers) {
        return unauthorized();
    }
    v.clear_caches();
    axum::Json(json!({})).into_response()
}

pub fn router(verifier: Arc<Verifier>) -> Router {
    Router::new()
        .route("/attest", post(attest))
        .route("/verifier-key", get(verifier_key))
        .route("/metrics", get(metrics))
        .route("/admin/policies", post(admin_policies))
        .route("/admin/reference-values", post(admin_reference_values))
        .route("/admin/trust-store/reload", post(admin_reload))
        .route("/admin/cache/clear", post(admin_cache_clear))
        // Bodies are bounded by the handlers so the 413 carries a structured error.
        .layer(DefaultBodyLimit::disable())
        .with_state(verifier)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    verifier: Arc<Verifier>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(verifier)).with_graceful_shutdown(shutdown).await
}

/// A service running on its own runtime thread; stops when dropped.
pub struct ServiceHandle {
    addr: SocketAddr,
    verifier: Arc<Verifier>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ServiceHandle {
    pub fn start(verifier: Arc<Verifier>, addr: SocketAddr) -> std::io::Result<Self> {
        let listener = std::net::TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let v = verifier.clone();
        let thread = std::thread::Builder::new().name(format!("trustmee-service-{}", addr.port())).spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().expect("tokio runtime");
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener).expect("listener");
                tokio::select! {
                    r = axum::serve(listener, router(v)) => {
                        if let Err(e) = r {
                            tracing::error!(error = %e, "service stopped");
                        }
                    }
                    _ = rx => {}
                }
            });
            rt.shutdown_background();
        })?;
        Ok(ServiceHandle { addr, verifier, shutdown: Some(tx), thread: Some(thread) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }

    pub fn verifier(&self) -> &Arc<Verifier> {
        &self.verifier
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
