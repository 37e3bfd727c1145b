// SPDX-License-Identifier: Apache-2.0

//! In-process HTTP server for registry and collateral fixtures.
//!
//! Serves fixed byte bodies by path, counts hits per path, and can delay
//! every response to make network cost measurable.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{StatusCode, Uri};
use axum::response::IntoResponse;
use parking_lot::{Mutex, RwLock};
use tokio::sync::oneshot;

#[derive(Default)]
struct Shared {
    routes: RwLock<HashMap<String, Bytes>>,
    hits: Mutex<HashMap<String, u64>>,
    delay: RwLock<Duration>,
}

pub struct FixtureServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

/// Registry path for a component name and tag.
pub fn registry_path(name: &str, tag: &str) -> String {
    format!("/v1/components/{name}/{tag}")
}

async fn serve(State(shared): State<Arc<Shared>>, uri: Uri) -> impl IntoResponse {
    let path = uri.path().to_owned();
    *shared.hits.lock().entry(path.clone()).or_default() += 1;
    let delay = *shared.delay.read();
    if !delay.is_zero() {
        tokio::time::sleep(delay).await;
    }
    let body = shared.routes.read().get(&path).cloned();
    match body {
        Some(b) => (StatusCode::OK, b).into_response(),
        None => (StatusCode::NOT_FOUND, "not found").into_response(),
    }
}

impl FixtureServer {
    /// Binds an ephemeral port on 127.0.0.1.
    pub fn start(delay: Duration) -> std::io::Result<Self> {
        let listener = std::net::TcpListener::bind("127.0.0.1:0")?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared { delay: RwLock::new(delay), ..Default::default() });
        let (tx, rx) = oneshot::channel::<()>();
        let app = axum::Router::new().fallback(serve).with_state(shared.clone());
        let thread = std::thread::Builder::new().name(format!("fixture-server-{}", addr.port())).spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()
                .expect("tokio runtime");
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener).expect("listener");
                tokio::select! {
                    _ = axum::serve(listener, app) => {}
                    _ = rx => {}
                }
            });
            // Open keep-alive connections must not hold up shutdown.
            rt.shutdown_background();
        })?;
        Ok(FixtureServer { addr, shared, shutdown: Some(tx), thread: Some(thread) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// `127.0.0.1:<port>`, the authority part of registry references.
    pub fn authority(&self) -> String {
        self.addr.to_string()
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }

    pub fn put(&self, path: &str, body: impl Into<Bytes>) {
        self.shared.routes.write().insert(path.to_owned(), body.into());
    }

    pub fn remove(&self, path: &str) {
        self.shared.routes.write().remove(path);
    }

    /// Publishes a component under `reg://<authority>/<name>:<tag>` and
    /// returns that reference.
    pub fn publish(&self, name: &str, tag: &str, module: impl Into<Bytes>) -> String {
        self.put(&registry_path(name, tag), module);
        format!("reg://{}/{name}:{tag}", self.authority())
    }

    pub fn set_delay(&self, delay: Duration) {
        *self.shared.delay.write() = delay;
    }

    pub fn hits(&self, path: &str) -> u64 {
        self.shared.hits.lock().get(path).copied().unwrap_or(0)
    }

    pub fn total_hits(&self) -> u64 {
        self.shared.hits.lock().values().sum()
    }

    pub fn reset_hits(&self) {
        self.shared.hits.lock().clear();
    }
}

impl Drop for FixtureServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
