//! In-repo fixture server implementing the remote logits wire protocol over
//! HTTP/1.1, backed by any local [`Backend`]. Serves as the test double for
//! remote deployments.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use tokio::net::TcpListener;
use tokio::sync::oneshot;

use crate::backends::{wire, Backend, Session};
use crate::{Error, Result};

struct ServerState {
    backend: Arc<dyn Backend>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Box<dyn Session>>>>>,
    next_id: AtomicU64,
}

fn error_response(status: StatusCode, message: &str) -> Response {
    (status, Json(wire::WireError { error: message.to_string() })).into_response()
}

async fn get_model(State(state): State<Arc<ServerState>>) -> Response {
    let desc = state.backend.descriptor();
    Json(wire::ModelInfo {
        name: desc.name,
        vocab_size: desc.vocabulary.size,
        eos_ids: desc.vocabulary.eos_ids.iter().copied().collect(),
    })
    .into_response()
}

async fn open_session(State(state): State<Arc<ServerState>>, body: String) -> Response {
    let req: wire::OpenSessionRequest = match serde_json::from_str(&body) {
        Ok(req) => req,
        Err(e) => return error_response(StatusCode::UNPROCESSABLE_ENTITY, &format!("malformed body: {e}")),
    };
    let conditioning = match B64.decode(&req.conditioning_b64) {
        Ok(bytes) => bytes,
        Err(e) => {
            return error_response(
                StatusCode::UNPROCESSABLE_ENTITY,
                &format!("bad conditioning_b64: {e}"),
            )
        }
    };
    let desc = state.backend.descriptor();
    if let Some(declared) = req.vocab_size {
        if declared != desc.vocabulary.size {
            return error_response(
                StatusCode::CONFLICT,
                &format!("vocabulary mismatch: client {declared}, server {}", desc.vocabulary.size),
            );
        }
    }
    if desc.vocabulary.validate_ids(&req.prompt).is_err() {
        return error_response(StatusCode::CONFLICT, "prompt token id out of vocabulary range");
    }
    let session = match state.backend.open_session(&req.prompt, &conditioning) {
        Ok(session) => session,
        Err(e) => return error_response(StatusCode::INTERNAL_SERVER_ERROR, &e.to_string()),
    };
    let id = format!("s{}", state.next_id.fetch_add(1, Ordering::Relaxed));
    log::info!("session {id} opened for model '{}' (prompt len {})", req.model, req.prompt.len());
    state.sessions.lock().unwrap().insert(id.clone(), Arc::new(Mutex::new(session)));
    Json(wire::OpenSessionResponse { session_id: id }).into_response()
}

async fn extend_session(State(state): State<Arc<ServerState>>, body: String) -> Response {
    let req: wire::ExtendRequest = match serde_json::from_str(&body) {
        Ok(req) => req,
        Err(e) => return error_response(StatusCode::UNPROCESSABLE_ENTITY, &format!("malformed body: {e}")),
    };
    let session = {
        let sessions = state.sessions.lock().unwrap();
        match sessions.get(&req.session_id) {
            Some(session) => session.clone(),
            None => return error_response(StatusCode::NOT_FOUND, "unknown session"),
        }
    };
    let desc = state.backend.descriptor();
    if desc.vocabulary.validate_ids(&req.tokens).is_err() {
        return error_response(StatusCode::CONFLICT, "token id out of vocabulary range");
    }
    let mut session = session.lock().unwrap();
    match session.extend_and_score(&req.tokens) {
        Ok(logits) => Json(wire::ExtendResponse { logits: wire::encode_logits(&logits) }).into_response(),
        Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, &e.to_string()),
    }
}

async fn delete_session(
    State(state): State<Arc<ServerState>>,
    Path(id): Path<String>,
) -> Response {
    match state.sessions.lock().unwrap().remove(&id) {
        Some(_) => {
            log::info!("session {id} closed");
            StatusCode::NO_CONTENT.into_response()
        }
        None => error_response(StatusCode::NOT_FOUND, "unknown session"),
    }
}

fn router(backend: Arc<dyn Backend>) -> Router {
    let state = Arc::new(ServerState {
        backend,
        sessions: Mutex::new(HashMap::new()),
        next_id: AtomicU64::new(1),
    });
    Router::new()
        .route("/v1/model", get(get_model))
        .route("/v1/session", post(open_session))
        .route("/v1/session/:id", delete(delete_session))
        .route("/v1/extend", post(extend_session))
        .with_state(state)
}

/// A fixture server running on a background thread; useful for tests and
/// spawned by `serve-fixture` in the foreground variant below.
pub struct FixtureServer {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl FixtureServer {
    /// Binds `addr` (use port 0 for an ephemeral port) and serves until
    /// dropped or [`FixtureServer::shutdown`] is called.
    pub fn spawn(backend: Arc<dyn Backend>, addr: &str) -> Result<Self> {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let listener = runtime.block_on(TcpListener::bind(addr))?;
        let local_addr = listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let app = router(backend);
        let handle = std::thread::spawn(move || {
            runtime.block_on(async move {
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await
                    .ok();
            });
        });
        Ok(Self { addr: local_addr, shutdown: Some(tx), handle: Some(handle) })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for FixtureServer {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Foreground server for the `serve-fixture` command: serves until SIGINT /
/// SIGTERM, then shuts down cleanly.
pub fn serve_blocking(backend: Arc<dyn Backend>, addr: &str) -> Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let listener = TcpListener::bind(addr).await.map_err(Error::Io)?;
        log::info!("fixture server listening on {}", listener.local_addr()?);
        axum::serve(listener, router(backend))
            .with_graceful_shutdown(shutdown_signal())
            .await
            .map_err(Error::Io)
    })
}

async fn shutdown_signal() {
    let ctrl_c = tokio::signal::ctrl_c();
    #[cfg(unix)]
    {
        let mut term = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate())
            .expect("install SIGTERM handler");
        tokio::select! {
            _ = ctrl_c => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    {
        let _ = ctrl_c.await;
    }
    log::info!("shutting down");
}
