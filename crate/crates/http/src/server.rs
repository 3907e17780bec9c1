use std::io;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use reqgate_core::registry::{ApiResponse, Endpoint, RegistryService, LOGIN_PATH, STATUS_REDIRECT};
use tokio::net::TcpListener;
use tokio::sync::oneshot;

type Shared = Arc<RegistryService>;

fn into_response(resp: ApiResponse) -> Response {
    let status = StatusCode::from_u16(resp.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    let mut out = (status, Json(resp.body)).into_response();
    if resp.status == STATUS_REDIRECT {
        out.headers_mut()
            .insert(header::LOCATION, HeaderValue::from_static(LOGIN_PATH));
    }
    out
}

fn authorization(headers: &HeaderMap) -> Option<&str> {
    headers.get(header::AUTHORIZATION).and_then(|v| v.to_str().ok())
}

async fn validation(State(svc): State<Shared>, headers: HeaderMap, body: Bytes) -> Response {
    into_response(svc.handle_validation(authorization(&headers), &body))
}

async fn aggregation(State(svc): State<Shared>, headers: HeaderMap, body: Bytes) -> Response {
    into_response(svc.handle_aggregation(authorization(&headers), &body))
}

async fn counters(State(svc): State<Shared>) -> Response {
    Json(svc.snapshot_counters()).into_response()
}

async fn login() -> &'static str {
    "login required\n"
}

/// Routes for the two rule endpoints, the counter probe and the login stub.
pub fn router(service: Shared) -> Router {
    Router::new()
        .route(Endpoint::Validation.path(), post(validation))
        .route(Endpoint::Aggregation.path(), post(aggregation))
        .route("/api/counters", get(counters))
        .route(LOGIN_PATH, get(login))
        .with_state(service)
}

fn runtime() -> io::Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build()
}

/// Serves until the process is stopped.
pub fn serve_forever(service: Shared, addr: SocketAddr) -> io::Result<()> {
    runtime()?.block_on(async move {
        let listener = TcpListener::bind(addr).await?;
        log::info!("listening on {}", listener.local_addr()?);
        axum::serve(listener, router(service)).await
    })
}

/// A server on a background thread; stops when dropped.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<io::Result<()>>>,
}

impl ServerHandle {
    pub fn start(service: Shared, addr: SocketAddr) -> io::Result<Self> {
        let rt = runtime()?;
        let listener = rt.block_on(TcpListener::bind(addr))?;
        let addr = listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            rt.block_on(async move {
                axum::serve(listener, router(service))
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await
            })
        });
        Ok(Self {
            addr,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            match t.join() {
                Ok(Err(e)) => log::warn!("server exited with {e}"),
                Err(_) => log::warn!("server thread panicked"),
                Ok(Ok(())) => {}
            }
        }
    }
}
