//! REST routes, the server-push event stream and the service handle.

use std::collections::{HashMap, VecDeque};
use std::convert::Infallible;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::sync::{Arc, Mutex};

use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;
use tokio::sync::watch;

use crate::events::PushEvent;
use crate::service::{
    CatalogLoadError, CatalogSource, CreateSession, Gateway, GatewayConfig, GatewayError, Remediate, StartRun,
};

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";
pub const REPLAYED_HEADER: &str = "idempotent-replayed";
const MAX_BODY: usize = 1 << 20;

#[derive(Clone)]
pub struct AppState {
    pub gateway: Arc<Gateway>,
    idempotency: Arc<IdempotencyCache>,
    stop: watch::Receiver<bool>,
}

#[derive(Default)]
struct IdempotencyCache {
    entries: Mutex<HashMap<String, Arc<tokio::sync::Mutex<Option<Cached>>>>>,
}

#[derive(Clone)]
struct Cached {
    fingerprint: Bytes,
    status: StatusCode,
    content_type: Option<HeaderValue>,
    body: Bytes,
}

pub struct ApiError(GatewayError);

impl From<GatewayError> for ApiError {
    fn from(e: GatewayError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        error_response(
            StatusCode::from_u16(self.0.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR),
            self.0.code(),
            &self.0.to_string(),
        )
    }
}

fn error_response(status: StatusCode, code: &str, message: &str) -> Response {
    (status, Json(json!({ "error": { "code": code, "message": message } }))).into_response()
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Runs a gateway operation off the async workers; reasoner calls may block.
async fn blocking<T, F>(state: &AppState, f: F) -> ApiResult<T>
where
    F: FnOnce(&Gateway) -> Result<T, GatewayError> + Send + 'static,
    T: Send + 'static,
{
    let gw = state.gateway.clone();
    match tokio::task::spawn_blocking(move || f(&gw)).await {
        Ok(r) => r.map(Json).map_err(ApiError),
        Err(e) => Err(ApiError(GatewayError::Conflict(format!("operation panicked: {e}")))),
    }
}

/// JSON body where an empty body means the type's default.
fn parse_body<T: DeserializeOwned + Default>(body: &Bytes) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    parse_required(body)
}

fn parse_required<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError(GatewayError::BadRequest(format!("invalid JSON body: {e}"))))
}

pub fn router(gateway: Arc<Gateway>, stop: watch::Receiver<bool>) -> Router {
    let state = AppState { gateway, idempotency: Arc::new(IdempotencyCache::default()), stop };
    Router::new()
        .route("/healthz", get(healthz))
        .route("/catalog/offerings", get(offerings))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/message", post(message))
        .route("/sessions/{id}/confirm", post(confirm))
        .route("/sessions/{id}/tasks", get(tasks))
        .route("/plans/{id}", get(plan))
        .route("/runs", post(start_run))
        .route("/runs/{id}", get(run))
        .route("/runs/{id}/report", get(report))
        .route("/runs/{id}/remediate", post(remediate))
        .route("/events", get(events))
        .route("/bus/stats", get(bus_stats))
        .layer(middleware::from_fn_with_state(state.clone(), idempotency))
        .layer(middleware::from_fn_with_state(state.clone(), auth))
        .with_state(state)
}

async fn auth(State(state): State<AppState>, req: Request, next: Next) -> Response {
    let Some(token) = &state.gateway.config().token else { return next.run(req).await };
    if req.uri().path() == "/healthz" {
        return next.run(req).await;
    }
    let presented = req.headers().get(header::AUTHORIZATION).and_then(|v| v.to_str().ok());
    if presented.and_then(|v| v.strip_prefix("Bearer ")) == Some(token.as_str()) {
        next.run(req).await
    } else {
        let mut resp = error_response(StatusCode::UNAUTHORIZED, "unauthorized", "missing or invalid bearer token");
        resp.headers_mut().insert(header::WWW_AUTHENTICATE, HeaderValue::from_static("Bearer"));
        resp
    }
}

/// Replays the stored response for a repeated `Idempotency-Key` on a POST.
/// Concurrent retries with the same key wait for the first one to finish.
async fn idempotency(State(state): State<AppState>, req: Request, next: Next) -> Response {
    let key = req.headers().get(IDEMPOTENCY_HEADER).and_then(|v| v.to_str().ok()).map(str::to_string);
    let Some(key) = key.filter(|_| req.method() == Method::POST) else { return next.run(req).await };
    let scope = format!("{} {}#{key}", req.method(), req.uri().path());
    let (parts, body) = req.into_parts();
    let Ok(bytes) = axum::body::to_bytes(body, MAX_BODY).await else {
        return error_response(StatusCode::PAYLOAD_TOO_LARGE, "badRequest", "request body too large");
    };
    let slot = state.idempotency.entries.lock().unwrap_or_else(|e| e.into_inner()).entry(scope).or_default().clone();
    let mut slot = slot.lock().await;
    if let Some(c) = slot.as_ref() {
        if c.fingerprint != bytes {
            return error_response(
                StatusCode::UNPROCESSABLE_ENTITY,
                "idempotencyMismatch",
                "idempotency key was already used with a different request body",
            );
        }
        let mut resp = (c.status, c.body.clone()).into_response();
        if let Some(ct) = &c.content_type {
            resp.headers_mut().insert(header::CONTENT_TYPE, ct.clone());
        }
        resp.headers_mut().insert(REPLAYED_HEADER, HeaderValue::from_static("true"));
        return resp;
    }
    let resp = next.run(Request::from_parts(parts, Body::from(bytes.clone()))).await;
    if resp.status().is_server_error() {
        return resp;
    }
    let (parts, body) = resp.into_parts();
    let Ok(out) = axum::body::to_bytes(body, usize::MAX).await else {
        return error_response(StatusCode::INTERNAL_SERVER_ERROR, "internal", "response body unreadable");
    };
    *slot = Some(Cached {
        fingerprint: bytes,
        status: parts.status,
        content_type: parts.headers.get(header::CONTENT_TYPE).cloned(),
        body: out.clone(),
    });
    Response::from_parts(parts, Body::from(out))
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

#[derive(Deserialize)]
struct OfferingQuery {
    q: Option<String>,
}

async fn offerings(State(state): State<AppState>, Query(q): Query<OfferingQuery>) -> impl IntoResponse {
    Json(state.gateway.offerings(q.q.as_deref()))
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: CreateSession = parse_body(&body)?;
    let view = blocking(&state, move |gw| gw.create_session(req)).await?;
    Ok((StatusCode::CREATED, view).into_response())
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<crate::service::SessionView> {
    blocking(&state, move |gw| gw.session(&id)).await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MessageBody {
    text: String,
}

async fn message(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<crate::service::TurnResponse> {
    let m: MessageBody = parse_required(&body)?;
    blocking(&state, move |gw| gw.message(&id, &m.text)).await
}

#[derive(Deserialize, Default)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct ConfirmBody {
    #[serde(default)]
    confirmed_by: String,
}

async fn confirm(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<crate::service::TurnResponse> {
    let c: ConfirmBody = parse_body(&body)?;
    blocking(&state, move |gw| gw.confirm(&id, &c.confirmed_by)).await
}

async fn tasks(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<intentforge_agent::cocreation::TaskList> {
    blocking(&state, move |gw| gw.tasks(&id)).await
}

async fn plan(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let plan = state.gateway.plan(&id)?;
    let body = plan.to_canonical_json();
    Ok(([(header::CONTENT_TYPE, "application/json")], body).into_response())
}

async fn start_run(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: StartRun = parse_required(&body)?;
    let view = blocking(&state, move |gw| gw.start_run(req)).await?;
    Ok((StatusCode::CREATED, view).into_response())
}

async fn run(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<crate::service::RunView> {
    blocking(&state, move |gw| gw.run(&id)).await
}

async fn report(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<intentforge_assurance::SlaReport> {
    blocking(&state, move |gw| gw.report(&id)).await
}

async fn remediate(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<crate::service::RunView> {
    let req: Remediate = parse_required(&body)?;
    blocking(&state, move |gw| gw.remediate(&id, req)).await
}

async fn bus_stats(State(state): State<AppState>) -> Json<intentforge_bus::BusStats> {
    Json(state.gateway.bus_stats())
}

#[derive(Deserialize)]
struct EventQuery {
    cursor: Option<u64>,
    /// `false` ends the stream once the backlog has been sent.
    follow: Option<bool>,
}

struct StreamState {
    gateway: Arc<Gateway>,
    cursor: u64,
    follow: bool,
    buffer: VecDeque<PushEvent>,
    head: watch::Receiver<u64>,
    stop: watch::Receiver<bool>,
}

/// Server-sent events from `cursor` (or `Last-Event-ID`) onwards.
async fn events(
    State(state): State<AppState>,
    headers: HeaderMap,
    Query(q): Query<EventQuery>,
) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let last_id = headers.get("last-event-id").and_then(|v| v.to_str().ok()).and_then(|v| v.trim().parse().ok());
    let st = StreamState {
        head: state.gateway.events().watch(),
        gateway: state.gateway.clone(),
        cursor: q.cursor.or(last_id).unwrap_or(0),
        follow: q.follow.unwrap_or(true),
        buffer: VecDeque::new(),
        stop: state.stop.clone(),
    };
    let stream = stream::unfold(st, |mut st| async move {
        loop {
            if let Some(ev) = st.buffer.pop_front() {
                st.cursor = ev.sequence;
                return Some((Ok(sse_event(&ev)), st));
            }
            let batch = st.gateway.events().since(st.cursor);
            if !batch.is_empty() {
                st.buffer.extend(batch);
                continue;
            }
            if !st.follow || *st.stop.borrow() {
                return None;
            }
            tokio::select! {
                r = st.head.changed() => if r.is_err() { return None },
                _ = st.stop.changed() => return None,
            }
        }
    });
    Sse::new(stream).keep_alive(KeepAlive::default())
}

fn sse_event(ev: &PushEvent) -> Event {
    Event::default()
        .id(ev.sequence.to_string())
        .event(ev.kind.as_str())
        .data(serde_json::to_string(ev).expect("events serialize"))
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub host: IpAddr,
    pub port: u16,
    pub catalog: CatalogSource,
    pub gateway: GatewayConfig,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            host: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: 8080,
            catalog: CatalogSource::Fixture,
            gateway: GatewayConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("catalog rejected: {0}")]
    Catalog(#[from] CatalogLoadError),
    #[error("cannot bind {addr}: {error}")]
    Bind { addr: SocketAddr, error: std::io::Error },
}

pub struct ServiceHandle {
    pub addr: SocketAddr,
    pub gateway: Arc<Gateway>,
    stop: watch::Sender<bool>,
    task: tokio::task::JoinHandle<std::io::Result<()>>,
}

impl ServiceHandle {
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting connections, ends event streams, waits for in-flight
    /// requests, then drains the bus.
    pub async fn shutdown(self) -> std::io::Result<()> {
        self.stop.send_replace(true);
        let res = self.task.await.unwrap_or_else(|e| Err(std::io::Error::other(e)));
        self.gateway.shutdown();
        res
    }

    /// Resolves when the server exits by itself.
    pub async fn wait(self) -> std::io::Result<()> {
        let res = self.task.await.unwrap_or_else(|e| Err(std::io::Error::other(e)));
        self.gateway.shutdown();
        res
    }

    pub fn stopper(&self) -> watch::Sender<bool> {
        self.stop.clone()
    }
}

/// Loads the catalog and starts listening. Port 0 picks a free port.
pub async fn serve(config: ServeConfig) -> Result<ServiceHandle, ServeError> {
    let graph = config.catalog.load()?;
    let gateway = Arc::new(Gateway::new(graph, config.gateway));
    let addr = SocketAddr::new(config.host, config.port);
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|error| ServeError::Bind { addr, error })?;
    let addr = listener.local_addr().map_err(|error| ServeError::Bind { addr, error })?;
    let (stop, stop_rx) = watch::channel(false);
    let app = router(gateway.clone(), stop_rx.clone());
    let mut rx = stop_rx;
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async move {
                let _ = rx.wait_for(|stopped| *stopped).await;
            })
            .await
    });
    Ok(ServiceHandle { addr, gateway, stop, task })
}
