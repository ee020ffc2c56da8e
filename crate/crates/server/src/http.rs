//! HTTP+JSON control plane and the WebSocket streaming endpoint.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::{FromRequestParts, Path, Query, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use gaitway_core::protocol::encode;
use gaitway_core::store::track_to_csv;
use serde::de::DeserializeOwned;
use serde::Serialize;
use tokio::sync::mpsc::unbounded_channel;
use tower_http::services::ServeDir;
use tracing::debug;

use crate::error::ApiError;
use crate::service::{LabelRequest, LoginRequest, MarkRequest, NewParticipant, NewSession, RunStatus, SegmentRequest, Service, SyncRequest, TrainRequest};

/// Every route of the API as (method, path). The CLI parity test checks
/// that each one is reachable from a subcommand.
pub const ENDPOINTS: &[(&str, &str)] = &[
    ("POST", "/api/v1/login"),
    ("GET", "/api/v1/participants"),
    ("POST", "/api/v1/participants"),
    ("POST", "/api/v1/participants/{id}/label"),
    ("GET", "/api/v1/sessions"),
    ("POST", "/api/v1/sessions"),
    ("GET", "/api/v1/sessions/{id}"),
    ("POST", "/api/v1/sessions/{id}/record"),
    ("POST", "/api/v1/sessions/{id}/stop"),
    ("GET", "/api/v1/sessions/{id}/track"),
    ("POST", "/api/v1/sessions/{id}/sync"),
    ("POST", "/api/v1/sessions/{id}/segments"),
    ("POST", "/api/v1/sessions/{id}/marks"),
    ("GET", "/api/v1/sessions/{id}/features"),
    ("GET", "/api/v1/sessions/{id}/dashboard"),
    ("GET", "/api/v1/overlay"),
    ("POST", "/api/v1/ml/train"),
    ("GET", "/api/v1/ml/runs"),
    ("GET", "/api/v1/ml/runs/{id}"),
    ("GET", "/api/v1/ml/runs/{id}/model"),
    ("GET", "/api/v1/stream"),
];

type AppState = Arc<Service>;

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self.body())).into_response()
    }
}

/// Project of the bearer token. Browsers cannot set headers on WebSocket
/// upgrades, so `?token=` is accepted as well.
pub struct Auth(pub String);

impl FromRequestParts<AppState> for Auth {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        let from_header = parts
            .headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(str::to_string);
        let token = from_header.or_else(|| {
            parts
                .uri
                .query()
                .and_then(|q| q.split('&').find_map(|kv| kv.strip_prefix("token=")))
                .map(str::to_string)
        });
        let token = token.ok_or_else(|| ApiError::Unauthorized("missing bearer token".into()))?;
        Ok(Auth(state.authorize(&token)?))
    }
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::Invalid(format!("bad request body: {e}")))
}

fn query_f64(q: &HashMap<String, String>, key: &str) -> Result<Option<f64>, ApiError> {
    q.get(key)
        .map(|v| v.parse::<f64>().map_err(|_| ApiError::Invalid(format!("{key} must be a number"))))
        .transpose()
}

fn ok<T: Serialize>(v: T) -> Result<Response, ApiError> {
    Ok(Json(v).into_response())
}

fn created<T: Serialize>(v: T) -> Result<Response, ApiError> {
    Ok((StatusCode::CREATED, Json(v)).into_response())
}

/// Runs CPU-bound work off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

pub fn router(service: Arc<Service>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/login", post(login))
        .route("/participants", get(list_participants).post(create_participant))
        .route("/participants/{id}/label", post(set_label))
        .route("/sessions", get(list_sessions).post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/record", post(record))
        .route("/sessions/{id}/stop", post(stop))
        .route("/sessions/{id}/track", get(track))
        .route("/sessions/{id}/sync", post(sync))
        .route("/sessions/{id}/segments", post(segments))
        .route("/sessions/{id}/marks", post(marks))
        .route("/sessions/{id}/features", get(features))
        .route("/sessions/{id}/dashboard", get(dashboard))
        .route("/overlay", get(overlay))
        .route("/ml/train", post(train))
        .route("/ml/runs", get(list_runs))
        .route("/ml/runs/{id}", get(get_run))
        .route("/ml/runs/{id}/model", get(run_model))
        .route("/stream", get(stream));
    let mut app = Router::new().nest("/api/v1", api);
    if let Some(dir) = ui_dir {
        app = app.nest_service("/ui", ServeDir::new(dir).append_index_html_on_directories(true));
    }
    app.with_state(service)
}

async fn login(State(s): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: LoginRequest = parse(&body)?;
    ok(s.login(&req)?)
}

async fn list_participants(State(s): State<AppState>, Auth(p): Auth) -> Result<Response, ApiError> {
    ok(s.list_participants(&p))
}

async fn create_participant(State(s): State<AppState>, Auth(p): Auth, body: Bytes) -> Result<Response, ApiError> {
    let req: NewParticipant = if body.is_empty() { NewParticipant::default() } else { parse(&body)? };
    created(s.create_participant(&p, req)?)
}

async fn set_label(State(s): State<AppState>, Auth(p): Auth, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let req: LabelRequest = parse(&body)?;
    ok(s.set_label(&p, &id, &req.class_label)?)
}

async fn list_sessions(
    State(s): State<AppState>,
    Auth(p): Auth,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    if let Some(other) = q.get("project") {
        if *other != p {
            return Err(ApiError::Forbidden(format!("token is not valid for project {other}")));
        }
    }
    ok(s.list_sessions(&p))
}

async fn create_session(State(s): State<AppState>, Auth(p): Auth, body: Bytes) -> Result<Response, ApiError> {
    let req: NewSession = parse(&body)?;
    created(s.create_session(&p, req)?)
}

async fn get_session(State(s): State<AppState>, Auth(p): Auth, Path(id): Path<String>) -> Result<Response, ApiError> {
    ok(s.session(&p, &id)?)
}

async fn record(State(s): State<AppState>, Auth(p): Auth, Path(id): Path<String>) -> Result<Response, ApiError> {
    ok(s.press_record(&p, &id)?)
}

async fn stop(State(s): State<AppState>, Auth(p): Auth, Path(id): Path<String>) -> Result<Response, ApiError> {
    blocking(move || s.stop(&p, &id)).await.and_then(ok)
}

async fn track(
    State(s): State<AppState>,
    Auth(p): Auth,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let t = s.track(&p, &id)?;
    match q.get("format").map(String::as_str) {
        None | Some("csv") => Ok(([(header::CONTENT_TYPE, "text/csv")], track_to_csv(&t)).into_response()),
        Some("json") => ok(t),
        Some(other) => Err(ApiError::Invalid(format!("unknown format {other:?} (csv, json)"))),
    }
}

async fn sync(State(s): State<AppState>, Auth(p): Auth, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let req: SyncRequest = parse(&body)?;
    blocking(move || s.set_video_sync(&p, &id, req.offset_s)).await.and_then(ok)
}

async fn segments(State(s): State<AppState>, Auth(p): Auth, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let req: SegmentRequest = parse(&body)?;
    blocking(move || s.annotate(&p, &id, &req)).await.and_then(ok)
}

async fn marks(State(s): State<AppState>, Auth(p): Auth, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let req: MarkRequest = parse(&body)?;
    blocking(move || s.mark_event(&p, &id, &req)).await.and_then(ok)
}

async fn features(
    State(s): State<AppState>,
    Auth(p): Auth,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let segment = match (query_f64(&q, "start")?, query_f64(&q, "end")?) {
        (Some(a), Some(b)) => Some((a, b)),
        (None, None) => None,
        _ => return Err(ApiError::Invalid("start and end must be given together".into())),
    };
    blocking(move || s.features(&p, &id, segment)).await.and_then(ok)
}

async fn dashboard(State(s): State<AppState>, Auth(p): Auth, Path(id): Path<String>) -> Result<Response, ApiError> {
    blocking(move || s.dashboard(&p, &id)).await.and_then(ok)
}

async fn overlay(State(s): State<AppState>, Auth(p): Auth, Query(q): Query<HashMap<String, String>>) -> Result<Response, ApiError> {
    let a = q.get("a").cloned().ok_or_else(|| ApiError::Invalid("missing query parameter a".into()))?;
    let b = q.get("b").cloned().ok_or_else(|| ApiError::Invalid("missing query parameter b".into()))?;
    let lag = query_f64(&q, "lag")?;
    blocking(move || s.overlay(&p, &a, &b, lag)).await.and_then(ok)
}

async fn train(State(s): State<AppState>, Auth(p): Auth, body: Bytes) -> Result<Response, ApiError> {
    let req: TrainRequest = parse(&body)?;
    let id = s.start_run(&p, req)?;
    Ok((StatusCode::ACCEPTED, Json(serde_json::json!({ "run_id": id }))).into_response())
}

async fn list_runs(State(s): State<AppState>, Auth(p): Auth) -> Result<Response, ApiError> {
    ok(s.list_runs(&p))
}

/// 202 with the run status while training, then the evaluation report.
async fn get_run(State(s): State<AppState>, Auth(p): Auth, Path(id): Path<String>) -> Result<Response, ApiError> {
    let rec = s.run(&p, &id)?;
    match (rec.status, rec.result) {
        (RunStatus::Done, Some(r)) => ok(r.report),
        (RunStatus::Failed, _) => Err(ApiError::Conflict(format!("run {id} failed: {}", rec.error.unwrap_or_default()))),
        _ => Ok((StatusCode::ACCEPTED, Json(serde_json::json!({ "run_id": id, "status": "running" }))).into_response()),
    }
}

async fn run_model(State(s): State<AppState>, Auth(p): Auth, Path(id): Path<String>) -> Result<Response, ApiError> {
    ok(s.run_model(&p, &id)?)
}

async fn stream(State(s): State<AppState>, Auth(p): Auth, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| pump(s, p, socket))
}

/// One NDJSON message per text frame in both directions; a frame holding
/// several lines is split.
async fn pump(service: Arc<Service>, project: String, mut socket: WebSocket) {
    let (tx, mut rx) = unbounded_channel();
    let mut conn = service.connect(&project, tx);
    loop {
        tokio::select! {
            incoming = socket.recv() => {
                let bytes: Vec<u8> = match incoming {
                    Some(Ok(WsMessage::Text(t))) => t.as_str().as_bytes().to_vec(),
                    Some(Ok(WsMessage::Binary(b))) => b.to_vec(),
                    Some(Ok(WsMessage::Ping(_) | WsMessage::Pong(_))) => continue,
                    Some(Ok(WsMessage::Close(_))) | Some(Err(_)) | None => break,
                };
                for line in bytes.split(|b| *b == b'\n').filter(|l| !l.iter().all(u8::is_ascii_whitespace)) {
                    service.on_line(&mut conn, line);
                }
            }
            Some(out) = rx.recv() => {
                let Ok(line) = encode(&out) else { continue };
                let text = String::from_utf8_lossy(&line).into_owned();
                if socket.send(WsMessage::Text(text.into())).await.is_err() {
                    break;
                }
            }
        }
    }
    debug!(session = ?conn.bound_session(), "stream closed");
    service.disconnect(&mut conn);
}
