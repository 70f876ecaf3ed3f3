//! HTTP front end for interactive sessions.
//!
//! Routes:
//! - `POST /sessions` with a JSON config (merged over the server's base config)
//! - `GET /sessions/{id}/state?since=R`
//! - `POST /sessions/{id}/mitigations` with `{"cell": [r, c], "kind": "fireline"}`
//! - `POST /sessions/{id}/advance` with `{"steps": N}`
//! - `DELETE /sessions/{id}`
//! - `GET /sessions/{id}/stream`, server-sent `delta` events

use std::collections::HashMap;
use std::convert::Infallible;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use emberline_core::firespread::Mitigation;
use emberline_core::service::{Command, Session, ServiceError, SessionStore};
use emberline_core::RunConfig;
use futures::Stream;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::watch;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            message: message.into(),
        }
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let status = match e {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::FutureRevision { .. } => StatusCode::CONFLICT,
            ServiceError::OutOfBounds { .. } | ServiceError::InvalidSteps(_) | ServiceError::Config(_) => StatusCode::BAD_REQUEST,
            ServiceError::Env(_) => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self {
            status,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct Inner {
    store: SessionStore,
    channels: Mutex<HashMap<String, watch::Sender<u64>>>,
    /// Config every POST /sessions body is merged over.
    base: Value,
    log_dir: Option<PathBuf>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    /// `base` is a (possibly partial) config in JSON form; `log_dir`, when
    /// set, receives one command log per session.
    pub fn new(base: Value, log_dir: Option<PathBuf>, idle_ttl: Duration) -> Self {
        Self(Arc::new(Inner {
            store: SessionStore::new(idle_ttl),
            channels: Mutex::new(HashMap::new()),
            base,
            log_dir,
        }))
    }

    pub fn session_count(&self) -> usize {
        self.0.store.len()
    }

    /// Drops idle sessions and closes their streams.
    pub fn purge_idle(&self, now: Instant) -> Vec<String> {
        let gone = self.0.store.purge_idle(now);
        let mut channels = self.0.channels.lock().expect("channel lock");
        for id in &gone {
            channels.remove(id);
        }
        gone
    }

    fn session(&self, id: &str) -> ApiResult<Arc<Mutex<Session>>> {
        Ok(self.0.store.get(id)?)
    }

    fn notify(&self, id: &str, revision: u64) {
        if let Some(tx) = self.0.channels.lock().expect("channel lock").get(id) {
            tx.send_replace(revision);
        }
    }

    fn log_path(&self, id: &str) -> Option<PathBuf> {
        self.0.log_dir.as_ref().map(|d| d.join(format!("{id}.jsonl")))
    }

    fn append_log(&self, id: &str, line: &Value) -> ApiResult<()> {
        let Some(path) = self.log_path(id) else {
            return Ok(());
        };
        let write = || -> std::io::Result<()> {
            let mut f = OpenOptions::new().create(true).append(true).open(&path)?;
            writeln!(f, "{line}")
        };
        write().map_err(|e| ApiError::internal(format!("writing {}: {e}", path.display())))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", delete(delete_session))
        .route("/sessions/{id}/state", get(get_state))
        .route("/sessions/{id}/mitigations", post(post_mitigation))
        .route("/sessions/{id}/advance", post(advance))
        .route("/sessions/{id}/stream", get(stream))
        .with_state(state)
}

fn merge_json(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed request body: {e}")))
}

async fn create_session(State(app): State<AppState>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let mut config = app.0.base.clone();
    if !body.iter().all(u8::is_ascii_whitespace) {
        let over: Value = parse_body(&body)?;
        if !over.is_object() {
            return Err(ApiError::bad_request("config must be a JSON object"));
        }
        merge_json(&mut config, over);
    }
    let config = RunConfig::from_json_str(&config.to_string()).map_err(|e| ApiError::bad_request(format!("invalid config: {e}")))?;
    let session = tokio::task::spawn_blocking(move || Session::new(config))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;

    let id = uuid::Uuid::new_v4().simple().to_string();
    let descriptor = session.descriptor(&id);
    let header = json!({ "type": "header", "id": id, "config": session.config() });
    app.0.store.insert(id.clone(), session);
    app.0
        .channels
        .lock()
        .expect("channel lock")
        .insert(id.clone(), watch::channel(0).0);
    app.append_log(&id, &header)?;
    log::info!("created session {id}");
    Ok((StatusCode::CREATED, Json(descriptor)))
}

async fn delete_session(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    app.0.store.remove(&id)?;
    // dropping the sender ends every open stream
    app.0.channels.lock().expect("channel lock").remove(&id);
    Ok(StatusCode::NO_CONTENT)
}

async fn get_state(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(query): Query<HashMap<String, String>>,
) -> ApiResult<Json<Value>> {
    let since = query
        .get("since")
        .map(|s| s.parse::<u64>().map_err(|_| ApiError::bad_request(format!("since must be a revision number, got '{s}'"))))
        .transpose()?;
    let session = app.session(&id)?;
    let view = session.lock().expect("session lock").get_state(since)?;
    Ok(Json(serde_json::to_value(view).map_err(|e| ApiError::internal(e.to_string()))?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MitigationBody {
    cell: [usize; 2],
    kind: String,
}

async fn post_mitigation(State(app): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let session = app.session(&id)?;
    let req: MitigationBody = parse_body(&body)?;
    let kind = Mitigation::from_name(&req.kind).ok_or_else(|| {
        let allowed: Vec<&str> = Mitigation::ALL.iter().map(|m| m.name()).collect();
        ApiError::bad_request(format!("unknown mitigation kind '{}'; allowed kinds: {}", req.kind, allowed.join(", ")))
    })?;
    let delta = {
        let mut s = session.lock().expect("session lock");
        let delta = s.mitigate((req.cell[0], req.cell[1]), kind)?;
        app.append_log(&id, &json!(Command::Mitigate { cell: req.cell, kind }))?;
        delta
    };
    app.notify(&id, delta.revision);
    Ok(Json(json!(delta)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AdvanceBody {
    steps: usize,
}

async fn advance(State(app): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let session = app.session(&id)?;
    let req: AdvanceBody = parse_body(&body)?;
    let app2 = app.clone();
    let id2 = id.clone();
    let report = tokio::task::spawn_blocking(move || -> ApiResult<_> {
        let mut s = session.lock().expect("session lock");
        let report = s.advance(req.steps)?;
        app2.append_log(&id2, &json!(Command::Advance { steps: req.steps }))?;
        Ok(report)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    app.notify(&id, report.delta.revision);
    Ok(Json(json!(report)))
}

struct Subscription {
    rx: watch::Receiver<u64>,
    session: Arc<Mutex<Session>>,
    seen: u64,
}

async fn stream(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    let session = app.session(&id)?;
    // subscribe before reading the revision so no mutation slips between
    let mut rx = app
        .0
        .channels
        .lock()
        .expect("channel lock")
        .get(&id)
        .ok_or_else(|| ServiceError::NotFound(id.clone()))?
        .subscribe();
    rx.mark_unchanged();
    let seen = session.lock().expect("session lock").revision();
    let sub = Subscription { rx, session, seen };
    let events = futures::stream::unfold(sub, |mut sub| async move {
        loop {
            sub.rx.changed().await.ok()?;
            let delta = sub.session.lock().expect("session lock").delta_since(sub.seen).ok()?;
            if delta.revision == sub.seen {
                continue;
            }
            sub.seen = delta.revision;
            let event = Event::default().event("delta").json_data(&delta).ok()?;
            return Some((Ok(event), sub));
        }
    });
    Ok(Sse::new(events).keep_alive(KeepAlive::default()))
}

/// Serves until the process is stopped.
pub async fn serve(state: AppState, host: &str, port: u16) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind((host, port)).await?;
    log::info!("listening on {}", listener.local_addr()?);
    let purger = state.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(60));
        loop {
            tick.tick().await;
            for id in purger.purge_idle(Instant::now()) {
                log::info!("expired idle session {id}");
            }
        }
    });
    if let Some(dir) = &state.0.log_dir {
        fs::create_dir_all(dir)?;
    }
    axum::serve(listener, router(state)).await?;
    Ok(())
}
