//! HTTP and WebSocket routes.
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/session` | create; body `{config?, opening_instruction?, channel?}` |
//! | GET | `/session/{id}` | current `state_update` payload |
//! | POST | `/session/{id}/chat` | `{text, channel?}` |
//! | POST | `/session/{id}/decision` | `{proposal_id, decision}` |
//! | POST | `/session/{id}/manual` | `{commands}` |
//! | POST | `/session/{id}/start` | leave pre-game without an opening proposal |
//! | GET | `/session/{id}/log` | the JSON Lines episode log |
//! | GET | `/session/{id}/ws` | message stream |
//! | GET | `/metrics` | service counters |

use std::collections::HashMap;
use std::fs::File;
use std::future::Future;
use std::io::BufWriter;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use cmdr_core::advisor::{Advisor, Backend, Channel};
use cmdr_core::bt::Policy;
use cmdr_core::rts::Command;
use cmdr_core::session::{Decision, LogMode, Phase, Session, SessionConfig, SessionError};

use crate::driver::SessionHandle;
use crate::http_advisor::HttpAdvisor;
use crate::metrics::{Metrics, MetricsSnapshot};
use crate::wire::{ClientMessage, ErrorOut, StateUpdate};
use crate::ServiceError;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub log_dir: PathBuf,
    /// Base config; a create request's `config` object is merged over it.
    pub defaults: SessionConfig,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    /// Partial [`SessionConfig`]; omitted fields keep the service defaults.
    #[serde(default)]
    pub config: Option<Value>,
    #[serde(default)]
    pub opening_instruction: Option<String>,
    #[serde(default)]
    pub channel: Channel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
    pub phase: Phase,
    pub opening_instruction_id: Option<u64>,
}

#[derive(Clone)]
pub struct Service {
    inner: Arc<Inner>,
}

struct Inner {
    config: ServiceConfig,
    sessions: Mutex<HashMap<String, Arc<SessionHandle>>>,
    metrics: Arc<Metrics>,
}

/// Builds the advisor a config asks for.
pub fn build_advisor(config: &SessionConfig) -> Result<Arc<dyn Advisor>, SessionError> {
    match config.advisor.backend {
        Backend::Scripted => cmdr_core::session::scripted_advisor(&config.advisor),
        Backend::Http => HttpAdvisor::new(&config.advisor)
            .map(|a| Arc::new(a) as Arc<dyn Advisor>)
            .map_err(|e| SessionError::InvalidConfig(e.to_string())),
    }
}

/// Overlays `patch` onto `base`, recursing into objects.
pub fn merge_json(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge_json(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

impl Service {
    pub fn new(config: ServiceConfig) -> std::io::Result<Self> {
        std::fs::create_dir_all(&config.log_dir)?;
        Ok(Service {
            inner: Arc::new(Inner {
                config,
                sessions: Mutex::new(HashMap::new()),
                metrics: Arc::new(Metrics::default()),
            }),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.config
    }

    pub fn metrics(&self) -> MetricsSnapshot {
        self.inner.metrics.snapshot()
    }

    pub fn session_config(&self, patch: Option<Value>) -> Result<SessionConfig, ServiceError> {
        let Some(patch) = patch else { return Ok(self.inner.config.defaults.clone()) };
        let mut base =
            serde_json::to_value(&self.inner.config.defaults).map_err(|e| ServiceError::Io(e.to_string()))?;
        merge_json(&mut base, patch);
        serde_json::from_value(base).map_err(|e| SessionError::InvalidConfig(e.to_string()).into())
    }

    pub async fn create_session(&self, request: CreateSession) -> Result<Created, ServiceError> {
        let config = self.session_config(request.config)?;
        if request.opening_instruction.as_deref().is_some_and(|t| t.trim().is_empty()) {
            return Err(SessionError::EmptyInstruction.into());
        }
        let advisor = build_advisor(&config)?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let log_path = self.inner.config.log_dir.join(format!("{id}.jsonl"));
        let file = File::create(&log_path).map_err(|e| ServiceError::Io(format!("{}: {e}", log_path.display())))?;
        let session = match Session::with_log(
            id.clone(),
            config,
            advisor,
            LogMode::SinkOnly,
            Some(Box::new(BufWriter::new(file))),
        ) {
            Ok(s) => s,
            Err(e) => {
                let _ = std::fs::remove_file(&log_path);
                return Err(e.into());
            }
        };
        let handle = Arc::new(SessionHandle::spawn(session, log_path, self.inner.metrics.clone()));
        Metrics::bump(&self.inner.metrics.sessions_created);
        self.lock().insert(id.clone(), handle.clone());
        let opening_instruction_id = match request.opening_instruction {
            Some(text) => Some(handle.chat(text, request.channel).await?.id),
            None => None,
        };
        let phase = handle.status().await?.phase;
        Ok(Created { session_id: id, phase, opening_instruction_id })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HashMap<String, Arc<SessionHandle>>> {
        self.inner.sessions.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn session(&self, id: &str) -> Result<Arc<SessionHandle>, ServiceError> {
        self.lock().get(id).cloned().ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.lock().keys().cloned().collect();
        ids.sort();
        ids
    }

    /// The log file's bytes, flushed first.
    pub async fn log_bytes(&self, id: &str) -> Result<Vec<u8>, ServiceError> {
        let handle = self.session(id)?;
        handle.flush().await?;
        tokio::fs::read(handle.log_path()).await.map_err(|e| ServiceError::Io(e.to_string()))
    }

    /// Stops every session driver, flushing its log. Blocking.
    pub fn shutdown(&self) {
        let handles: Vec<_> = self.lock().values().cloned().collect();
        for h in handles {
            h.shutdown();
        }
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/session", post(create))
            .route("/session/{id}", get(status))
            .route("/session/{id}/chat", post(chat))
            .route("/session/{id}/decision", post(decision))
            .route("/session/{id}/manual", post(manual))
            .route("/session/{id}/start", post(start))
            .route("/session/{id}/log", get(log))
            .route("/session/{id}/ws", get(ws))
            .route("/metrics", get(metrics))
            .with_state(self.clone())
    }

    /// Serves until `signal` resolves, then stops all sessions (flushing
    /// their logs) and drains connections.
    pub async fn serve(
        self,
        listener: tokio::net::TcpListener,
        signal: impl Future<Output = ()> + Send + 'static,
    ) -> std::io::Result<()> {
        let svc = self.clone();
        axum::serve(listener, self.router())
            .with_graceful_shutdown(async move {
                signal.await;
                let _ = tokio::task::spawn_blocking(move || svc.shutdown()).await;
            })
            .await
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code(), "message": self.to_string() } });
        (self.status(), Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ServiceError>;

async fn create(
    State(svc): State<Service>,
    body: Option<Json<CreateSession>>,
) -> ApiResult<(StatusCode, Json<Created>)> {
    let request = body.map(|Json(b)| b).unwrap_or_default();
    Ok((StatusCode::CREATED, Json(svc.create_session(request).await?)))
}

async fn status(State(svc): State<Service>, Path(id): Path<String>) -> ApiResult<Json<StateUpdate>> {
    Ok(Json(svc.session(&id)?.status().await?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChatBody {
    text: String,
    #[serde(default)]
    channel: Channel,
}

async fn chat(
    State(svc): State<Service>,
    Path(id): Path<String>,
    Json(body): Json<ChatBody>,
) -> ApiResult<Json<Value>> {
    let instruction = svc.session(&id)?.chat(body.text, body.channel).await?;
    Ok(Json(json!({ "instruction_id": instruction.id, "tick": instruction.tick_received })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DecisionBody {
    proposal_id: u64,
    decision: Decision,
}

async fn decision(
    State(svc): State<Service>,
    Path(id): Path<String>,
    Json(body): Json<DecisionBody>,
) -> ApiResult<Json<Policy>> {
    Ok(Json(svc.session(&id)?.decide(body.proposal_id, body.decision).await?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ManualBody {
    commands: Vec<Command>,
}

async fn manual(
    State(svc): State<Service>,
    Path(id): Path<String>,
    Json(body): Json<ManualBody>,
) -> ApiResult<StatusCode> {
    svc.session(&id)?.manual(body.commands).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn start(State(svc): State<Service>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let phase = svc.session(&id)?.start().await?;
    Ok(Json(json!({ "phase": phase })))
}

async fn log(State(svc): State<Service>, Path(id): Path<String>) -> ApiResult<Response> {
    let bytes = svc.log_bytes(&id).await?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], bytes).into_response())
}

async fn metrics(State(svc): State<Service>) -> Json<MetricsSnapshot> {
    Json(svc.metrics())
}

async fn ws(State(svc): State<Service>, Path(id): Path<String>, upgrade: WebSocketUpgrade) -> ApiResult<Response> {
    let handle = svc.session(&id)?;
    Ok(upgrade.on_upgrade(move |socket| pump(socket, handle)))
}

async fn pump(mut socket: WebSocket, handle: Arc<SessionHandle>) {
    let Ok((sub, mut outgoing)) = handle.subscribe() else {
        let _ = socket.send(Message::Close(None)).await;
        return;
    };
    let mut last_in: Option<u64> = None;
    loop {
        tokio::select! {
            out = outgoing.recv() => match out {
                Some(m) => {
                    let Ok(text) = serde_json::to_string(&m) else { continue };
                    if socket.send(Message::Text(text.into())).await.is_err() {
                        break;
                    }
                }
                None => {
                    let _ = socket.send(Message::Close(None)).await;
                    break;
                }
            },
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Text(text))) => {
                    let sent = match serde_json::from_str::<ClientMessage>(text.as_str()) {
                        Ok(m) if m.seq.is_some_and(|s| last_in.is_some_and(|l| s <= l)) => handle.reject(
                            sub,
                            ErrorOut::new("out_of_order", format!("client seq {} is not above {}", m.seq.unwrap_or(0), last_in.unwrap_or(0))),
                        ),
                        Ok(m) => {
                            if m.seq.is_some() {
                                last_in = m.seq;
                            }
                            handle.client_frame(sub, m)
                        }
                        Err(e) => handle.reject(sub, ErrorOut::new("bad_frame", e.to_string())),
                    };
                    if sent.is_err() {
                        break;
                    }
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
        }
    }
    handle.unsubscribe(sub);
}
