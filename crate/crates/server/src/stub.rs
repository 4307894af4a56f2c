//! A local stand-in for a chat-completions endpoint, for tests and demos.
//!
//! Replies rotate through [`StubReply::ROTATION`]: a valid proposal, a reply
//! with no parseable JSON, and one that arrives too late.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use tokio::sync::oneshot;

pub const STUB_PATH: &str = "/v1/chat/completions";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StubReply {
    Valid,
    Malformed,
    Timeout,
}

impl StubReply {
    pub const ROTATION: [StubReply; 3] = [StubReply::Valid, StubReply::Malformed, StubReply::Timeout];

    /// Reply kind for the `n`th request (0-based).
    pub fn nth(n: u64) -> StubReply {
        Self::ROTATION[(n % 3) as usize]
    }
}

#[derive(Debug, Clone)]
pub struct StubOptions {
    /// How long a timeout reply is held back.
    pub delay: Duration,
    /// Basis named by valid replies.
    pub basis: String,
}

impl Default for StubOptions {
    fn default() -> Self {
        StubOptions { delay: Duration::from_secs(2), basis: "air_dominance".into() }
    }
}

struct Shared {
    requests: AtomicU64,
    options: StubOptions,
}

/// Runs on its own thread and runtime; stops when dropped.
pub struct StubAdvisorServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl StubAdvisorServer {
    pub fn start(options: StubOptions) -> std::io::Result<Self> {
        let listener = std::net::TcpListener::bind("127.0.0.1:0")?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared { requests: AtomicU64::new(0), options });
        let (stop, stopped) = oneshot::channel::<()>();
        let app = Router::new().route(STUB_PATH, post(reply)).with_state(shared.clone());
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
        let thread = std::thread::spawn(move || {
            rt.block_on(async move {
                let Ok(listener) = tokio::net::TcpListener::from_std(listener) else { return };
                tokio::select! {
                    _ = axum::serve(listener, app) => {}
                    _ = stopped => {}
                }
            });
        });
        Ok(StubAdvisorServer { addr, shared, stop: Some(stop), thread: Some(thread) })
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}{}", self.addr, STUB_PATH)
    }

    /// Requests received so far.
    pub fn requests(&self) -> u64 {
        self.shared.requests.load(Ordering::SeqCst)
    }
}

impl Drop for StubAdvisorServer {
    fn drop(&mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn completion(content: &str) -> Value {
    json!({ "choices": [ { "index": 0, "message": { "role": "assistant", "content": content } } ] })
}

async fn reply(State(shared): State<Arc<Shared>>, Json(_body): Json<Value>) -> Json<Value> {
    let n = shared.requests.fetch_add(1, Ordering::SeqCst);
    let valid = format!(
        "Switching styles.\n```json\n{{\"basis\": \"{}\", \"deltas\": {{}}, \"rationale\": \"Stub reply {n}.\"}}\n```",
        shared.options.basis
    );
    match StubReply::nth(n) {
        StubReply::Valid => Json(completion(&valid)),
        StubReply::Malformed => Json(completion("I would go air, but I forgot the JSON.")),
        StubReply::Timeout => {
            tokio::time::sleep(shared.options.delay).await;
            Json(completion(&valid))
        }
    }
}
