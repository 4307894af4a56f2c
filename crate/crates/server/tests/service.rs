use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

use cmdr_core::advisor::{AdvisorConfig, Backend};
use cmdr_core::log::{replay, EpisodeLog, LogRecord};
use cmdr_core::session::{Mode, SessionConfig};
use cmdr_server::{Service, ServiceConfig, StubAdvisorServer, StubOptions, WireType};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

struct Harness {
    base: String,
    service: Service,
    http: reqwest::Client,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    server: Option<tokio::task::JoinHandle<std::io::Result<()>>>,
    _dir: tempfile::TempDir,
}

impl Harness {
    async fn start(defaults: SessionConfig) -> Harness {
        let dir = tempfile::tempdir().unwrap();
        let service = Service::new(ServiceConfig { log_dir: dir.path().to_path_buf(), defaults }).unwrap();
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
        let server = tokio::spawn(service.clone().serve(listener, async move {
            let _ = stopped.await;
        }));
        Harness { base, service, http: reqwest::Client::new(), stop: Some(stop), server: Some(server), _dir: dir }
    }

    async fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let resp = self.http.post(format!("{}{path}", self.base)).json(&body).send().await.unwrap();
        let status = resp.status().as_u16();
        let text = resp.text().await.unwrap();
        (status, serde_json::from_str(&text).unwrap_or(Value::Null))
    }

    async fn get(&self, path: &str) -> (u16, String) {
        let resp = self.http.get(format!("{}{path}", self.base)).send().await.unwrap();
        (resp.status().as_u16(), resp.text().await.unwrap())
    }

    async fn create(&self, body: Value) -> String {
        let (status, v) = self.post("/session", body).await;
        assert_eq!(status, 201, "{v}");
        v["session_id"].as_str().unwrap().to_string()
    }

    async fn ws(&self, id: &str) -> Ws {
        let url = format!("{}/session/{id}/ws", self.base.replace("http://", "ws://"));
        tokio_tungstenite::connect_async(url).await.unwrap().0
    }

    /// Stops the service; the returned dir keeps the logs alive.
    async fn stop(mut self) -> tempfile::TempDir {
        if let Some(s) = self.stop.take() {
            let _ = s.send(());
        }
        if let Some(s) = self.server.take() {
            s.await.unwrap().unwrap();
        }
        self._dir
    }
}

fn fast_config() -> SessionConfig {
    let mut c = SessionConfig { tick_rate: 200, ..SessionConfig::default() };
    c.game.tick_limit = 300;
    c
}

fn schema() -> jsonschema::Validator {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/schema/wire.schema.json")).unwrap();
    jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).unwrap()
}

/// Reads server frames, checking each against the schema and the seq rule.
struct Reader {
    ws: Ws,
    schema: jsonschema::Validator,
    last_seq: u64,
    seen: Vec<Value>,
}

impl Reader {
    fn new(ws: Ws) -> Self {
        Reader { ws, schema: schema(), last_seq: 0, seen: Vec::new() }
    }

    async fn next(&mut self) -> Option<Value> {
        loop {
            let msg =
                tokio::time::timeout(Duration::from_secs(20), self.ws.next()).await.expect("frame within 20 s")?;
            match msg.unwrap() {
                Message::Text(t) => {
                    let v: Value = serde_json::from_str(t.as_str()).unwrap();
                    let errors: Vec<String> = self.schema.iter_errors(&v).map(|e| e.to_string()).collect();
                    assert!(errors.is_empty(), "frame fails schema: {errors:?}\n{v}");
                    let seq = v["seq"].as_u64().unwrap();
                    assert!(seq > self.last_seq, "seq {seq} after {}", self.last_seq);
                    self.last_seq = seq;
                    self.seen.push(v.clone());
                    return Some(v);
                }
                Message::Close(_) => return None,
                _ => {}
            }
        }
    }

    async fn until(&mut self, kind: &str) -> Value {
        loop {
            let v = self.next().await.unwrap_or_else(|| panic!("stream closed before a {kind} frame"));
            if v["type"] == kind {
                return v;
            }
        }
    }

    async fn send(&mut self, kind: &str, payload: Value) {
        self.ws.send(Message::Text(json!({ "type": kind, "payload": payload }).to_string().into())).await.unwrap();
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn create_validates_config_and_ids_are_distinct() {
    let h = Harness::start(fast_config()).await;
    let (status, v) = h.post("/session", json!({})).await;
    assert_eq!(status, 201);
    assert_eq!(v["phase"], "awaiting_initial_instruction");
    let other = h.create(json!({})).await;
    assert_ne!(v["session_id"].as_str().unwrap(), other);

    let (status, v) = h.post("/session", json!({ "config": { "opponent_difficulty": 9 } })).await;
    assert_eq!(status, 400);
    assert_eq!(v["error"]["code"], "invalid_config");

    let (status, v) = h
        .post(
            "/session",
            json!({ "config": { "advisor": { "backend": "http", "endpoint": "not a url", "model": "m" } } }),
        )
        .await;
    assert_eq!(status, 400);
    assert_eq!(v["error"]["code"], "invalid_config");

    let (status, v) = h.post("/session", json!({ "opening_instruction": "   " })).await;
    assert_eq!(status, 400, "{v}");

    let (status, _) = h.get("/session/nope/log").await;
    assert_eq!(status, 404);
    let (status, _) = h.post("/session/nope/chat", json!({ "text": "hi" })).await;
    assert_eq!(status, 404);
    h.stop().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn stream_carries_chat_proposal_decision_and_closes_at_end() {
    let h = Harness::start(fast_config()).await;
    let id = h.create(json!({})).await;
    let (status, v) = h.post(&format!("/session/{id}/start"), json!({})).await;
    assert_eq!((status, v["phase"].as_str()), (200, Some("running")));
    tokio::time::sleep(Duration::from_millis(150)).await;

    // Joining mid-game: the first frame is a full snapshot.
    let mut r = Reader::new(h.ws(&id).await);
    let first = r.next().await.unwrap();
    assert_eq!(first["type"], "state_update");
    assert!(first["payload"]["tick"].as_u64().unwrap() > 0);
    assert_eq!(first["payload"]["state"]["factions"].as_array().unwrap().len(), 2);
    let revision0 = first["payload"]["policy"]["revision"].as_u64().unwrap();

    r.send("chat_in", json!({ "text": "I want to play a sky army style" })).await;
    let echo = r.until("chat_in").await;
    let instruction_id = echo["payload"]["instruction"]["id"].as_u64().unwrap();
    let proposal = r.until("proposal").await;
    assert_eq!(proposal["payload"]["in_reply_to"].as_u64(), Some(instruction_id));
    assert_eq!(proposal["payload"]["proposal"]["in_reply_to"].as_u64(), Some(instruction_id));
    let air = &proposal["payload"]["policy"]["modulators"]["composition_weights"];
    assert!(air["air"].as_u64() > air["melee"].as_u64() && air["air"].as_u64() > air["ranged"].as_u64());
    let proposal_id = proposal["payload"]["proposal"]["id"].as_u64().unwrap();

    r.send("decision", json!({ "proposal_id": proposal_id, "decision": "approve" })).await;
    let decision = r.until("decision").await;
    assert_eq!(decision["payload"]["proposal_id"].as_u64(), Some(proposal_id));
    let update = r.until("state_update").await;
    assert_eq!(update["payload"]["policy"]["revision"].as_u64(), Some(revision0 + 1));

    r.send("decision", json!({ "proposal_id": proposal_id, "decision": "approve" })).await;
    let err = r.until("error").await;
    assert_eq!(err["payload"]["code"], "stale_proposal");

    r.send("chat_in", json!({ "text": "" })).await;
    let err = r.until("error").await;
    assert_eq!(err["payload"]["code"], "empty_instruction");

    // A worker moved by hand shows up in the log and still replays.
    let state = &update["payload"]["state"]["factions"][0];
    let worker = state["units"].as_array().unwrap().iter().find(|u| u["kind"] == "worker").unwrap()["id"].clone();
    r.send("manual_action", json!({ "commands": [ { "command": "move", "unit": worker, "to": { "x": 5, "y": 5 } } ] }))
        .await;
    let echo = r.until("manual_action").await;
    assert_eq!(echo["payload"]["commands"][0]["unit"], worker);

    // Opponent units are not ours to command.
    let enemy = update["payload"]["state"]["factions"][1]["units"][0]["id"].clone();
    r.send("manual_action", json!({ "commands": [ { "command": "stop", "unit": enemy } ] })).await;
    assert_eq!(r.until("error").await["payload"]["code"], "not_owned");

    r.until("episode_end").await;
    assert!(r.next().await.is_none(), "stream closes after episode_end");
    let kinds: Vec<&str> = r.seen.iter().map(|v| v["type"].as_str().unwrap()).collect();
    assert!(kinds.contains(&"frame_summary"));

    let (status, v) = h.post(&format!("/session/{id}/chat"), json!({ "text": "attack now" })).await;
    assert_eq!((status, v["error"]["code"].as_str()), (409, Some("session_ended")));

    // Late subscriber after the end: snapshot, episode_end, close.
    let mut late = Reader::new(h.ws(&id).await);
    assert_eq!(late.next().await.unwrap()["type"], "state_update");
    assert_eq!(late.next().await.unwrap()["type"], "episode_end");
    assert!(late.next().await.is_none());

    let (status, text) = h.get(&format!("/session/{id}/log")).await;
    assert_eq!(status, 200);
    let on_disk = std::fs::read_to_string(h.service.session(&id).unwrap().log_path()).unwrap();
    assert_eq!(text, on_disk);
    let log = EpisodeLog::from_jsonl(&text).unwrap();
    assert!(log.result().is_some());
    assert!(log
        .records
        .iter()
        .any(|r| matches!(r, LogRecord::Tick { manual_actions, .. } if !manual_actions.is_empty())));
    let report = replay(&log).unwrap();
    assert!(report.ok(), "{report}");
    h.stop().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn opening_instruction_waits_for_approval() {
    let h = Harness::start(fast_config()).await;
    let (status, v) = h.post("/session", json!({ "opening_instruction": "rush them" })).await;
    assert_eq!(status, 201, "{v}");
    assert_eq!(v["phase"], "awaiting_initial_instruction");
    assert_eq!(v["opening_instruction_id"], 1);
    let id = v["session_id"].as_str().unwrap().to_string();

    let deadline = Instant::now() + Duration::from_secs(10);
    let pending = loop {
        let (_, text) = h.get(&format!("/session/{id}")).await;
        let s: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(s["tick"], 0, "no ticks before the opening decision");
        if !s["pending_proposal"].is_null() {
            break s["pending_proposal"].clone();
        }
        assert!(Instant::now() < deadline);
        tokio::time::sleep(Duration::from_millis(20)).await;
    };
    assert_eq!(pending["basis"], "melee_rush");
    assert_eq!(pending["in_reply_to"], 1);

    let (status, policy) = h
        .post(&format!("/session/{id}/decision"), json!({ "proposal_id": pending["id"], "decision": "approve" }))
        .await;
    assert_eq!(status, 200);
    assert_eq!((policy["policy_id"].as_str(), policy["revision"].as_u64()), (Some("melee_rush"), Some(1)));
    let (status, v) =
        h.post(&format!("/session/{id}/decision"), json!({ "proposal_id": pending["id"], "decision": "reject" })).await;
    assert_eq!((status, v["error"]["code"].as_str()), (409, Some("stale_proposal")));

    let (_, text) = h.get(&format!("/session/{id}")).await;
    let s: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(s["phase"], "running");
    let (_, metrics) = h.get("/metrics").await;
    let m: Value = serde_json::from_str(&metrics).unwrap();
    assert!(m["sessions_created"].as_u64() >= Some(1));
    assert!(m["proposals"].as_u64() >= Some(1));
    h.stop().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn realtime_keeps_ticking_while_the_advisor_is_slow() {
    let stub =
        StubAdvisorServer::start(StubOptions { delay: Duration::from_millis(900), ..StubOptions::default() }).unwrap();
    let mut config =
        SessionConfig { tick_rate: 20, mode: Mode::Realtime, auto_approve: true, ..SessionConfig::default() };
    config.advisor = AdvisorConfig {
        backend: Backend::Http,
        endpoint: Some(stub.endpoint()),
        model: Some("stub".into()),
        timeout_ms: 400,
        ..AdvisorConfig::default()
    };
    let h = Harness::start(config).await;
    let id = h.create(json!({})).await;
    h.post(&format!("/session/{id}/start"), json!({})).await;

    let mut last_tick_before_call = 0;
    let mut ticks_during_timeout = 0;
    for n in 0..3 {
        let (_, text) = h.get(&format!("/session/{id}")).await;
        let before = serde_json::from_str::<Value>(&text).unwrap()["tick"].as_u64().unwrap();
        let (status, v) = h.post(&format!("/session/{id}/chat"), json!({ "text": "go air" })).await;
        assert_eq!(status, 200, "{v}");
        let deadline = Instant::now() + Duration::from_secs(10);
        let after = loop {
            let (_, text) = h.get(&format!("/session/{id}")).await;
            let s: Value = serde_json::from_str(&text).unwrap();
            if s["advisor_busy"] == false {
                break s["tick"].as_u64().unwrap();
            }
            assert!(Instant::now() < deadline);
            tokio::time::sleep(Duration::from_millis(10)).await;
        };
        if n == 2 {
            ticks_during_timeout = after - before;
        }
        last_tick_before_call = after;
    }
    assert!(last_tick_before_call > 0);
    // A 400 ms timeout at 20 ticks/s should let roughly 8 ticks through.
    assert!(ticks_during_timeout >= 4, "only {ticks_during_timeout} ticks while waiting");
    tokio::time::sleep(Duration::from_millis(500)).await;

    let (_, text) = h.get(&format!("/session/{id}/log")).await;
    let log = EpisodeLog::from_jsonl(&text).unwrap();
    let failures: Vec<&String> = log
        .records
        .iter()
        .filter_map(|r| match r {
            LogRecord::AdvisorFailure { error, .. } => Some(error),
            _ => None,
        })
        .collect();
    assert_eq!(failures.len(), 2, "{failures:?}");
    assert!(failures[0].contains("malformed"));
    assert!(failures[1].contains("timed out"));
    let decisions = log.records.iter().filter(|r| matches!(r, LogRecord::Decision { .. })).count();
    assert_eq!(decisions, 1);

    // Ticks are paced: no gap above twice the 50 ms interval.
    let stamps: Vec<u64> = log
        .records
        .iter()
        .filter_map(|r| match r {
            LogRecord::Tick { elapsed_ms, .. } => *elapsed_ms,
            _ => None,
        })
        .collect();
    assert!(stamps.len() > 10, "{} ticks", stamps.len());
    let worst = stamps.windows(2).map(|w| w[1] - w[0]).max().unwrap();
    assert!(worst <= 100, "worst tick gap {worst} ms");
    assert!(replay(&log).unwrap().ok());
    h.stop().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn shutdown_flushes_logs_that_still_replay() {
    let mut config = fast_config();
    config.game.tick_limit = 100_000;
    config.tick_rate = 100;
    let h = Harness::start(config).await;
    let id = h.create(json!({})).await;
    h.post(&format!("/session/{id}/chat"), json!({ "text": "build some turrets" })).await;
    h.post(&format!("/session/{id}/start"), json!({})).await;
    tokio::time::sleep(Duration::from_millis(300)).await;
    let path = h.service.session(&id).unwrap().log_path().to_path_buf();
    let _dir = h.stop().await;

    let log = EpisodeLog::from_jsonl(&std::fs::read_to_string(path).unwrap()).unwrap();
    let report = replay(&log).unwrap();
    assert!(report.ticks > 5, "{report}");
    assert!(report.ok(), "{report}");
}

#[test]
fn schema_lists_every_wire_type() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/schema/wire.schema.json")).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    let listed: Vec<WireType> = serde_json::from_value(v["$defs"]["wire_type"]["enum"].clone()).unwrap();
    assert_eq!(listed.len(), 9);
}
