//! One thread per session. Everything that touches the [`Session`] goes
//! through the driver's inbox, so chat, decisions and manual actions are
//! applied in arrival order between ticks.
//!
//! Ticks are paced at the config's `tick_rate` once the session is running.
//! Advisor calls run on their own thread and report back through the inbox;
//! in lockstep mode ticking pauses until the reply is in, in realtime mode
//! the game keeps going.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::Serialize;
use tokio::sync::{mpsc as tmpsc, oneshot};

use cmdr_core::advisor::{AdvisorError, AdvisorReply, Channel, Instruction};
use cmdr_core::bt::Policy;
use cmdr_core::rts::{Command, FactionId};
use cmdr_core::session::{AdvisorCall, Decision, Mode, Phase, Session, SessionError, SessionEvent};
use cmdr_core::summarizer::summarize_frame;

use crate::metrics::Metrics;
use crate::wire::{
    ChatEcho, ChatIn, ClientMessage, DecisionIn, DecisionOut, EpisodeEnd, ErrorOut, ManualIn, ProposalOut,
    SessionMetrics, StateUpdate, WireMessage, WireType,
};
use crate::{error_code, ServiceError};

/// Ticks between unprompted `state_update` frames.
pub const UPDATE_EVERY: u64 = 5;
/// Ticks between `metrics` frames.
pub const METRICS_EVERY: u64 = 100;

pub type SubscriberId = u64;

pub(crate) enum Request {
    Chat { text: String, channel: Channel, reply: oneshot::Sender<Result<Instruction, SessionError>> },
    Decide { proposal_id: u64, decision: Decision, reply: oneshot::Sender<Result<Policy, SessionError>> },
    Manual { commands: Vec<Command>, reply: oneshot::Sender<Result<(), SessionError>> },
    Start { reply: oneshot::Sender<Phase> },
    Status { reply: oneshot::Sender<StateUpdate> },
    Subscribe { id: SubscriberId, tx: tmpsc::UnboundedSender<WireMessage> },
    Unsubscribe { id: SubscriberId },
    Client { from: SubscriberId, message: ClientMessage },
    Reject { to: SubscriberId, error: ErrorOut },
    Flush { reply: oneshot::Sender<Result<(), String>> },
    AdvisorDone { call: AdvisorCall, reply: Result<AdvisorReply, AdvisorError>, latency_ms: u64 },
    Shutdown,
}

/// The service's grip on a running session.
pub struct SessionHandle {
    id: String,
    log_path: PathBuf,
    inbox: mpsc::Sender<Request>,
    next_subscriber: AtomicU64,
    thread: Mutex<Option<JoinHandle<()>>>,
}

impl SessionHandle {
    pub fn spawn(session: Session, log_path: PathBuf, metrics: Arc<Metrics>) -> Self {
        let (inbox, rx) = mpsc::channel();
        let id = session.id().to_string();
        let mut session = session;
        session.set_collect_events(true);
        let driver = Driver {
            session,
            inbox: inbox.clone(),
            subscribers: BTreeMap::new(),
            seq: 0,
            ticks_since_update: 0,
            started_at: Instant::now(),
            last_tick_at: None,
            max_gap_ms: 0,
            advisor_calls: 0,
            advisor_failures: 0,
            latency_total_ms: 0,
            metrics,
        };
        let thread = std::thread::Builder::new()
            .name(format!("session-{id}"))
            .spawn(move || driver.run(rx))
            .expect("spawn session thread");
        SessionHandle { id, log_path, inbox, next_subscriber: AtomicU64::new(1), thread: Mutex::new(Some(thread)) }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn log_path(&self) -> &Path {
        &self.log_path
    }

    fn send(&self, request: Request) -> Result<(), ServiceError> {
        self.inbox.send(request).map_err(|_| ServiceError::Closed)
    }

    async fn ask<T>(&self, make: impl FnOnce(oneshot::Sender<T>) -> Request) -> Result<T, ServiceError> {
        let (tx, rx) = oneshot::channel();
        self.send(make(tx))?;
        rx.await.map_err(|_| ServiceError::Closed)
    }

    /// Queues an instruction. The proposal arrives later on the stream.
    pub async fn chat(&self, text: String, channel: Channel) -> Result<Instruction, ServiceError> {
        Ok(self.ask(|reply| Request::Chat { text, channel, reply }).await??)
    }

    pub async fn decide(&self, proposal_id: u64, decision: Decision) -> Result<Policy, ServiceError> {
        Ok(self.ask(|reply| Request::Decide { proposal_id, decision, reply }).await??)
    }

    pub async fn manual(&self, commands: Vec<Command>) -> Result<(), ServiceError> {
        Ok(self.ask(|reply| Request::Manual { commands, reply }).await??)
    }

    /// Leaves the pre-game phase without waiting for an opening proposal.
    pub async fn start(&self) -> Result<Phase, ServiceError> {
        self.ask(|reply| Request::Start { reply }).await
    }

    pub async fn status(&self) -> Result<StateUpdate, ServiceError> {
        self.ask(|reply| Request::Status { reply }).await
    }

    /// Flushes the log file so it can be read back in full.
    pub async fn flush(&self) -> Result<(), ServiceError> {
        self.ask(|reply| Request::Flush { reply }).await?.map_err(ServiceError::Io)
    }

    /// Registers a subscriber. Its first frame is a full `state_update`.
    pub fn subscribe(&self) -> Result<(SubscriberId, tmpsc::UnboundedReceiver<WireMessage>), ServiceError> {
        let id = self.next_subscriber.fetch_add(1, Ordering::Relaxed);
        let (tx, rx) = tmpsc::unbounded_channel();
        self.send(Request::Subscribe { id, tx })?;
        Ok((id, rx))
    }

    pub fn unsubscribe(&self, id: SubscriberId) {
        let _ = self.send(Request::Unsubscribe { id });
    }

    /// Hands a client frame to the driver; replies and errors come back on
    /// the subscriber's stream.
    pub fn client_frame(&self, from: SubscriberId, message: ClientMessage) -> Result<(), ServiceError> {
        self.send(Request::Client { from, message })
    }

    /// Sends an `error` frame to one subscriber.
    pub fn reject(&self, to: SubscriberId, error: ErrorOut) -> Result<(), ServiceError> {
        self.send(Request::Reject { to, error })
    }

    /// Flushes the log and stops the driver thread. Blocks until it exits.
    pub fn shutdown(&self) {
        let _ = self.send(Request::Shutdown);
        let thread = self.thread.lock().ok().and_then(|mut t| t.take());
        if let Some(t) = thread {
            let _ = t.join();
        }
    }
}

struct Driver {
    session: Session,
    inbox: mpsc::Sender<Request>,
    subscribers: BTreeMap<SubscriberId, tmpsc::UnboundedSender<WireMessage>>,
    seq: u64,
    ticks_since_update: u64,
    started_at: Instant,
    last_tick_at: Option<Instant>,
    max_gap_ms: u64,
    advisor_calls: u64,
    advisor_failures: u64,
    latency_total_ms: u64,
    metrics: Arc<Metrics>,
}

impl Driver {
    fn run(mut self, rx: mpsc::Receiver<Request>) {
        let interval = Duration::from_secs_f64(1.0 / f64::from(self.session.config().tick_rate.max(1)));
        let mut next_tick: Option<Instant> = None;
        loop {
            if !self.ticking() {
                next_tick = None;
                self.last_tick_at = None;
            }
            let request = if self.ticking() {
                let now = Instant::now();
                let due = *next_tick.get_or_insert(now);
                if now >= due {
                    self.tick();
                    // Falling more than a tick behind skips ahead instead of bursting.
                    next_tick = Some(if now > due + interval { now + interval } else { due + interval });
                    continue;
                }
                match rx.recv_timeout(due - now) {
                    Ok(r) => r,
                    Err(mpsc::RecvTimeoutError::Timeout) => continue,
                    Err(mpsc::RecvTimeoutError::Disconnected) => break,
                }
            } else {
                match rx.recv() {
                    Ok(r) => r,
                    Err(_) => break,
                }
            };
            if !self.handle(request) {
                break;
            }
        }
        self.session.flush_log();
        self.subscribers.clear();
    }

    fn ticking(&self) -> bool {
        self.session.phase() == Phase::Running
            && !(self.session.config().mode == Mode::Lockstep && self.session.advisor_busy())
    }

    fn handle(&mut self, request: Request) -> bool {
        match request {
            Request::Chat { text, channel, reply } => {
                let _ = reply.send(self.chat(&text, channel));
            }
            Request::Decide { proposal_id, decision, reply } => {
                let r = self.session.decide(proposal_id, decision);
                self.publish();
                let _ = reply.send(r);
            }
            Request::Manual { commands, reply } => {
                let _ = reply.send(self.manual(commands));
            }
            Request::Start { reply } => {
                if self.session.phase() == Phase::AwaitingInitialInstruction {
                    self.session.start();
                }
                let _ = reply.send(self.session.phase());
            }
            Request::Status { reply } => {
                let _ = reply.send(self.snapshot());
            }
            Request::Subscribe { id, tx } => self.subscribe(id, tx),
            Request::Unsubscribe { id } => {
                self.subscribers.remove(&id);
            }
            Request::Client { from, message } => self.client(from, message),
            Request::Reject { to, error } => self.send_to(to, WireType::Error, &error),
            Request::Flush { reply } => {
                self.session.flush_log();
                let _ = reply.send(self.session.sink_error().map_or(Ok(()), |e| Err(e.to_string())));
            }
            Request::AdvisorDone { call, reply, latency_ms } => self.advisor_done(call, reply, latency_ms),
            Request::Shutdown => return false,
        }
        true
    }

    fn chat(&mut self, text: &str, channel: Channel) -> Result<Instruction, SessionError> {
        let call = self.session.prepare_instruction(text, channel)?;
        let instruction = call.instruction.clone();
        Metrics::bump(&self.metrics.instructions);
        self.publish();
        let inbox = self.inbox.clone();
        std::thread::spawn(move || {
            let t0 = Instant::now();
            let reply = call.run();
            let latency_ms = t0.elapsed().as_millis() as u64;
            let _ = inbox.send(Request::AdvisorDone { call, reply, latency_ms });
        });
        Ok(instruction)
    }

    fn advisor_done(&mut self, call: AdvisorCall, reply: Result<AdvisorReply, AdvisorError>, latency_ms: u64) {
        self.advisor_calls += 1;
        self.latency_total_ms += latency_ms;
        Metrics::bump(&self.metrics.advisor_calls);
        self.metrics.advisor_latency_ms_total.fetch_add(latency_ms, Ordering::Relaxed);
        match self.session.complete_instruction(call, reply, Some(latency_ms)) {
            Ok(_) => Metrics::bump(&self.metrics.proposals),
            Err(SessionError::Advisor(_)) => {
                self.advisor_failures += 1;
                Metrics::bump(&self.metrics.advisor_failures);
            }
            Err(SessionError::SessionEnded) => {}
            Err(e) => self.broadcast(WireType::Error, &ErrorOut::new(error_code(&e), e.to_string())),
        }
        self.publish();
    }

    fn manual(&mut self, commands: Vec<Command>) -> Result<(), SessionError> {
        self.session.push_manual(commands.clone())?;
        Metrics::bump(&self.metrics.manual_actions);
        self.broadcast(WireType::ManualAction, &ManualIn { commands });
        self.broadcast_state();
        Ok(())
    }

    fn client(&mut self, from: SubscriberId, message: ClientMessage) {
        fn parse<T: serde::de::DeserializeOwned>(v: serde_json::Value) -> Result<T, ErrorOut> {
            serde_json::from_value(v).map_err(|e| ErrorOut::new("bad_payload", e.to_string()))
        }
        let outcome: Result<(), ErrorOut> = match message.kind {
            WireType::ChatIn => parse::<ChatIn>(message.payload)
                .and_then(|c| self.chat(&c.text, c.channel).map(drop).map_err(session_error)),
            WireType::Decision => parse::<DecisionIn>(message.payload).and_then(|d| {
                let r = self.session.decide(d.proposal_id, d.decision);
                self.publish();
                r.map(drop).map_err(|e| ErrorOut { proposal_id: Some(d.proposal_id), ..session_error(e) })
            }),
            WireType::ManualAction => {
                parse::<ManualIn>(message.payload).and_then(|m| self.manual(m.commands).map_err(session_error))
            }
            other => Err(ErrorOut::new("unsupported_type", format!("clients may not send {other:?} frames"))),
        };
        if let Err(e) = outcome {
            self.send_to(from, WireType::Error, &e);
        }
    }

    fn tick(&mut self) {
        let now = Instant::now();
        if let Some(prev) = self.last_tick_at {
            let gap = now.duration_since(prev).as_millis() as u64;
            self.max_gap_ms = self.max_gap_ms.max(gap);
            self.metrics.max_tick_gap_ms.fetch_max(gap, Ordering::Relaxed);
        }
        self.last_tick_at = Some(now);
        let elapsed =
            (self.session.config().mode == Mode::Realtime).then(|| self.started_at.elapsed().as_millis() as u64);
        if let Err(e) = self.session.advance(elapsed) {
            self.broadcast(WireType::Error, &ErrorOut::new(error_code(&e), e.to_string()));
        }
        Metrics::bump(&self.metrics.ticks);
        self.publish();
        if self.session.state().tick.is_multiple_of(METRICS_EVERY) {
            let m = self.session_metrics();
            self.broadcast(WireType::Metrics, &m);
        }
    }

    fn session_metrics(&self) -> SessionMetrics {
        SessionMetrics {
            tick: self.session.state().tick,
            max_tick_gap_ms: self.max_gap_ms,
            advisor_calls: self.advisor_calls,
            advisor_failures: self.advisor_failures,
            mean_advisor_latency_ms: (self.advisor_calls > 0)
                .then(|| self.latency_total_ms as f64 / self.advisor_calls as f64),
            subscribers: self.subscribers.len(),
        }
    }

    /// Forwards queued session events. Anything other than a plain tick
    /// triggers an immediate `state_update`; otherwise one goes out every
    /// [`UPDATE_EVERY`] ticks.
    fn publish(&mut self) {
        let mut changed = false;
        let mut ended = None;
        for event in self.session.drain_events() {
            match event {
                SessionEvent::Instruction { instruction } => {
                    changed = true;
                    self.broadcast(WireType::ChatIn, &ChatEcho { instruction });
                }
                SessionEvent::Proposal { proposal, policy } => {
                    changed = true;
                    let in_reply_to = proposal.in_reply_to;
                    self.broadcast(WireType::Proposal, &ProposalOut { proposal, policy, in_reply_to });
                }
                SessionEvent::AdvisorFailure { instruction_id, error } => {
                    changed = true;
                    let e =
                        ErrorOut { instruction_id: Some(instruction_id), ..ErrorOut::new("advisor_failure", error) };
                    self.broadcast(WireType::Error, &e);
                }
                SessionEvent::Decision { proposal_id, decision, synthetic, policy } => {
                    changed = true;
                    Metrics::bump(&self.metrics.decisions);
                    self.broadcast(WireType::Decision, &DecisionOut { proposal_id, decision, synthetic, policy });
                }
                SessionEvent::Stale { proposal_id, superseded_by } => {
                    let e = ErrorOut {
                        proposal_id: Some(proposal_id),
                        ..ErrorOut::new(
                            "proposal_superseded",
                            format!("proposal {proposal_id} superseded by {superseded_by}"),
                        )
                    };
                    self.broadcast(WireType::Error, &e);
                }
                SessionEvent::Tick { tick, .. } => {
                    self.ticks_since_update += 1;
                    if tick % self.session.config().window.stride == 0 {
                        let frame = summarize_frame(self.session.state(), FactionId::Player);
                        self.broadcast(WireType::FrameSummary, &frame);
                    }
                }
                SessionEvent::End { result } => ended = Some(result),
            }
        }
        if changed || ended.is_some() || self.ticks_since_update >= UPDATE_EVERY {
            self.broadcast_state();
        }
        if let Some(result) = ended {
            Metrics::bump(&self.metrics.sessions_ended);
            self.session.flush_log();
            let m = self.session_metrics();
            self.broadcast(WireType::Metrics, &m);
            self.broadcast(WireType::EpisodeEnd, &EpisodeEnd { result });
            // Dropping the senders closes every stream.
            self.subscribers.clear();
        }
    }

    fn snapshot(&self) -> StateUpdate {
        StateUpdate {
            tick: self.session.state().tick,
            phase: self.session.phase(),
            policy: self.session.policy().clone(),
            pending_proposal: self.session.pending_proposal().cloned(),
            advisor_busy: self.session.advisor_busy(),
            state: self.session.state().clone(),
            result: self.session.result().cloned(),
        }
    }

    fn broadcast_state(&mut self) {
        self.ticks_since_update = 0;
        let s = self.snapshot();
        self.broadcast(WireType::StateUpdate, &s);
    }

    fn message(&mut self, kind: WireType, payload: &impl Serialize) -> WireMessage {
        self.seq += 1;
        WireMessage {
            kind,
            session_id: self.session.id().to_string(),
            seq: self.seq,
            payload: serde_json::to_value(payload).unwrap_or(serde_json::Value::Null),
        }
    }

    fn broadcast(&mut self, kind: WireType, payload: &impl Serialize) {
        if self.subscribers.is_empty() {
            return;
        }
        let m = self.message(kind, payload);
        self.subscribers.retain(|_, tx| tx.send(m.clone()).is_ok());
    }

    fn send_to(&mut self, id: SubscriberId, kind: WireType, payload: &impl Serialize) {
        if !self.subscribers.contains_key(&id) {
            return;
        }
        let m = self.message(kind, payload);
        if self.subscribers.get(&id).is_some_and(|tx| tx.send(m).is_err()) {
            self.subscribers.remove(&id);
        }
    }

    fn subscribe(&mut self, id: SubscriberId, tx: tmpsc::UnboundedSender<WireMessage>) {
        let snapshot = self.snapshot();
        let first = self.message(WireType::StateUpdate, &snapshot);
        if tx.send(first).is_err() {
            return;
        }
        match self.session.result().cloned() {
            Some(result) => {
                let end = self.message(WireType::EpisodeEnd, &EpisodeEnd { result });
                let _ = tx.send(end);
            }
            None => {
                self.subscribers.insert(id, tx);
            }
        }
    }
}

fn session_error(e: SessionError) -> ErrorOut {
    ErrorOut::new(error_code(&e), e.to_string())
}
