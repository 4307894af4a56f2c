//! A single-player session running in the page, with the scripted advisor.
//!
//! The demo speaks the service's wire format in both directions: controls
//! produce client frames, and every change comes back as server frames that
//! feed the same [`ViewModel`] a socket client would use.

use serde_json::{json, Value};

use cmdr_core::advisor::Channel;
use cmdr_core::rts::{Command, FactionId, GameConfig, MapPreset};
use cmdr_core::session::{
    scripted_advisor, Decision, LogMode, Phase, Session, SessionConfig, SessionError, SessionEvent,
};
use cmdr_core::summarizer::summarize_frame;

use crate::view::ViewModel;

const UPDATE_EVERY: u32 = 5;

pub struct Demo {
    session: Session,
    session_id: String,
    seq: u64,
    since_update: u32,
    outbox: Vec<Value>,
    view: ViewModel,
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("session types serialize infallibly")
}

impl Demo {
    pub fn new(seed: u64, difficulty: u8) -> Result<Self, String> {
        let config = SessionConfig {
            game: GameConfig::generate(MapPreset::Corner, seed),
            opponent_difficulty: difficulty,
            ..SessionConfig::default()
        };
        let advisor = scripted_advisor(&config.advisor).map_err(|e| e.to_string())?;
        let id = format!("local-{seed}");
        let mut session =
            Session::with_log(id.clone(), config, advisor, LogMode::Off, None).map_err(|e| e.to_string())?;
        session.set_collect_events(true);
        let mut demo =
            Demo { session, session_id: id, seq: 0, since_update: 0, outbox: Vec::new(), view: ViewModel::new() };
        demo.state_update();
        Ok(demo)
    }

    pub fn view(&self) -> &ViewModel {
        &self.view
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    /// Server frames emitted since the last call, oldest first.
    pub fn take_frames(&mut self) -> Vec<Value> {
        std::mem::take(&mut self.outbox)
    }

    fn emit(&mut self, kind: &str, payload: Value) {
        self.seq += 1;
        let frame = json!({ "type": kind, "session_id": self.session_id, "seq": self.seq, "payload": payload });
        self.view.apply(&frame).expect("demo frames are well formed");
        self.outbox.push(frame);
    }

    fn state_update(&mut self) {
        self.since_update = 0;
        let s = &self.session;
        let mut payload = json!({
            "tick": s.state().tick,
            "phase": to_value(&s.phase()),
            "policy": to_value(s.policy()),
            "pending_proposal": to_value(&s.pending_proposal()),
            "advisor_busy": s.advisor_busy(),
            "state": to_value(s.state()),
        });
        if let Some(r) = s.result() {
            payload["result"] = to_value(r);
        }
        self.emit("state_update", payload);
    }

    fn error(&mut self, code: &str, message: String, extra: Value) {
        let mut payload = json!({ "code": code, "message": message });
        if let (Some(p), Some(e)) = (payload.as_object_mut(), extra.as_object()) {
            p.extend(e.clone());
        }
        self.emit("error", payload);
    }

    fn publish(&mut self) {
        let mut changed = false;
        let mut ended = None;
        for event in self.session.drain_events() {
            match event {
                SessionEvent::Instruction { instruction } => {
                    changed = true;
                    self.emit("chat_in", json!({ "instruction": to_value(&instruction) }));
                }
                SessionEvent::Proposal { proposal, policy } => {
                    changed = true;
                    let in_reply_to = proposal.in_reply_to;
                    self.emit("proposal", json!({ "proposal": to_value(&proposal), "policy": to_value(&policy), "in_reply_to": in_reply_to }));
                }
                SessionEvent::AdvisorFailure { instruction_id, error } => {
                    changed = true;
                    self.error("advisor_failure", error, json!({ "instruction_id": instruction_id }));
                }
                SessionEvent::Decision { proposal_id, decision, synthetic, policy } => {
                    changed = true;
                    let payload = json!({
                        "proposal_id": proposal_id,
                        "decision": to_value(&decision),
                        "synthetic": synthetic,
                        "policy": to_value(&policy),
                    });
                    self.emit("decision", payload);
                }
                SessionEvent::Stale { proposal_id, superseded_by } => {
                    let message = format!("proposal {proposal_id} superseded by {superseded_by}");
                    self.error("proposal_superseded", message, json!({ "proposal_id": proposal_id }));
                }
                SessionEvent::Tick { tick, .. } => {
                    self.since_update += 1;
                    if tick % self.session.config().window.stride == 0 {
                        let frame = summarize_frame(self.session.state(), FactionId::Player);
                        self.emit("frame_summary", to_value(&frame));
                    }
                }
                SessionEvent::End { result } => ended = Some(result),
            }
        }
        if changed || ended.is_some() || self.since_update >= UPDATE_EVERY {
            self.state_update();
        }
        if let Some(result) = ended {
            self.emit("episode_end", json!({ "result": to_value(&result) }));
        }
    }

    fn rejected(&mut self, e: SessionError) {
        // Advisor failures already arrived as an event.
        if !matches!(e, SessionError::Advisor(_)) {
            self.error(e.code(), e.to_string(), json!({}));
        }
    }

    /// Handles one client frame, as the service would for a socket client.
    /// Problems come back as `error` frames.
    pub fn send(&mut self, frame: &Value) {
        let payload = frame["payload"].clone();
        let outcome = match frame["type"].as_str().unwrap_or_default() {
            "chat_in" => {
                let text = payload["text"].as_str().unwrap_or_default();
                let channel = if payload["channel"] == "transcript" { Channel::Transcript } else { Channel::Chat };
                self.session.handle_instruction(text, channel).map(|_| ())
            }
            "decision" => {
                let decision = match payload["decision"].as_str() {
                    Some("approve") => Decision::Approve,
                    Some("reject") => Decision::Reject,
                    _ => return self.error("bad_payload", "decision must be approve or reject".into(), json!({})),
                };
                let Some(id) = payload["proposal_id"].as_u64() else {
                    return self.error("bad_payload", "proposal_id is required".into(), json!({}));
                };
                self.session.decide(id, decision).map(|_| ())
            }
            "manual_action" => {
                let commands: Vec<Command> = match serde_json::from_value(payload["commands"].clone()) {
                    Ok(c) => c,
                    Err(e) => return self.error("bad_payload", e.to_string(), json!({})),
                };
                let pushed = self.session.push_manual(commands.clone());
                if pushed.is_ok() {
                    self.emit("manual_action", json!({ "commands": to_value(&commands) }));
                    self.state_update();
                }
                pushed
            }
            other => {
                return self.error("unsupported_type", format!("clients may not send `{other}` frames"), json!({}))
            }
        };
        if let Err(e) = outcome {
            self.rejected(e);
        }
        self.publish();
    }

    /// Plays up to `ticks` steps, leaving the pre-game phase if needed.
    /// Returns the number of ticks played.
    pub fn advance(&mut self, ticks: u32) -> u32 {
        if self.session.phase() == Phase::AwaitingInitialInstruction {
            self.session.start();
        }
        let mut played = 0;
        while played < ticks && self.session.phase() != Phase::Ended {
            if let Err(e) = self.session.advance(None) {
                self.rejected(e);
                break;
            }
            played += 1;
            self.publish();
        }
        played
    }
}
