//! Client view state, a pure function of received wire frames plus local
//! input. Nothing here simulates the game; the map comes from the latest
//! `state_update`.

use std::collections::BTreeSet;

use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Connection {
    /// Waiting for the snapshot that opens every stream.
    Connecting,
    Live,
    /// `episode_end` arrived; the stream is closed for good.
    Ended,
    Disconnected,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Entry {
    Instruction { id: u64, tick: u64, text: String, channel: String },
    Proposal { id: u64, in_reply_to: Option<u64>, basis: String, rationale: String },
    Decision { proposal_id: u64, decision: String, synthetic: bool, revision: u64 },
    Error { code: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyPanel {
    pub policy_id: String,
    pub revision: u64,
    pub modulators: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProposalCard {
    pub id: u64,
    pub basis: String,
    pub rationale: String,
    pub in_reply_to: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verb {
    Move,
    Attack,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViewError {
    NotAFrame(String),
    UnknownType(String),
}

impl std::fmt::Display for ViewError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ViewError::NotAFrame(m) => write!(f, "not a wire frame: {m}"),
            ViewError::UnknownType(t) => write!(f, "unknown frame type `{t}`"),
        }
    }
}

impl std::error::Error for ViewError {}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViewModel {
    pub connection: Connection,
    pub session_id: Option<String>,
    pub last_seq: u64,
    pub tick: u64,
    pub phase: String,
    pub advisor_busy: bool,
    /// The `state` object of the latest `state_update`.
    pub state: Option<Value>,
    pub policy: Option<PolicyPanel>,
    pub transcript: Vec<Entry>,
    pub pending: Option<ProposalCard>,
    pub result: Option<Value>,
    /// Latest error message, shown until the next one.
    pub toast: Option<String>,
    /// Proposals whose instruction has not been shown yet.
    #[serde(skip)]
    held: Vec<Entry>,
    #[serde(skip)]
    instructions: BTreeSet<u64>,
}

impl Default for ViewModel {
    fn default() -> Self {
        ViewModel {
            connection: Connection::Connecting,
            session_id: None,
            last_seq: 0,
            tick: 0,
            phase: String::new(),
            advisor_busy: false,
            state: None,
            policy: None,
            transcript: Vec::new(),
            pending: None,
            result: None,
            toast: None,
            held: Vec::new(),
            instructions: BTreeSet::new(),
        }
    }
}

fn u(v: &Value) -> u64 {
    v.as_u64().unwrap_or(0)
}

fn s(v: &Value) -> String {
    v.as_str().unwrap_or_default().to_string()
}

fn panel(policy: &Value) -> PolicyPanel {
    PolicyPanel {
        policy_id: s(&policy["policy_id"]),
        revision: u(&policy["revision"]),
        modulators: policy["modulators"].clone(),
    }
}

fn card(p: &Value) -> ProposalCard {
    ProposalCard {
        id: u(&p["id"]),
        basis: s(&p["basis"]),
        rationale: s(&p["rationale"]),
        in_reply_to: p["in_reply_to"].as_u64(),
    }
}

impl ViewModel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Applies one server frame. Frames at or below the last seen `seq` are
    /// ignored, except the snapshot that opens a (re)connection.
    pub fn apply(&mut self, frame: &Value) -> Result<(), ViewError> {
        let kind = frame["type"].as_str().ok_or_else(|| ViewError::NotAFrame("missing `type`".into()))?;
        let seq = frame["seq"].as_u64().ok_or_else(|| ViewError::NotAFrame("missing `seq`".into()))?;
        let p = &frame["payload"];
        if !p.is_object() {
            return Err(ViewError::NotAFrame("payload is not an object".into()));
        }
        let opening = self.connection == Connection::Connecting && kind == "state_update";
        if self.connection == Connection::Connecting && !opening {
            return Ok(());
        }
        if !opening && seq <= self.last_seq {
            return Ok(());
        }
        if self.connection == Connection::Ended {
            return Ok(());
        }
        self.last_seq = seq;
        if let Some(id) = frame["session_id"].as_str() {
            self.session_id = Some(id.to_string());
        }
        match kind {
            "state_update" => {
                self.connection = Connection::Live;
                self.tick = u(&p["tick"]);
                self.phase = s(&p["phase"]);
                self.advisor_busy = p["advisor_busy"].as_bool().unwrap_or(false);
                self.state = Some(p["state"].clone());
                self.policy = Some(panel(&p["policy"]));
                self.pending = p["pending_proposal"].as_object().map(|_| card(&p["pending_proposal"]));
                if !p["result"].is_null() {
                    self.result = Some(p["result"].clone());
                }
            }
            "chat_in" => {
                let i = &p["instruction"];
                let id = u(&i["id"]);
                if self.instructions.insert(id) {
                    self.transcript.push(Entry::Instruction {
                        id,
                        tick: u(&i["tick_received"]),
                        text: s(&i["text"]),
                        channel: s(&i["channel"]),
                    });
                }
                self.release_held();
            }
            "proposal" => {
                let c = card(&p["proposal"]);
                let entry = Entry::Proposal {
                    id: c.id,
                    in_reply_to: c.in_reply_to,
                    basis: c.basis.clone(),
                    rationale: c.rationale.clone(),
                };
                self.pending = Some(c);
                self.held.push(entry);
                self.release_held();
            }
            "decision" => {
                let id = u(&p["proposal_id"]);
                if self.pending.as_ref().is_some_and(|c| c.id == id) {
                    self.pending = None;
                }
                self.policy = Some(panel(&p["policy"]));
                self.transcript.push(Entry::Decision {
                    proposal_id: id,
                    decision: s(&p["decision"]),
                    synthetic: p["synthetic"].as_bool().unwrap_or(false),
                    revision: u(&p["policy"]["revision"]),
                });
            }
            "error" => {
                let (code, message) = (s(&p["code"]), s(&p["message"]));
                if code == "proposal_superseded" {
                    let stale = p["proposal_id"].as_u64();
                    if self.pending.as_ref().is_some_and(|c| Some(c.id) == stale) {
                        self.pending = None;
                    }
                }
                self.toast = Some(message.clone());
                self.transcript.push(Entry::Error { code, message });
            }
            "episode_end" => {
                self.result = Some(p["result"].clone());
                self.phase = "ended".into();
                self.pending = None;
                self.connection = Connection::Ended;
            }
            "frame_summary" | "metrics" | "manual_action" => {}
            other => return Err(ViewError::UnknownType(other.to_string())),
        }
        Ok(())
    }

    fn release_held(&mut self) {
        let known = &self.instructions;
        let (ready, wait): (Vec<Entry>, Vec<Entry>) = self.held.drain(..).partition(|e| match e {
            Entry::Proposal { in_reply_to: Some(i), .. } => known.contains(i),
            _ => true,
        });
        self.held = wait;
        self.transcript.extend(ready);
    }

    /// The socket dropped. The view is kept until the next snapshot.
    pub fn disconnect(&mut self) {
        if self.connection != Connection::Ended {
            self.connection = Connection::Disconnected;
        }
    }

    /// A new socket is open; the next `state_update` resynchronises.
    pub fn reconnect(&mut self) {
        if self.connection != Connection::Ended {
            self.connection = Connection::Connecting;
        }
    }

    pub fn controls_enabled(&self) -> bool {
        self.connection == Connection::Live && self.phase != "ended"
    }

    pub fn chat_frame(&self, text: &str, transcript: bool) -> Option<Value> {
        let text = text.trim();
        if !self.controls_enabled() || text.is_empty() {
            return None;
        }
        let channel = if transcript { "transcript" } else { "chat" };
        Some(json!({ "type": "chat_in", "payload": { "text": text, "channel": channel } }))
    }

    pub fn decision_frame(&self, approve: bool) -> Option<Value> {
        let card = self.pending.as_ref().filter(|_| self.controls_enabled())?;
        let decision = if approve { "approve" } else { "reject" };
        Some(json!({ "type": "decision", "payload": { "proposal_id": card.id, "decision": decision } }))
    }

    fn player_units(&self) -> impl Iterator<Item = &Value> {
        self.state.iter().flat_map(|s| s["factions"][0]["units"].as_array().into_iter().flatten())
    }

    /// Player unit ids inside the inclusive cell rectangle.
    pub fn select(&self, from: (i32, i32), to: (i32, i32)) -> Vec<u64> {
        let (x0, x1) = (from.0.min(to.0), from.0.max(to.0));
        let (y0, y1) = (from.1.min(to.1), from.1.max(to.1));
        self.player_units()
            .filter(|u| {
                let (x, y) = (
                    u["position"]["x"].as_i64().unwrap_or(-1) as i32,
                    u["position"]["y"].as_i64().unwrap_or(-1) as i32,
                );
                (x0..=x1).contains(&x) && (y0..=y1).contains(&y)
            })
            .map(|u| u["id"].as_u64().unwrap_or(0))
            .collect()
    }

    /// A `manual_action` frame ordering `ids` to `to`, or `None` when the
    /// selection is empty, includes anything that is not a live player unit,
    /// or controls are disabled.
    pub fn unit_command_frame(&self, ids: &[u64], to: (i32, i32), verb: Verb) -> Option<Value> {
        if !self.controls_enabled() || ids.is_empty() {
            return None;
        }
        let own: BTreeSet<u64> = self.player_units().filter_map(|u| u["id"].as_u64()).collect();
        if !ids.iter().all(|id| own.contains(id)) {
            return None;
        }
        let name = match verb {
            Verb::Move => "move",
            Verb::Attack => "attack",
        };
        let commands: Vec<Value> =
            ids.iter().map(|id| json!({ "command": name, "unit": id, "to": { "x": to.0, "y": to.1 } })).collect();
        Some(json!({ "type": "manual_action", "payload": { "commands": commands } }))
    }
}
