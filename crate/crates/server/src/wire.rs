//! Messages exchanged over `/session/<id>/ws`, one JSON text frame each.
//!
//! Server frames carry a `seq` that strictly increases per session. Client
//! frames may carry their own `seq`; when present it must increase per
//! connection.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use cmdr_core::advisor::{Channel, Instruction, PolicyProposal};
use cmdr_core::bt::Policy;
use cmdr_core::rts::{Command, GameState};
use cmdr_core::session::{Decision, EpisodeResult, Phase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WireType {
    StateUpdate,
    FrameSummary,
    ChatIn,
    Proposal,
    Decision,
    ManualAction,
    EpisodeEnd,
    Error,
    Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    #[serde(rename = "type")]
    pub kind: WireType,
    pub session_id: String,
    pub seq: u64,
    pub payload: Value,
}

/// A frame sent by a client. Only `chat_in`, `decision` and `manual_action`
/// are accepted.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ClientMessage {
    #[serde(rename = "type")]
    pub kind: WireType,
    #[serde(default)]
    pub seq: Option<u64>,
    #[serde(default)]
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatIn {
    pub text: String,
    #[serde(default)]
    pub channel: Channel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionIn {
    pub proposal_id: u64,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManualIn {
    pub commands: Vec<Command>,
}

/// Payload of `state_update`: always a full snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateUpdate {
    pub tick: u64,
    pub phase: Phase,
    pub policy: Policy,
    pub pending_proposal: Option<PolicyProposal>,
    pub advisor_busy: bool,
    pub state: GameState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<EpisodeResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatEcho {
    pub instruction: Instruction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalOut {
    pub proposal: PolicyProposal,
    /// What the policy would become if approved now.
    pub policy: Policy,
    pub in_reply_to: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionOut {
    pub proposal_id: u64,
    pub decision: Decision,
    pub synthetic: bool,
    pub policy: Policy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorOut {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposal_id: Option<u64>,
}

impl ErrorOut {
    pub fn new(code: impl Into<String>, message: impl Into<String>) -> Self {
        ErrorOut { code: code.into(), message: message.into(), instruction_id: None, proposal_id: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEnd {
    pub result: EpisodeResult,
}

/// Per-session timing, sent every few seconds of game time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub tick: u64,
    pub max_tick_gap_ms: u64,
    pub advisor_calls: u64,
    pub advisor_failures: u64,
    pub mean_advisor_latency_ms: Option<f64>,
    pub subscribers: usize,
}
