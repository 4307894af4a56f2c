//! The command loop: behavior-tree actions every tick, player instructions
//! turned into proposals by an advisor, and a policy that only changes when a
//! proposal is approved.
//!
//! [`Session`] is synchronous and owns its game state. In lockstep use the
//! caller runs the advisor inline ([`Session::handle_instruction`]); a
//! realtime driver instead calls [`Session::prepare_instruction`], runs the
//! returned [`AdvisorCall`] on another thread and feeds the reply back with
//! [`Session::complete_instruction`] while ticks keep flowing.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::advisor::{
    proposed_policy, resolve_proposal, Advisor, AdvisorConfig, AdvisorError, AdvisorReply, Backend, Channel,
    Instruction, PolicyProposal, ScriptedAdvisor, Stage,
};
use crate::bt::{BehaviorTree, Policy, PolicyLibrary};
use crate::log::{EpisodeLog, LogRecord};
use crate::opponent::{opponent_actions, OpponentError, OpponentProfile, OpponentProfiles};
use crate::rts::{
    hash_hex, merge_manual_actions, reset, step, ActionSet, Command, FactionId, GameConfig, GameEvent, GameState,
    Outcome, TickResult,
};
use crate::summarizer::{
    integrate_context, summarize_frame, summarize_window, ActionDigest, AdvisorRequest, FrameSummary, WindowConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// The game waits for every advisor call. Deterministic.
    #[default]
    Lockstep,
    /// Ticks keep running while the advisor thinks.
    Realtime,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lockstep" => Ok(Mode::Lockstep),
            "realtime" => Ok(Mode::Realtime),
            other => Err(format!("unknown mode `{other}` (expected lockstep or realtime)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Approve,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub game: GameConfig,
    pub advisor: AdvisorConfig,
    pub opponent_difficulty: u8,
    /// Plays this profile instead of the ladder entry for
    /// `opponent_difficulty` (mirror matches, self-play).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub opponent_profile: Option<OpponentProfile>,
    pub mode: Mode,
    /// Ticks per second when paced by a driver.
    pub tick_rate: u32,
    pub auto_approve: bool,
    /// Preset active before any proposal is approved.
    pub initial_policy: String,
    pub window: WindowConfig,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            game: GameConfig::default(),
            advisor: AdvisorConfig::default(),
            opponent_difficulty: 1,
            opponent_profile: None,
            mode: Mode::Lockstep,
            tick_rate: 10,
            auto_approve: false,
            initial_policy: "balanced_macro".to_string(),
            window: WindowConfig::default(),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self, library: &PolicyLibrary) -> Result<(), SessionError> {
        let bad = |m: String| Err(SessionError::InvalidConfig(m));
        if !(1..=6).contains(&self.opponent_difficulty) {
            return bad(format!("opponent_difficulty {} is outside 1..=6", self.opponent_difficulty));
        }
        if self.tick_rate == 0 {
            return bad("tick_rate must be positive".into());
        }
        if self.window.frames == 0 || self.window.stride == 0 {
            return bad("window frames and stride must be positive".into());
        }
        if !library.contains(&self.initial_policy) {
            return bad(format!("unknown initial policy `{}`", self.initial_policy));
        }
        self.game.validate().map_err(|e| SessionError::InvalidConfig(e.to_string()))?;
        self.advisor.validate().map_err(|e| SessionError::InvalidConfig(e.to_string()))?;
        if let Some(p) = &self.opponent_profile {
            p.modulators().validate().map_err(|e| SessionError::InvalidConfig(e.to_string()))?;
        }
        Ok(())
    }

    /// Opponent profile this config plays against.
    pub fn opponent(&self) -> Result<OpponentProfile, SessionError> {
        match &self.opponent_profile {
            Some(p) => Ok(p.clone()),
            None => OpponentProfiles::default()
                .get(self.opponent_difficulty)
                .cloned()
                .map_err(|e: OpponentError| SessionError::InvalidConfig(e.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeOutcome {
    Win,
    Loss,
    Draw,
}

impl EpisodeOutcome {
    pub fn from_terminal(outcome: Outcome) -> Self {
        match outcome {
            Outcome::Winner(FactionId::Player) => EpisodeOutcome::Win,
            Outcome::Winner(FactionId::Opponent) => EpisodeOutcome::Loss,
            Outcome::Draw => EpisodeOutcome::Draw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub outcome: EpisodeOutcome,
    pub ticks: u64,
    pub policy_revision_count: u32,
    pub instruction_count: u32,
    pub proposals_accepted: u32,
    pub proposals_rejected: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SessionError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("session has ended")]
    SessionEnded,
    #[error("instruction text is empty")]
    EmptyInstruction,
    #[error("instruction rejected: {0}")]
    BadInstruction(String),
    #[error("an advisor call is already in progress")]
    AdvisorBusy,
    #[error("advisor failed: {0}")]
    Advisor(AdvisorError),
    #[error("unknown proposal {0}")]
    UnknownProposal(u64),
    #[error("proposal {0} is no longer pending")]
    StaleProposal(u64),
    #[error("entity {0} is not a player unit or building")]
    NotOwned(u32),
    #[error("instruction script is not ordered by tick")]
    UnorderedScript,
    #[error("internal error: {0}")]
    Internal(String),
}

impl SessionError {
    /// Stable snake_case code used in error frames and HTTP error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::InvalidConfig(_) => "invalid_config",
            SessionError::SessionEnded => "session_ended",
            SessionError::EmptyInstruction => "empty_instruction",
            SessionError::BadInstruction(_) => "bad_instruction",
            SessionError::AdvisorBusy => "advisor_busy",
            SessionError::Advisor(_) => "advisor_failure",
            SessionError::UnknownProposal(_) => "unknown_proposal",
            SessionError::StaleProposal(_) => "stale_proposal",
            SessionError::NotOwned(_) => "not_owned",
            SessionError::UnorderedScript => "unordered_script",
            SessionError::Internal(_) => "internal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    AwaitingInitialInstruction,
    Running,
    Ended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ProposalStatus {
    Pending,
    Stale,
    Decided,
}

/// Things a driver may want to forward to observers, in the order they
/// happened. Only collected after [`Session::set_collect_events`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Instruction { instruction: Instruction },
    Proposal { proposal: PolicyProposal, policy: Policy },
    AdvisorFailure { instruction_id: u64, error: String },
    Decision { proposal_id: u64, decision: Decision, synthetic: bool, policy: Policy },
    Stale { proposal_id: u64, superseded_by: u64 },
    Tick { tick: u64, events: Vec<GameEvent> },
    End { result: EpisodeResult },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogMode {
    /// Keep records in memory (and in the sink, if any).
    #[default]
    Keep,
    /// Write to the sink only.
    SinkOnly,
    /// No log at all. For batch evaluation.
    Off,
}

/// A prepared advisor request, runnable on any thread.
pub struct AdvisorCall {
    pub instruction: Instruction,
    pub stage: Stage,
    pub request: AdvisorRequest,
    advisor: Arc<dyn Advisor>,
    library: Arc<PolicyLibrary>,
}

impl AdvisorCall {
    pub fn run(&self) -> Result<AdvisorReply, AdvisorError> {
        self.advisor.propose(self.stage, &self.request, &self.library)
    }
}

/// Builds the advisor named by `config`. Only the scripted backend is
/// available here; other backends are supplied by the caller.
pub fn scripted_advisor(config: &AdvisorConfig) -> Result<Arc<dyn Advisor>, SessionError> {
    match config.backend {
        Backend::Scripted => Ok(Arc::new(ScriptedAdvisor::default())),
        other => {
            Err(SessionError::InvalidConfig(format!("the {} backend must be provided by the caller", other.name())))
        }
    }
}

pub struct Session {
    id: String,
    config: SessionConfig,
    library: Arc<PolicyLibrary>,
    tree: BehaviorTree,
    opponent: OpponentProfile,
    advisor: Arc<dyn Advisor>,
    state: GameState,
    policy: Policy,
    frames: VecDeque<FrameSummary>,
    digest: ActionDigest,
    pending: Option<u64>,
    proposals: BTreeMap<u64, (PolicyProposal, ProposalStatus)>,
    next_instruction_id: u64,
    next_proposal_id: u64,
    call_outstanding: bool,
    manual: Vec<Command>,
    started: bool,
    log_mode: LogMode,
    log: EpisodeLog,
    sink: Option<Box<dyn Write + Send>>,
    sink_error: Option<String>,
    collect_events: bool,
    outbox: Vec<SessionEvent>,
    instruction_count: u32,
    accepted: u32,
    rejected: u32,
    result: Option<EpisodeResult>,
}

impl Session {
    pub fn new(id: impl Into<String>, config: SessionConfig, advisor: Arc<dyn Advisor>) -> Result<Self, SessionError> {
        Self::with_log(id, config, advisor, LogMode::Keep, None)
    }

    pub fn with_log(
        id: impl Into<String>,
        mut config: SessionConfig,
        advisor: Arc<dyn Advisor>,
        log_mode: LogMode,
        sink: Option<Box<dyn Write + Send>>,
    ) -> Result<Self, SessionError> {
        let library = Arc::new(PolicyLibrary::default());
        config.validate(&library)?;
        let opponent = config.opponent()?;
        config.game.income_permille[FactionId::Opponent.index()] = opponent.income_permille;
        let state = reset(&config.game).map_err(|e| SessionError::InvalidConfig(e.to_string()))?;
        let policy = library.policy(&config.initial_policy).map_err(|e| SessionError::InvalidConfig(e.to_string()))?;
        let mut session = Session {
            id: id.into(),
            library,
            tree: BehaviorTree::default(),
            opponent,
            advisor,
            frames: VecDeque::new(),
            digest: ActionDigest::default(),
            pending: None,
            proposals: BTreeMap::new(),
            next_instruction_id: 1,
            next_proposal_id: 1,
            call_outstanding: false,
            manual: Vec::new(),
            started: false,
            log_mode,
            log: EpisodeLog::default(),
            sink,
            sink_error: None,
            collect_events: false,
            outbox: Vec::new(),
            instruction_count: 0,
            accepted: 0,
            rejected: 0,
            result: None,
            state,
            policy,
            config,
        };
        session.frames.push_back(summarize_frame(&session.state, FactionId::Player));
        session.record(LogRecord::Header {
            session_id: session.id.clone(),
            config: session.config.clone(),
            opponent: session.opponent.clone(),
            initial_policy: session.policy.clone(),
            initial_hash: hash_hex(session.state.state_hash()),
        });
        Ok(session)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn state(&self) -> &GameState {
        &self.state
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn library(&self) -> &PolicyLibrary {
        &self.library
    }

    pub fn opponent(&self) -> &OpponentProfile {
        &self.opponent
    }

    pub fn log(&self) -> &EpisodeLog {
        &self.log
    }

    pub fn into_log(self) -> EpisodeLog {
        self.log
    }

    pub fn result(&self) -> Option<&EpisodeResult> {
        self.result.as_ref()
    }

    /// First error hit while writing the log sink, if any.
    pub fn sink_error(&self) -> Option<&str> {
        self.sink_error.as_deref()
    }

    pub fn pending_proposal(&self) -> Option<&PolicyProposal> {
        self.pending.and_then(|id| self.proposals.get(&id)).map(|(p, _)| p)
    }

    pub fn advisor_busy(&self) -> bool {
        self.call_outstanding
    }

    pub fn phase(&self) -> Phase {
        if self.state.is_terminal() {
            Phase::Ended
        } else if self.started || self.state.tick > 0 {
            Phase::Running
        } else {
            Phase::AwaitingInitialInstruction
        }
    }

    /// Leaves the pre-game phase; the next [`advance`](Self::advance) plays tick 0.
    pub fn start(&mut self) {
        self.started = true;
    }

    pub fn set_collect_events(&mut self, on: bool) {
        self.collect_events = on;
    }

    pub fn drain_events(&mut self) -> Vec<SessionEvent> {
        std::mem::take(&mut self.outbox)
    }

    pub fn flush_log(&mut self) {
        if let Some(sink) = self.sink.as_mut() {
            if let Err(e) = sink.flush() {
                self.sink_error.get_or_insert(e.to_string());
            }
        }
    }

    fn record(&mut self, record: LogRecord) {
        if self.log_mode == LogMode::Off {
            return;
        }
        if let Some(sink) = self.sink.as_mut() {
            let mut line = record.to_line();
            line.push('\n');
            if let Err(e) = sink.write_all(line.as_bytes()) {
                self.sink_error.get_or_insert(e.to_string());
            }
        }
        if self.log_mode == LogMode::Keep {
            self.log.records.push(record);
        }
    }

    fn emit(&mut self, event: SessionEvent) {
        if self.collect_events {
            self.outbox.push(event);
        }
    }

    fn ensure_live(&self) -> Result<(), SessionError> {
        if self.state.is_terminal() {
            Err(SessionError::SessionEnded)
        } else {
            Ok(())
        }
    }

    /// Window of recent frames plus the current one.
    fn window_frames(&self) -> Vec<FrameSummary> {
        let mut frames: Vec<FrameSummary> = self.frames.iter().cloned().collect();
        if frames.last().is_none_or(|f| f.tick < self.state.tick) {
            frames.push(summarize_frame(&self.state, FactionId::Player));
        }
        frames
    }

    /// Logs the instruction and builds the advisor request for it. At most
    /// one call may be outstanding.
    pub fn prepare_instruction(&mut self, text: &str, channel: Channel) -> Result<AdvisorCall, SessionError> {
        self.ensure_live()?;
        if text.trim().is_empty() {
            return Err(SessionError::EmptyInstruction);
        }
        if self.call_outstanding {
            return Err(SessionError::AdvisorBusy);
        }
        let instruction = Instruction {
            id: self.next_instruction_id,
            tick_received: self.state.tick,
            text: text.to_string(),
            channel,
        };
        let stage = if self.state.tick == 0 && self.accepted == 0 { Stage::Initial } else { Stage::Adjust };
        let frames = match stage {
            Stage::Initial => vec![summarize_frame(&self.state, FactionId::Player)],
            Stage::Adjust => self.window_frames(),
        };
        let window =
            summarize_window(&frames, self.config.window.stride).map_err(|e| SessionError::Internal(e.to_string()))?;
        let request = match integrate_context(window, &self.policy, &self.digest, &instruction, &self.library) {
            Ok(r) => r,
            Err(e) => return Err(SessionError::BadInstruction(e.to_string())),
        };
        self.next_instruction_id += 1;
        self.instruction_count += 1;
        self.digest = ActionDigest::default();
        self.call_outstanding = true;
        self.record(LogRecord::Instruction { tick: self.state.tick, instruction: instruction.clone() });
        self.emit(SessionEvent::Instruction { instruction: instruction.clone() });
        Ok(AdvisorCall { instruction, stage, request, advisor: self.advisor.clone(), library: self.library.clone() })
    }

    /// Turns the advisor's reply into the pending proposal, superseding any
    /// older one. Failures are logged and leave the policy untouched.
    pub fn complete_instruction(
        &mut self,
        call: AdvisorCall,
        reply: Result<AdvisorReply, AdvisorError>,
        latency_ms: Option<u64>,
    ) -> Result<PolicyProposal, SessionError> {
        self.call_outstanding = false;
        let instruction_id = call.instruction.id;
        let checked = reply.and_then(|r| {
            if r.rationale.trim().is_empty() {
                return Err(AdvisorError::Malformed("empty rationale".into()));
            }
            resolve_proposal(&self.policy, &r.basis, &r.deltas, &self.library)?;
            Ok(r)
        });
        if self.state.is_terminal() {
            return Err(SessionError::SessionEnded);
        }
        let reply = match checked {
            Ok(r) => r,
            Err(e) => {
                self.record(LogRecord::AdvisorFailure {
                    tick: self.state.tick,
                    instruction_id,
                    error: e.to_string(),
                    advisor_latency_ms: latency_ms,
                });
                self.emit(SessionEvent::AdvisorFailure { instruction_id, error: e.to_string() });
                return Err(SessionError::Advisor(e));
            }
        };
        let proposal = PolicyProposal {
            id: self.next_proposal_id,
            basis: reply.basis,
            deltas: reply.deltas,
            rationale: reply.rationale,
            source_backend: self.advisor.backend(),
            in_reply_to: Some(instruction_id),
        };
        self.next_proposal_id += 1;
        if let Some(old) = self.pending.take() {
            if let Some(entry) = self.proposals.get_mut(&old) {
                entry.1 = ProposalStatus::Stale;
            }
            self.record(LogRecord::Stale { tick: self.state.tick, proposal_id: old, superseded_by: proposal.id });
            self.emit(SessionEvent::Stale { proposal_id: old, superseded_by: proposal.id });
        }
        self.proposals.insert(proposal.id, (proposal.clone(), ProposalStatus::Pending));
        self.pending = Some(proposal.id);
        self.record(LogRecord::Proposal {
            tick: self.state.tick,
            proposal: proposal.clone(),
            advisor_latency_ms: latency_ms,
        });
        let preview = proposed_policy(&self.policy, &proposal, &self.library).map_err(SessionError::Advisor)?;
        self.emit(SessionEvent::Proposal { proposal: proposal.clone(), policy: preview });
        if self.config.auto_approve {
            self.decide_inner(proposal.id, Decision::Approve, true)?;
        }
        Ok(proposal)
    }

    /// Lockstep path: prepare, ask the advisor, complete.
    pub fn handle_instruction(&mut self, text: &str, channel: Channel) -> Result<PolicyProposal, SessionError> {
        let call = self.prepare_instruction(text, channel)?;
        let reply = call.run();
        self.complete_instruction(call, reply, None)
    }

    pub fn decide(&mut self, proposal_id: u64, decision: Decision) -> Result<Policy, SessionError> {
        self.decide_inner(proposal_id, decision, false)
    }

    fn decide_inner(&mut self, proposal_id: u64, decision: Decision, synthetic: bool) -> Result<Policy, SessionError> {
        self.ensure_live()?;
        let (proposal, status) = self.proposals.get(&proposal_id).ok_or(SessionError::UnknownProposal(proposal_id))?;
        if *status != ProposalStatus::Pending {
            return Err(SessionError::StaleProposal(proposal_id));
        }
        if decision == Decision::Approve {
            let next = proposed_policy(&self.policy, proposal, &self.library).map_err(SessionError::Advisor)?;
            self.policy = next;
            self.accepted += 1;
        } else {
            self.rejected += 1;
        }
        if let Some(entry) = self.proposals.get_mut(&proposal_id) {
            entry.1 = ProposalStatus::Decided;
        }
        self.pending = None;
        self.started = true;
        self.record(LogRecord::Decision {
            tick: self.state.tick,
            proposal_id,
            decision,
            synthetic,
            policy: self.policy.clone(),
        });
        self.emit(SessionEvent::Decision { proposal_id, decision, synthetic, policy: self.policy.clone() });
        Ok(self.policy.clone())
    }

    /// Queues player commands for the next step. They take priority over the
    /// tree's orders for the same actor.
    pub fn push_manual(&mut self, commands: Vec<Command>) -> Result<(), SessionError> {
        self.ensure_live()?;
        for c in &commands {
            if self.state.owner_of(c.actor()) != Some(FactionId::Player) {
                return Err(SessionError::NotOwned(c.actor()));
            }
        }
        self.manual.extend(commands);
        Ok(())
    }

    /// One environment step. `elapsed_ms` is recorded for realtime drivers.
    pub fn advance(&mut self, elapsed_ms: Option<u64>) -> Result<TickResult, SessionError> {
        self.ensure_live()?;
        self.started = true;
        let bt = self
            .tree
            .tick(&self.policy, &self.library, &self.state, FactionId::Player)
            .map_err(|e| SessionError::Internal(e.to_string()))?;
        let manual = ActionSet { faction: FactionId::Player, commands: std::mem::take(&mut self.manual) };
        let merged = merge_manual_actions(&bt, &manual);
        let opp = opponent_actions(&self.tree, &self.state, &self.opponent, self.config.game.rng_seed)
            .map_err(|e| SessionError::Internal(e.to_string()))?;
        self.digest.record(&merged);
        let (next, result) = step(&self.state, &merged, &opp).map_err(|e| SessionError::Internal(e.to_string()))?;
        let tick = self.state.tick;
        if self.log_mode != LogMode::Off {
            self.record(LogRecord::Tick {
                tick,
                state_hash: hash_hex(next.state_hash()),
                policy_revision: self.policy.revision,
                bt_actions: bt.commands,
                manual_actions: manual.commands,
                opponent_actions: opp.commands,
                events: result.events.clone(),
                elapsed_ms,
            });
        }
        self.state = next;
        if self.state.tick.is_multiple_of(self.config.window.stride) {
            self.frames.push_back(summarize_frame(&self.state, FactionId::Player));
            while self.frames.len() > self.config.window.frames {
                self.frames.pop_front();
            }
        }
        self.emit(SessionEvent::Tick { tick: self.state.tick, events: result.events.clone() });
        if let Some(outcome) = self.state.terminal {
            let r = EpisodeResult {
                outcome: EpisodeOutcome::from_terminal(outcome),
                ticks: self.state.tick,
                policy_revision_count: self.policy.revision,
                instruction_count: self.instruction_count,
                proposals_accepted: self.accepted,
                proposals_rejected: self.rejected,
            };
            self.result = Some(r.clone());
            self.record(LogRecord::End { tick: self.state.tick, result: r.clone() });
            self.emit(SessionEvent::End { result: r });
            self.flush_log();
        }
        Ok(result)
    }
}

/// One scripted player message: sent when the game reaches `tick`, then the
/// resulting proposal is approved or rejected (or left alone).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub tick: u64,
    pub text: String,
    #[serde(default)]
    pub decision: Option<Decision>,
}

impl ScriptEntry {
    pub fn new(tick: u64, text: impl Into<String>, decision: Option<Decision>) -> Self {
        ScriptEntry { tick, text: text.into(), decision }
    }
}

/// Plays a whole lockstep episode with the scripted advisor.
pub fn run_episode(
    config: &SessionConfig,
    script: &[ScriptEntry],
) -> Result<(EpisodeResult, EpisodeLog), SessionError> {
    let advisor = scripted_advisor(&config.advisor)?;
    run_episode_with(config, advisor, script, LogMode::Keep)
}

/// Plays a whole lockstep episode. Instructions scheduled for tick `t` are
/// handled before the actions for tick `t` are chosen, so an approval at `t`
/// already shapes the step from `t` to `t + 1`.
pub fn run_episode_with(
    config: &SessionConfig,
    advisor: Arc<dyn Advisor>,
    script: &[ScriptEntry],
    log_mode: LogMode,
) -> Result<(EpisodeResult, EpisodeLog), SessionError> {
    if script.windows(2).any(|w| w[1].tick < w[0].tick) {
        return Err(SessionError::UnorderedScript);
    }
    let id = format!("episode-{}", config.game.rng_seed);
    let mut session = Session::with_log(id, config.clone(), advisor, log_mode, None)?;
    let mut next = 0;
    while !session.state().is_terminal() {
        while next < script.len() && script[next].tick <= session.state().tick {
            let entry = &script[next];
            next += 1;
            match session.handle_instruction(&entry.text, Channel::Chat) {
                Ok(p) => {
                    if let Some(d) = entry.decision {
                        match session.decide(p.id, d) {
                            Ok(_) | Err(SessionError::StaleProposal(_)) => {}
                            Err(e) => return Err(e),
                        }
                    }
                }
                Err(SessionError::Advisor(_)) => {}
                Err(e) => return Err(e),
            }
        }
        session.advance(None)?;
    }
    let result =
        session.result().cloned().ok_or_else(|| SessionError::Internal("episode ended without result".into()))?;
    Ok((result, session.into_log()))
}
