//! Episode logs as JSON Lines, and replay verification.
//!
//! Every record is rendered with sorted keys, so a lockstep episode produces
//! the same bytes every time it runs.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::advisor::{proposed_policy, Instruction, PolicyProposal};
use crate::bt::{BehaviorTree, Policy, PolicyLibrary};
use crate::opponent::{opponent_actions, OpponentProfile};
use crate::rts::{
    canonical_json, hash_hex, merge_manual_actions, reset, step, ActionSet, Command, FactionId, GameEvent,
};
use crate::session::{Decision, EpisodeResult, SessionConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogRecord {
    Header {
        session_id: String,
        /// Config as run, including the opponent's income handicap.
        config: SessionConfig,
        opponent: OpponentProfile,
        initial_policy: Policy,
        initial_hash: String,
    },
    /// One environment step. `tick` is the tick actions were chosen at;
    /// `state_hash` is the hash of the state after the step.
    Tick {
        tick: u64,
        state_hash: String,
        policy_revision: u32,
        bt_actions: Vec<Command>,
        manual_actions: Vec<Command>,
        opponent_actions: Vec<Command>,
        events: Vec<GameEvent>,
        /// Wall-clock milliseconds since the session started; realtime only.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        elapsed_ms: Option<u64>,
    },
    Instruction {
        tick: u64,
        instruction: Instruction,
    },
    Proposal {
        tick: u64,
        proposal: PolicyProposal,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        advisor_latency_ms: Option<u64>,
    },
    AdvisorFailure {
        tick: u64,
        instruction_id: u64,
        error: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        advisor_latency_ms: Option<u64>,
    },
    Decision {
        tick: u64,
        proposal_id: u64,
        decision: Decision,
        /// Issued by auto-approve rather than the player.
        synthetic: bool,
        /// The policy active after the decision.
        policy: Policy,
    },
    Stale {
        tick: u64,
        proposal_id: u64,
        superseded_by: u64,
    },
    End {
        tick: u64,
        result: EpisodeResult,
    },
}

impl LogRecord {
    pub fn to_line(&self) -> String {
        canonical_json(self)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub records: Vec<LogRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReplayError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("log does not start with a header record")]
    MissingHeader,
    #[error("invalid logged config: {0}")]
    Config(String),
    #[error("decision on proposal {0} that never appears in the log")]
    UnknownProposal(u64),
}

impl EpisodeLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.to_line());
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, ReplayError> {
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| ReplayError::Parse { line: i + 1, message: e.to_string() })
            })
            .collect::<Result<_, _>>()?;
        Ok(EpisodeLog { records })
    }

    /// `(tick, state_hash)` of every tick record, in order.
    pub fn tick_hashes(&self) -> Vec<(u64, String)> {
        self.records
            .iter()
            .filter_map(|r| match r {
                LogRecord::Tick { tick, state_hash, .. } => Some((*tick, state_hash.clone())),
                _ => None,
            })
            .collect()
    }

    pub fn result(&self) -> Option<&EpisodeResult> {
        self.records.iter().rev().find_map(|r| match r {
            LogRecord::End { result, .. } => Some(result),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub ticks: usize,
    pub matched: usize,
    /// First tick whose recomputed hash or actions differ from the log.
    pub first_mismatch: Option<u64>,
}

impl ReplayReport {
    pub fn ok(&self) -> bool {
        self.first_mismatch.is_none() && self.matched == self.ticks
    }
}

impl std::fmt::Display for ReplayReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.first_mismatch {
            None => write!(f, "OK: {}/{} hashes match", self.matched, self.ticks),
            Some(t) => write!(f, "MISMATCH: first at tick {t}; {}/{} hashes match", self.matched, self.ticks),
        }
    }
}

/// Re-simulates a log from its header, logged decisions and logged manual
/// actions, and compares every tick against what was recorded.
pub fn replay(log: &EpisodeLog) -> Result<ReplayReport, ReplayError> {
    let Some(LogRecord::Header { config, opponent, initial_policy, initial_hash, .. }) = log.records.first() else {
        return Err(ReplayError::MissingHeader);
    };
    let library = PolicyLibrary::default();
    let tree = BehaviorTree::default();
    let mut state = reset(&config.game).map_err(|e| ReplayError::Config(e.to_string()))?;
    let seed = config.game.rng_seed;
    let mut policy = initial_policy.clone();
    let mut proposals: HashMap<u64, &PolicyProposal> = HashMap::new();
    let mut report = ReplayReport { ticks: 0, matched: 0, first_mismatch: None };
    let mismatch = |report: &mut ReplayReport, tick: u64| {
        report.first_mismatch.get_or_insert(tick);
    };
    if hash_hex(state.state_hash()) != *initial_hash {
        mismatch(&mut report, 0);
    }

    for record in &log.records[1..] {
        match record {
            LogRecord::Proposal { proposal, .. } => {
                proposals.insert(proposal.id, proposal);
            }
            LogRecord::Decision { proposal_id, decision: Decision::Approve, policy: logged, tick, .. } => {
                let p = proposals.get(proposal_id).ok_or(ReplayError::UnknownProposal(*proposal_id))?;
                match proposed_policy(&policy, p, &library) {
                    Ok(next) => {
                        if next != *logged {
                            mismatch(&mut report, *tick);
                        }
                        policy = next;
                    }
                    Err(_) => {
                        mismatch(&mut report, *tick);
                        policy = logged.clone();
                    }
                }
            }
            LogRecord::Tick {
                tick,
                state_hash,
                policy_revision,
                bt_actions,
                manual_actions,
                opponent_actions: logged_opp,
                ..
            } => {
                report.ticks += 1;
                if state.is_terminal() || state.tick != *tick {
                    mismatch(&mut report, *tick);
                    continue;
                }
                let bt = tree
                    .tick(&policy, &library, &state, FactionId::Player)
                    .unwrap_or_else(|_| ActionSet::empty(FactionId::Player));
                let opp = opponent_actions(&tree, &state, opponent, seed)
                    .unwrap_or_else(|_| ActionSet::empty(FactionId::Opponent));
                let manual = ActionSet { faction: FactionId::Player, commands: manual_actions.clone() };
                let merged = merge_manual_actions(&bt, &manual);
                let consistent =
                    bt.commands == *bt_actions && opp.commands == *logged_opp && policy.revision == *policy_revision;
                match step(&state, &merged, &opp) {
                    Ok((next, _)) => {
                        if consistent && hash_hex(next.state_hash()) == *state_hash {
                            report.matched += 1;
                        } else {
                            mismatch(&mut report, *tick);
                        }
                        state = next;
                    }
                    Err(_) => mismatch(&mut report, *tick),
                }
            }
            _ => {}
        }
    }
    Ok(report)
}
