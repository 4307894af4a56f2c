//! Deterministic tick-based micro-RTS.
//!
//! Two factions on a grid, four unit kinds, six building kinds. No pathing or
//! collision: units step one cell toward their destination every
//! `move_period` ticks, and harvesting is abstract (workers assigned to a node
//! near a completed Base earn one mineral every 8 ticks or one gas every 10).
//!
//! Each [`step`] resolves in a fixed order: orders, production, movement,
//! combat, harvesting, death removal, victory check.

mod action;
mod canonical;
mod config;
mod sim;
mod types;

#[cfg(test)]
mod tests;

pub use action::{merge_manual_actions, ActionSet, Command};
pub use config::{GameConfig, MapPreset, ResourceSpec};
pub use sim::{check_victory, reset, step, DropReason, DroppedCommand, GameEvent, TickResult};
pub use types::*;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RtsError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("step called on a terminal state")]
    StepAfterTerminal,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

pub use canonical::{to_canonical_vec, CanonicalError};

/// Key-ordered compact JSON rendering of any serializable value.
///
/// Same bytes as `serde_json::to_value(value)?.to_string()`, keys sorted
/// regardless of struct field order.
pub fn canonical_json<T: serde::Serialize + ?Sized>(value: &T) -> String {
    let bytes = to_canonical_vec(value).expect("state types serialize infallibly");
    String::from_utf8(bytes).expect("serializer emits utf-8")
}

impl GameState {
    pub fn canonical_json(&self) -> String {
        canonical_json(self)
    }

    pub fn state_hash(&self) -> u64 {
        fnv1a64(&to_canonical_vec(self).expect("state types serialize infallibly"))
    }
}

/// Hex rendering used in logs and on the wire.
pub fn hash_hex(h: u64) -> String {
    format!("{h:016x}")
}
