use serde::{Deserialize, Serialize};

use super::types::{BuildingKind, Cell, EntityId, FactionId, NodeId, UnitKind};

/// A single order addressed to one unit or building.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    BuildUnit { building: EntityId, kind: UnitKind },
    BuildStructure { worker: EntityId, kind: BuildingKind, at: Cell },
    AssignWorker { worker: EntityId, node: NodeId },
    Move { unit: EntityId, to: Cell },
    Attack { unit: EntityId, to: Cell },
    Stop { unit: EntityId },
}

impl Command {
    /// The unit or building this command addresses.
    pub fn actor(&self) -> EntityId {
        match *self {
            Command::BuildUnit { building, .. } => building,
            Command::BuildStructure { worker, .. } | Command::AssignWorker { worker, .. } => worker,
            Command::Move { unit, .. } | Command::Attack { unit, .. } | Command::Stop { unit } => unit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSet {
    pub faction: FactionId,
    pub commands: Vec<Command>,
}

impl ActionSet {
    pub fn empty(faction: FactionId) -> Self {
        Self { faction, commands: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.commands.is_empty()
    }
}

/// Overlays a human's direct commands on the tree's output.
///
/// Any tree command addressing an id the manual set also addresses is dropped.
/// Manual commands come first so they get first claim on resources.
pub fn merge_manual_actions(bt_actions: &ActionSet, manual_actions: &ActionSet) -> ActionSet {
    debug_assert_eq!(bt_actions.faction, manual_actions.faction);
    if manual_actions.is_empty() {
        return bt_actions.clone();
    }
    let overridden: std::collections::HashSet<EntityId> = manual_actions.commands.iter().map(Command::actor).collect();
    let mut commands = manual_actions.commands.clone();
    commands.extend(bt_actions.commands.iter().filter(|c| !overridden.contains(&c.actor())).copied());
    ActionSet { faction: bt_actions.faction, commands }
}
