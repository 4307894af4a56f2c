//! Behavior-tree policy execution.
//!
//! A fixed template (see `fixtures/bt_template.json`) whose conditions and
//! emitters read a [`ModulatorSet`]. Adjusting a policy means changing the
//! modulators, never the tree shape.

mod engine;
mod modulators;
mod tree;

#[cfg(test)]
mod tests;

pub use engine::{tick, BehaviorTree, DEFENSE_RADIUS};
pub use modulators::*;
pub use tree::{validate_tree, Emitter, Node, NodeKind, Predicate, TreeDocument, TreeError, TreeNode};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BtError {
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("modulator invariant violated: {0}")]
    InvariantViolation(String),
    #[error("invalid tree: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Tree(Vec<TreeError>),
    #[error("parse error: {0}")]
    Parse(String),
}
