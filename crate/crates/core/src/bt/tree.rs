use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::BtError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Selector,
    Sequence,
    Condition,
    Action,
}

impl NodeKind {
    pub fn is_composite(self) -> bool {
        matches!(self, NodeKind::Selector | NodeKind::Sequence)
    }
}

/// One entry of a [`TreeDocument`]. Composites list child node names; leaves
/// name a predicate or emitter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeNode {
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaf: Option<String>,
}

/// JSON form of a tree template: named nodes plus the name of the root.
/// A node may be referenced from several parents, so the document is a DAG.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeDocument {
    pub root: String,
    pub nodes: BTreeMap<String, TreeNode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    EnemyNearBase,
    ArmyReady,
}

impl Predicate {
    pub const ALL: [Predicate; 2] = [Predicate::EnemyNearBase, Predicate::ArmyReady];

    pub fn name(self) -> &'static str {
        match self {
            Predicate::EnemyNearBase => "enemy_near_base",
            Predicate::ArmyReady => "army_ready",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Emitter {
    BuildTurret,
    RecallArmy,
    BuildSupply,
    TrainWorkers,
    Expand,
    AssignWorkers,
    BuildProduction,
    TrainArmy,
    AttackEnemyMain,
    RallyAtBase,
}

impl Emitter {
    pub const ALL: [Emitter; 10] = [
        Emitter::BuildTurret,
        Emitter::RecallArmy,
        Emitter::BuildSupply,
        Emitter::TrainWorkers,
        Emitter::Expand,
        Emitter::AssignWorkers,
        Emitter::BuildProduction,
        Emitter::TrainArmy,
        Emitter::AttackEnemyMain,
        Emitter::RallyAtBase,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Emitter::BuildTurret => "build_turret",
            Emitter::RecallArmy => "recall_army",
            Emitter::BuildSupply => "build_supply",
            Emitter::TrainWorkers => "train_workers",
            Emitter::Expand => "expand",
            Emitter::AssignWorkers => "assign_workers",
            Emitter::BuildProduction => "build_production",
            Emitter::TrainArmy => "train_army",
            Emitter::AttackEnemyMain => "attack_enemy_main",
            Emitter::RallyAtBase => "rally_at_base",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum TreeError {
    #[error("root node `{name}` is not defined")]
    MissingRoot { name: String },
    #[error("node `{node}` references undefined child `{child}`")]
    UnknownChild { node: String, child: String },
    #[error("composite node `{node}` has no children")]
    EmptyComposite { node: String },
    #[error("leaf node `{node}` has children")]
    LeafWithChildren { node: String },
    #[error("leaf node `{node}` names no predicate or emitter")]
    MissingIdentifier { node: String },
    #[error("composite node `{node}` carries a leaf identifier")]
    CompositeWithIdentifier { node: String },
    #[error("node `{node}` references unknown identifier `{identifier}`")]
    UnknownIdentifier { node: String, identifier: String },
    #[error("cycle through node `{node}`")]
    Cycle { node: String },
}

/// Checks arity, identifiers, child references and acyclicity.
pub fn validate_tree(doc: &TreeDocument) -> Result<(), Vec<TreeError>> {
    let mut errors = Vec::new();
    if !doc.nodes.contains_key(&doc.root) {
        errors.push(TreeError::MissingRoot { name: doc.root.clone() });
    }
    for (name, node) in &doc.nodes {
        let node_name = || name.clone();
        if node.kind.is_composite() {
            if node.children.is_empty() {
                errors.push(TreeError::EmptyComposite { node: node_name() });
            }
            if node.leaf.is_some() {
                errors.push(TreeError::CompositeWithIdentifier { node: node_name() });
            }
            for child in &node.children {
                if !doc.nodes.contains_key(child) {
                    errors.push(TreeError::UnknownChild { node: node_name(), child: child.clone() });
                }
            }
        } else {
            if !node.children.is_empty() {
                errors.push(TreeError::LeafWithChildren { node: node_name() });
            }
            match node.leaf.as_deref() {
                None => errors.push(TreeError::MissingIdentifier { node: node_name() }),
                Some(id) => {
                    let known = match node.kind {
                        NodeKind::Condition => Predicate::parse(id).is_some(),
                        _ => Emitter::parse(id).is_some(),
                    };
                    if !known {
                        errors.push(TreeError::UnknownIdentifier { node: node_name(), identifier: id.to_string() });
                    }
                }
            }
        }
    }

    // Iterative DFS with white/grey/black marking.
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Grey,
        Black,
    }
    let mut marks: HashMap<&str, Mark> = HashMap::new();
    for start in doc.nodes.keys() {
        if marks.contains_key(start.as_str()) {
            continue;
        }
        let mut stack: Vec<(&str, usize)> = vec![(start.as_str(), 0)];
        marks.insert(start.as_str(), Mark::Grey);
        while let Some((name, idx)) = stack.pop() {
            let children = &doc.nodes[name].children;
            if idx < children.len() {
                stack.push((name, idx + 1));
                let child = children[idx].as_str();
                if !doc.nodes.contains_key(child) {
                    continue;
                }
                match marks.get(child) {
                    Some(Mark::Grey) => errors.push(TreeError::Cycle { node: child.to_string() }),
                    Some(Mark::Black) => {}
                    None => {
                        marks.insert(child, Mark::Grey);
                        stack.push((child, 0));
                    }
                }
            } else {
                marks.insert(name, Mark::Black);
            }
        }
    }

    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

/// Validated, resolved tree ready for ticking.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Selector(Vec<Node>),
    Sequence(Vec<Node>),
    Condition(Predicate),
    Action(Emitter),
}

impl Node {
    fn resolve(doc: &TreeDocument, name: &str) -> Node {
        let n = &doc.nodes[name];
        let kids = || n.children.iter().map(|c| Node::resolve(doc, c)).collect();
        match n.kind {
            NodeKind::Selector => Node::Selector(kids()),
            NodeKind::Sequence => Node::Sequence(kids()),
            NodeKind::Condition => {
                Node::Condition(Predicate::parse(n.leaf.as_deref().unwrap_or_default()).expect("validated"))
            }
            NodeKind::Action => Node::Action(Emitter::parse(n.leaf.as_deref().unwrap_or_default()).expect("validated")),
        }
    }
}

const SHIPPED_TEMPLATE: &str = include_str!("../../fixtures/bt_template.json");

impl TreeDocument {
    pub fn shipped() -> Self {
        serde_json::from_str(SHIPPED_TEMPLATE).expect("shipped tree template parses")
    }

    pub fn from_json(text: &str) -> Result<Self, BtError> {
        serde_json::from_str(text).map_err(|e| BtError::Parse(e.to_string()))
    }

    /// Validates and resolves the document into a [`Node`] tree.
    pub fn compile(&self) -> Result<Node, BtError> {
        validate_tree(self).map_err(BtError::Tree)?;
        Ok(Node::resolve(self, &self.root))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(kind: NodeKind, id: &str) -> TreeNode {
        TreeNode { kind, children: vec![], leaf: Some(id.into()) }
    }

    fn composite(kind: NodeKind, children: &[&str]) -> TreeNode {
        TreeNode { kind, children: children.iter().map(|s| s.to_string()).collect(), leaf: None }
    }

    #[test]
    fn shipped_template_is_valid() {
        assert_eq!(validate_tree(&TreeDocument::shipped()), Ok(()));
    }

    #[test]
    fn empty_composite_reported() {
        let doc = TreeDocument {
            root: "root".into(),
            nodes: [("root".to_string(), composite(NodeKind::Selector, &[]))].into(),
        };
        assert_eq!(validate_tree(&doc), Err(vec![TreeError::EmptyComposite { node: "root".into() }]));
    }

    #[test]
    fn unknown_emitter_reported() {
        let doc = TreeDocument {
            root: "root".into(),
            nodes: [
                ("root".to_string(), composite(NodeKind::Sequence, &["a"])),
                ("a".to_string(), leaf(NodeKind::Action, "xyz")),
            ]
            .into(),
        };
        assert_eq!(
            validate_tree(&doc),
            Err(vec![TreeError::UnknownIdentifier { node: "a".into(), identifier: "xyz".into() }])
        );
    }

    #[test]
    fn cycles_and_bad_references_reported() {
        let doc = TreeDocument {
            root: "root".into(),
            nodes: [
                ("root".to_string(), composite(NodeKind::Sequence, &["loop", "ghost"])),
                ("loop".to_string(), composite(NodeKind::Selector, &["root"])),
            ]
            .into(),
        };
        let errors = validate_tree(&doc).unwrap_err();
        assert!(errors.contains(&TreeError::UnknownChild { node: "root".into(), child: "ghost".into() }));
        assert!(errors.iter().any(|e| matches!(e, TreeError::Cycle { .. })));
    }

    #[test]
    fn leaf_with_children_reported() {
        let mut bad = leaf(NodeKind::Condition, "army_ready");
        bad.children.push("x".into());
        let doc = TreeDocument {
            root: "root".into(),
            nodes: [
                ("root".to_string(), composite(NodeKind::Sequence, &["c"])),
                ("c".to_string(), bad),
                ("x".to_string(), leaf(NodeKind::Action, "expand")),
            ]
            .into(),
        };
        let errors = validate_tree(&doc).unwrap_err();
        assert!(errors.contains(&TreeError::LeafWithChildren { node: "c".into() }));
    }

    #[test]
    fn shared_subtree_is_not_a_cycle() {
        let doc = TreeDocument::shipped();
        let shared = doc.nodes.values().flat_map(|n| n.children.iter()).filter(|c| *c == "macro").count();
        assert_eq!(shared, 2);
        assert!(doc.compile().is_ok());
    }
}
