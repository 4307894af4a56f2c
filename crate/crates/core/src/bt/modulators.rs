use serde::{Deserialize, Serialize};

use super::BtError;
use crate::rts::UnitKind;

pub const MAX_WEIGHT: u32 = 100;
pub const MAX_ATTACK_THRESHOLD: u32 = 200;
pub const WORKER_TARGET_RANGE: std::ops::RangeInclusive<u32> = 1..=30;
pub const MAX_BASES_RANGE: std::ops::RangeInclusive<u32> = 1..=4;

/// Relative share of each army kind in the target composition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositionWeights {
    pub melee: u32,
    pub ranged: u32,
    pub air: u32,
}

impl CompositionWeights {
    pub const fn new(melee: u32, ranged: u32, air: u32) -> Self {
        Self { melee, ranged, air }
    }

    pub fn get(&self, kind: UnitKind) -> u32 {
        match kind {
            UnitKind::Melee => self.melee,
            UnitKind::Ranged => self.ranged,
            UnitKind::Air => self.air,
            UnitKind::Worker => 0,
        }
    }

    pub fn total(&self) -> u32 {
        self.melee + self.ranged + self.air
    }

    /// Air weight at least twice the combined ground weight, and nonzero.
    pub fn air_dominant(&self) -> bool {
        self.air > 0 && self.air >= 2 * (self.melee + self.ranged)
    }
}

/// The tunable parameters every tree condition and emitter reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulatorSet {
    pub composition_weights: CompositionWeights,
    /// Army supply needed before the army leaves to attack.
    pub attack_supply_threshold: u32,
    pub worker_target_per_base: u32,
    pub max_bases: u32,
    pub build_turrets: bool,
}

impl ModulatorSet {
    pub fn validate(&self) -> Result<(), BtError> {
        let w = &self.composition_weights;
        let fail = |m: String| Err(BtError::InvariantViolation(m));
        if w.total() == 0 {
            return fail("composition weights must not all be zero".into());
        }
        if [w.melee, w.ranged, w.air].iter().any(|x| *x > MAX_WEIGHT) {
            return fail(format!("composition weights must be at most {MAX_WEIGHT}"));
        }
        if self.attack_supply_threshold > MAX_ATTACK_THRESHOLD {
            return fail(format!("attack_supply_threshold must be at most {MAX_ATTACK_THRESHOLD}"));
        }
        if !WORKER_TARGET_RANGE.contains(&self.worker_target_per_base) {
            return fail(format!("worker_target_per_base must lie in {WORKER_TARGET_RANGE:?}"));
        }
        if !MAX_BASES_RANGE.contains(&self.max_bases) {
            return fail(format!("max_bases must lie in {MAX_BASES_RANGE:?}"));
        }
        Ok(())
    }

    /// Applies `delta` without validating the result.
    pub fn with_delta(&self, delta: &ModulatorDelta) -> ModulatorSet {
        let mut m = *self;
        if let Some(w) = &delta.composition_weights {
            m.composition_weights.melee = w.melee.unwrap_or(m.composition_weights.melee);
            m.composition_weights.ranged = w.ranged.unwrap_or(m.composition_weights.ranged);
            m.composition_weights.air = w.air.unwrap_or(m.composition_weights.air);
        }
        m.attack_supply_threshold = delta.attack_supply_threshold.unwrap_or(m.attack_supply_threshold);
        m.worker_target_per_base = delta.worker_target_per_base.unwrap_or(m.worker_target_per_base);
        m.max_bases = delta.max_bases.unwrap_or(m.max_bases);
        m.build_turrets = delta.build_turrets.unwrap_or(m.build_turrets);
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightDelta {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub melee: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ranged: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub air: Option<u32>,
}

impl WeightDelta {
    pub fn is_empty(&self) -> bool {
        self.melee.is_none() && self.ranged.is_none() && self.air.is_none()
    }
}

/// A partial [`ModulatorSet`]: absent fields are left as they are.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModulatorDelta {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub composition_weights: Option<WeightDelta>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attack_supply_threshold: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worker_target_per_base: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_bases: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub build_turrets: Option<bool>,
}

impl ModulatorDelta {
    pub fn is_empty(&self) -> bool {
        self.composition_weights.is_none_or(|w| w.is_empty())
            && self.attack_supply_threshold.is_none()
            && self.worker_target_per_base.is_none()
            && self.max_bases.is_none()
            && self.build_turrets.is_none()
    }

    pub fn weights(melee: Option<u32>, ranged: Option<u32>, air: Option<u32>) -> Self {
        ModulatorDelta { composition_weights: Some(WeightDelta { melee, ranged, air }), ..Default::default() }
    }
}

/// The executable strategy: a library preset name plus concrete modulators.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Policy {
    pub policy_id: String,
    pub modulators: ModulatorSet,
    /// Bumped once per applied adjustment.
    pub revision: u32,
}

/// Returns `policy` with `delta` applied and the revision bumped.
pub fn apply_modulators(policy: &Policy, delta: &ModulatorDelta) -> Result<Policy, BtError> {
    let modulators = policy.modulators.with_delta(delta);
    modulators.validate()?;
    Ok(Policy { policy_id: policy.policy_id.clone(), modulators, revision: policy.revision + 1 })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyPreset {
    pub id: String,
    pub description: String,
    pub modulators: ModulatorSet,
}

/// The rule-based policies an advisor may choose from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyLibrary {
    pub presets: Vec<PolicyPreset>,
}

const SHIPPED_LIBRARY: &str = include_str!("../../fixtures/policy_library.json");

impl Default for PolicyLibrary {
    fn default() -> Self {
        Self::from_json(SHIPPED_LIBRARY).expect("shipped policy library is valid")
    }
}

impl PolicyLibrary {
    pub fn from_json(text: &str) -> Result<Self, BtError> {
        let lib: PolicyLibrary = serde_json::from_str(text).map_err(|e| BtError::Parse(e.to_string()))?;
        lib.validate()?;
        Ok(lib)
    }

    pub fn validate(&self) -> Result<(), BtError> {
        if self.presets.is_empty() {
            return Err(BtError::InvalidPolicy("policy library is empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for p in &self.presets {
            if !seen.insert(p.id.as_str()) {
                return Err(BtError::InvalidPolicy(format!("duplicate preset `{}`", p.id)));
            }
            p.modulators.validate()?;
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&PolicyPreset> {
        self.presets.iter().find(|p| p.id == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.get(id).is_some()
    }

    /// Revision-0 policy for preset `id`.
    pub fn policy(&self, id: &str) -> Result<Policy, BtError> {
        let preset = self.get(id).ok_or_else(|| BtError::InvalidPolicy(format!("unknown policy `{id}`")))?;
        Ok(Policy { policy_id: preset.id.clone(), modulators: preset.modulators, revision: 0 })
    }

    /// `(name, one-line description)` pairs, in library order.
    pub fn digest(&self) -> Vec<(String, String)> {
        self.presets.iter().map(|p| (p.id.clone(), p.description.clone())).collect()
    }

    pub fn check(&self, policy: &Policy) -> Result<(), BtError> {
        if !self.contains(&policy.policy_id) {
            return Err(BtError::InvalidPolicy(format!("unknown policy `{}`", policy.policy_id)));
        }
        policy.modulators.validate()
    }
}
