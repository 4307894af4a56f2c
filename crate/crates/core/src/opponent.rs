//! Built-in scripted opponents, difficulty 1 (weakest) to 6.
//!
//! Each difficulty is a modulator preset driven through the same behavior
//! tree as the player, plus an income handicap and a reaction period: the
//! opponent only re-evaluates its tree on ticks where
//! `(tick + seed) % reaction_ticks == 0`. The seed also shifts the
//! attack threshold by a few supply, per game.

use serde::{Deserialize, Serialize};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bt::{BehaviorTree, CompositionWeights, ModulatorSet, MAX_ATTACK_THRESHOLD};
use crate::rts::{ActionSet, FactionId, GameState};

const PERSONALITY_SALT: u64 = 0x6f70_706f_6e65_6e74;
/// Largest seed-driven change to the attack threshold, either way.
pub const THRESHOLD_JITTER: u32 = 6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpponentProfile {
    pub difficulty: u8,
    /// Harvest speed in thousandths.
    pub income_permille: u32,
    pub attack_threshold: u32,
    pub worker_target: u32,
    pub max_bases: u32,
    pub build_turrets: bool,
    pub composition_weights: CompositionWeights,
    /// Ticks between tree evaluations.
    pub reaction_ticks: u32,
}

impl OpponentProfile {
    pub fn modulators(&self) -> ModulatorSet {
        ModulatorSet {
            composition_weights: self.composition_weights,
            attack_supply_threshold: self.attack_threshold,
            worker_target_per_base: self.worker_target,
            max_bases: self.max_bases,
            build_turrets: self.build_turrets,
        }
    }

    /// The per-game variant of [`modulators`](Self::modulators): the seed
    /// nudges the attack threshold so that a fixed ladder
    /// still produces a spread of games.
    pub fn modulators_for_seed(&self, seed: u64) -> ModulatorSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ PERSONALITY_SALT);
        let mut m = self.modulators();
        let offset = rng.random_range(0..=2 * THRESHOLD_JITTER) as i64 - THRESHOLD_JITTER as i64;
        m.attack_supply_threshold =
            (m.attack_supply_threshold as i64 + offset).clamp(1, MAX_ATTACK_THRESHOLD as i64) as u32;
        m
    }

    /// Profile that plays `modulators` at full income and full reaction speed.
    pub fn mirror_of(modulators: &ModulatorSet) -> Self {
        OpponentProfile {
            difficulty: 0,
            income_permille: 1000,
            attack_threshold: modulators.attack_supply_threshold,
            worker_target: modulators.worker_target_per_base,
            max_bases: modulators.max_bases,
            build_turrets: modulators.build_turrets,
            composition_weights: modulators.composition_weights,
            reaction_ticks: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OpponentError {
    #[error("difficulty {0} is outside 1..=6")]
    UnknownDifficulty(u8),
    #[error("opponent asked to act on a terminal state")]
    TerminalState,
    #[error("invalid opponent profiles: {0}")]
    InvalidProfiles(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpponentProfiles {
    pub profiles: Vec<OpponentProfile>,
}

const SHIPPED_PROFILES: &str = include_str!("../fixtures/opponent_profiles.json");

impl Default for OpponentProfiles {
    fn default() -> Self {
        Self::from_json(SHIPPED_PROFILES).expect("shipped opponent profiles are valid")
    }
}

impl OpponentProfiles {
    pub fn from_json(text: &str) -> Result<Self, OpponentError> {
        let p: OpponentProfiles =
            serde_json::from_str(text).map_err(|e| OpponentError::InvalidProfiles(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    /// Checks the 1..=6 ladder is complete and monotone: income and worker
    /// target never drop, reaction time never grows with difficulty.
    pub fn validate(&self) -> Result<(), OpponentError> {
        let bad = |m: String| Err(OpponentError::InvalidProfiles(m));
        let levels: Vec<u8> = self.profiles.iter().map(|p| p.difficulty).collect();
        if levels != (1..=6).collect::<Vec<u8>>() {
            return bad(format!("expected difficulties 1..=6 in order, got {levels:?}"));
        }
        for p in &self.profiles {
            if p.reaction_ticks == 0 || p.income_permille == 0 {
                return bad(format!("difficulty {}: reaction_ticks and income must be positive", p.difficulty));
            }
            p.modulators().validate().map_err(|e| OpponentError::InvalidProfiles(e.to_string()))?;
        }
        for w in self.profiles.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if b.income_permille < a.income_permille
                || b.worker_target < a.worker_target
                || b.reaction_ticks > a.reaction_ticks
            {
                return bad(format!("difficulty {} -> {} is not monotone", a.difficulty, b.difficulty));
            }
        }
        Ok(())
    }

    pub fn get(&self, difficulty: u8) -> Result<&OpponentProfile, OpponentError> {
        self.profiles.iter().find(|p| p.difficulty == difficulty).ok_or(OpponentError::UnknownDifficulty(difficulty))
    }
}

/// Commands for the opponent faction this tick.
pub fn opponent_actions(
    tree: &BehaviorTree,
    state: &GameState,
    profile: &OpponentProfile,
    seed: u64,
) -> Result<ActionSet, OpponentError> {
    profile_actions(tree, state, profile, seed, FactionId::Opponent)
}

/// Plays `profile` for either faction; used for self-play between profiles.
pub fn profile_actions(
    tree: &BehaviorTree,
    state: &GameState,
    profile: &OpponentProfile,
    seed: u64,
    faction: FactionId,
) -> Result<ActionSet, OpponentError> {
    if state.is_terminal() {
        return Err(OpponentError::TerminalState);
    }
    let period = u64::from(profile.reaction_ticks.max(1));
    if !(state.tick.wrapping_add(seed)).is_multiple_of(period) {
        return Ok(ActionSet::empty(faction));
    }
    Ok(tree.tick_modulators(&profile.modulators_for_seed(seed), state, faction))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rts::{reset, GameConfig};

    #[test]
    fn shipped_ladder_is_monotone() {
        let p = OpponentProfiles::default();
        assert_eq!(p.profiles.len(), 6);
        let incomes: Vec<u32> = p.profiles.iter().map(|x| x.income_permille).collect();
        assert_eq!(incomes, vec![750, 850, 930, 1000, 1060, 1150]);
    }

    #[test]
    fn non_monotone_ladder_rejected() {
        let mut p = OpponentProfiles::default();
        p.profiles[3].reaction_ticks = 99;
        assert!(p.validate().is_err());
    }

    #[test]
    fn unknown_difficulty() {
        assert_eq!(OpponentProfiles::default().get(9), Err(OpponentError::UnknownDifficulty(9)));
    }

    #[test]
    fn deterministic_and_rejects_terminal() {
        let tree = BehaviorTree::default();
        let profiles = OpponentProfiles::default();
        let profile = profiles.get(6).unwrap();
        let mut s = reset(&GameConfig::default()).unwrap();
        let a = opponent_actions(&tree, &s, profile, 3).unwrap();
        assert_eq!(a, opponent_actions(&tree, &s, profile, 3).unwrap());
        s.faction_mut(FactionId::Player).buildings.clear();
        s.terminal = crate::rts::check_victory(&s);
        assert_eq!(opponent_actions(&tree, &s, profile, 3), Err(OpponentError::TerminalState));
    }

    #[test]
    fn slow_profiles_skip_ticks() {
        let tree = BehaviorTree::default();
        let profiles = OpponentProfiles::default();
        let slow = profiles.get(1).unwrap();
        let s = reset(&GameConfig::default()).unwrap();
        // tick 0 + seed 1 is not a multiple of the reaction period
        assert!(opponent_actions(&tree, &s, slow, 1).unwrap().is_empty());
        assert!(!opponent_actions(&tree, &s, slow, 0).unwrap().is_empty());
    }
}
