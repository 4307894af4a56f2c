//! Chain of summarization: one frame, a window of frames, then the full
//! advisor request with the player's instruction. Every stage renders to
//! bounded text; the structured side is exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::advisor::Instruction;
use crate::bt::{Policy, PolicyLibrary, DEFENSE_RADIUS};
use crate::rts::{ActionSet, BuildingKind, Command, FactionId, FactionState, GameState, UnitKind};

pub const FRAME_BUDGET: usize = 1200;
pub const WINDOW_BUDGET: usize = 2000;
pub const REQUEST_BUDGET: usize = 6000;

const TRUNCATION_MARK: &str = "\n[...]";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SummaryError {
    #[error("window has no frames")]
    EmptyWindow,
    #[error("frame ticks must strictly increase ({prev} then {next})")]
    NonIncreasingTicks { prev: u64, next: u64 },
    #[error("instruction is empty")]
    EmptyInstruction,
    #[error("instruction alone needs {needed} characters, budget is {budget}")]
    BudgetImpossible { needed: usize, budget: usize },
}

/// Exact counts for one faction's view of a frame.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FrameStats {
    /// Units per kind name, all four kinds always present.
    pub units: BTreeMap<String, u32>,
    /// Buildings per kind name (complete or not), all six kinds always present.
    pub buildings: BTreeMap<String, u32>,
    pub under_construction: u32,
    pub minerals: u32,
    pub gas: u32,
    pub supply_used: u32,
    pub supply_cap: u32,
    pub army_supply: u32,
    /// Completed Bases.
    pub base_count: u32,
    pub enemy_units: BTreeMap<String, u32>,
    pub enemy_buildings: u32,
    pub enemy_army_supply: u32,
    /// An enemy army unit is within the defense radius of one of our buildings.
    pub under_attack: bool,
}

impl FrameStats {
    /// Every numeric field as `(name, value)`, in a fixed order. Window deltas
    /// are computed over exactly these.
    pub fn fields(&self) -> Vec<(String, i64)> {
        let mut out = Vec::new();
        for (k, v) in &self.units {
            out.push((format!("units.{k}"), i64::from(*v)));
        }
        for (k, v) in &self.buildings {
            out.push((format!("buildings.{k}"), i64::from(*v)));
        }
        for (name, v) in [
            ("under_construction", self.under_construction),
            ("minerals", self.minerals),
            ("gas", self.gas),
            ("supply_used", self.supply_used),
            ("supply_cap", self.supply_cap),
            ("army_supply", self.army_supply),
            ("base_count", self.base_count),
            ("enemy_buildings", self.enemy_buildings),
            ("enemy_army_supply", self.enemy_army_supply),
        ] {
            out.push((name.to_string(), i64::from(v)));
        }
        for (k, v) in &self.enemy_units {
            out.push((format!("enemy_units.{k}"), i64::from(*v)));
        }
        out
    }

    pub fn unit(&self, kind: UnitKind) -> u32 {
        self.units.get(kind.name()).copied().unwrap_or(0)
    }

    pub fn building(&self, kind: BuildingKind) -> u32 {
        self.buildings.get(kind.name()).copied().unwrap_or(0)
    }

    fn own_units(&self) -> u32 {
        self.units.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSummary {
    pub tick: u64,
    pub faction: FactionId,
    pub text: String,
    pub structured: FrameStats,
}

fn unit_counts(f: &FactionState) -> BTreeMap<String, u32> {
    UnitKind::ALL.iter().map(|k| (k.name().to_string(), f.count_units(*k) as u32)).collect()
}

/// True when an enemy army unit stands within [`DEFENSE_RADIUS`] of any
/// building of `faction`.
pub fn under_attack(state: &GameState, faction: FactionId) -> bool {
    let me = state.faction(faction);
    let enemy = state.faction(faction.enemy());
    me.buildings
        .iter()
        .any(|b| enemy.units.iter().any(|u| u.kind.is_army() && u.position.distance(b.position) <= DEFENSE_RADIUS))
}

pub fn frame_stats(state: &GameState, faction: FactionId) -> FrameStats {
    let me = state.faction(faction);
    let enemy = state.faction(faction.enemy());
    FrameStats {
        units: unit_counts(me),
        buildings: BuildingKind::ALL.iter().map(|k| (k.name().to_string(), me.count_buildings(*k) as u32)).collect(),
        under_construction: me.buildings.iter().filter(|b| !b.is_complete()).count() as u32,
        minerals: me.minerals,
        gas: me.gas,
        supply_used: me.supply_used,
        supply_cap: me.supply_cap,
        army_supply: me.army_supply(),
        base_count: me.buildings.iter().filter(|b| b.kind == BuildingKind::Base && b.is_complete()).count() as u32,
        enemy_units: unit_counts(enemy),
        enemy_buildings: enemy.buildings.len() as u32,
        enemy_army_supply: enemy.army_supply(),
        under_attack: under_attack(state, faction),
    }
}

/// Cuts `text` to at most `budget` characters, marking the cut.
fn truncate_chars(text: &str, budget: usize) -> String {
    if text.chars().count() <= budget {
        return text.to_string();
    }
    let keep = budget.saturating_sub(TRUNCATION_MARK.chars().count());
    let mut out: String = text.chars().take(keep).collect();
    out.push_str(TRUNCATION_MARK);
    out
}

fn render_frame(tick: u64, faction: FactionId, s: &FrameStats) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "tick {tick} ({})", faction_name(faction));
    let _ = writeln!(
        t,
        "economy: minerals {}, gas {}, supply {}/{}, workers {}, bases {}",
        s.minerals,
        s.gas,
        s.supply_used,
        s.supply_cap,
        s.unit(UnitKind::Worker),
        s.base_count
    );
    let _ = writeln!(
        t,
        "army: melee {}, ranged {}, air {} (army supply {})",
        s.unit(UnitKind::Melee),
        s.unit(UnitKind::Ranged),
        s.unit(UnitKind::Air),
        s.army_supply
    );
    let structures: Vec<String> =
        BuildingKind::ALL.iter().map(|k| format!("{} {}", k.name(), s.building(*k))).collect();
    let _ = writeln!(t, "structures: {} ({} under construction)", structures.join(", "), s.under_construction);
    let e = |k: UnitKind| s.enemy_units.get(k.name()).copied().unwrap_or(0);
    let _ = writeln!(
        t,
        "enemy: melee {}, ranged {}, air {} (army supply {}), workers {}, structures {}",
        e(UnitKind::Melee),
        e(UnitKind::Ranged),
        e(UnitKind::Air),
        s.enemy_army_supply,
        e(UnitKind::Worker),
        s.enemy_buildings
    );
    let _ = write!(t, "status: {}", if s.under_attack { "UNDER ATTACK" } else { "quiet" });
    t
}

fn faction_name(f: FactionId) -> &'static str {
    match f {
        FactionId::Player => "player",
        FactionId::Opponent => "opponent",
    }
}

pub fn summarize_frame(state: &GameState, faction: FactionId) -> FrameSummary {
    let structured = frame_stats(state, faction);
    let text = truncate_chars(&render_frame(state.tick, faction, &structured), FRAME_BUDGET);
    FrameSummary { tick: state.tick, faction, text, structured }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrendFlags {
    pub army_growing: bool,
    pub losing_units: bool,
    pub expanding: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSummary {
    /// First and last tick covered.
    pub tick_range: (u64, u64),
    pub frames: usize,
    pub text: String,
    /// Last minus first, per [`FrameStats::fields`] entry.
    pub deltas: BTreeMap<String, i64>,
    pub trends: TrendFlags,
}

/// How many frames the session keeps, and how far apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub frames: usize,
    pub stride: u64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig { frames: 20, stride: 10 }
    }
}

/// Aggregates `frames` (oldest first). Frames closer than `stride` ticks to
/// the previously kept one are skipped; the last frame is always kept.
pub fn summarize_window(frames: &[FrameSummary], stride: u64) -> Result<WindowSummary, SummaryError> {
    let (first, last) = match (frames.first(), frames.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(SummaryError::EmptyWindow),
    };
    for w in frames.windows(2) {
        if w[1].tick <= w[0].tick {
            return Err(SummaryError::NonIncreasingTicks { prev: w[0].tick, next: w[1].tick });
        }
    }

    let mut kept: Vec<&FrameSummary> = Vec::new();
    for (i, f) in frames.iter().enumerate() {
        let is_last = i + 1 == frames.len();
        match kept.last() {
            Some(prev) if !is_last && f.tick - prev.tick < stride => {}
            _ => kept.push(f),
        }
    }

    let before: BTreeMap<String, i64> = first.structured.fields().into_iter().collect();
    let deltas: BTreeMap<String, i64> = last
        .structured
        .fields()
        .into_iter()
        .map(|(k, v)| {
            let d = v - before.get(&k).copied().unwrap_or(0);
            (k, d)
        })
        .collect();
    let d = |k: &str| deltas.get(k).copied().unwrap_or(0);
    let trends = TrendFlags {
        army_growing: d("army_supply") > 0,
        losing_units: i64::from(last.structured.own_units()) < i64::from(first.structured.own_units()),
        expanding: d("base_count") > 0,
    };

    let mut head = String::new();
    let _ = writeln!(head, "window: ticks {}..{} ({} frames)", first.tick, last.tick, kept.len());
    let changed: Vec<String> = deltas.iter().filter(|(_, v)| **v != 0).map(|(k, v)| format!("{k} {v:+}")).collect();
    let _ = writeln!(head, "change: {}", if changed.is_empty() { "none".to_string() } else { changed.join(", ") });
    let flags: Vec<&str> =
        [(trends.army_growing, "army growing"), (trends.losing_units, "losing units"), (trends.expanding, "expanding")]
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, n)| *n)
            .collect();
    let _ = writeln!(head, "trends: {}", if flags.is_empty() { "steady".to_string() } else { flags.join(", ") });
    let _ = writeln!(head, "latest:\n{}", last.text);

    let timeline: Vec<String> = kept
        .iter()
        .map(|f| {
            let s = &f.structured;
            format!(
                "t{}: min {} gas {} sup {}/{} army {} enemy army {}{}",
                f.tick,
                s.minerals,
                s.gas,
                s.supply_used,
                s.supply_cap,
                s.army_supply,
                s.enemy_army_supply,
                if s.under_attack { " !" } else { "" }
            )
        })
        .collect();
    // Oldest timeline lines go first when the budget is tight.
    let head_len = head.chars().count() + "timeline:\n".len();
    let mut budget_left = WINDOW_BUDGET.saturating_sub(head_len);
    let mut tail: Vec<&String> = Vec::new();
    for line in timeline.iter().rev() {
        let n = line.chars().count() + 1;
        if n > budget_left {
            break;
        }
        budget_left -= n;
        tail.push(line);
    }
    tail.reverse();
    let mut text = head;
    text.push_str("timeline:\n");
    for line in tail {
        text.push_str(line);
        text.push('\n');
    }
    let text = truncate_chars(text.trim_end(), WINDOW_BUDGET);

    Ok(WindowSummary { tick_range: (first.tick, last.tick), frames: kept.len(), text, deltas, trends })
}

/// Counts of commands emitted since the previous advisor request, by verb.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ActionDigest {
    pub counts: BTreeMap<String, u32>,
}

impl ActionDigest {
    pub fn record(&mut self, actions: &ActionSet) {
        for c in &actions.commands {
            *self.counts.entry(command_verb(c).to_string()).or_default() += 1;
        }
    }

    pub fn total(&self) -> u32 {
        self.counts.values().sum()
    }
}

pub fn command_verb(c: &Command) -> &'static str {
    match c {
        Command::BuildUnit { .. } => "build_unit",
        Command::BuildStructure { .. } => "build_structure",
        Command::AssignWorker { .. } => "assign_worker",
        Command::Move { .. } => "move",
        Command::Attack { .. } => "attack",
        Command::Stop { .. } => "stop",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvisorRequest {
    pub window: WindowSummary,
    pub current_policy: Policy,
    pub last_action_digest: ActionDigest,
    pub instruction: Instruction,
    /// `(name, one-line description)` for every preset.
    pub policy_library_digest: Vec<(String, String)>,
}

pub fn integrate_context(
    window: WindowSummary,
    policy: &Policy,
    action_digest: &ActionDigest,
    instruction: &Instruction,
    library: &PolicyLibrary,
) -> Result<AdvisorRequest, SummaryError> {
    if instruction.text.trim().is_empty() {
        return Err(SummaryError::EmptyInstruction);
    }
    let req = AdvisorRequest {
        window,
        current_policy: policy.clone(),
        last_action_digest: action_digest.clone(),
        instruction: instruction.clone(),
        policy_library_digest: library.digest(),
    };
    req.render()?;
    Ok(req)
}

const WINDOW_SLOT: &str = "{{WINDOW}}";

impl AdvisorRequest {
    /// The prompt text. Only the window section shrinks to meet
    /// [`REQUEST_BUDGET`]; the instruction is always embedded verbatim.
    pub fn render(&self) -> Result<String, SummaryError> {
        let template = self.render_template();
        let fixed = template.chars().count() - WINDOW_SLOT.chars().count();
        if fixed > REQUEST_BUDGET {
            return Err(SummaryError::BudgetImpossible { needed: fixed, budget: REQUEST_BUDGET });
        }
        let window = truncate_chars(&self.window.text, REQUEST_BUDGET - fixed);
        Ok(template.replacen(WINDOW_SLOT, &window, 1))
    }

    fn render_template(&self) -> String {
        let mut t = String::new();
        t.push_str("You advise a real-time strategy player. A behavior tree plays the game; you choose which preset it runs and how its modulators are tuned.\n\n");
        t.push_str("## Policy library\n");
        for (name, desc) in &self.policy_library_digest {
            let _ = writeln!(t, "- {name}: {desc}");
        }
        let p = &self.current_policy;
        let m = &p.modulators;
        let w = &m.composition_weights;
        let _ = write!(
            t,
            "\n## Current policy\n{} (revision {})\ncomposition_weights: melee {}, ranged {}, air {}\nattack_supply_threshold: {}\nworker_target_per_base: {}\nmax_bases: {}\nbuild_turrets: {}\n",
            p.policy_id,
            p.revision,
            w.melee,
            w.ranged,
            w.air,
            m.attack_supply_threshold,
            m.worker_target_per_base,
            m.max_bases,
            m.build_turrets
        );
        t.push_str("\n## Commands since last request\n");
        if self.last_action_digest.counts.is_empty() {
            t.push_str("none\n");
        } else {
            let parts: Vec<String> = self.last_action_digest.counts.iter().map(|(k, v)| format!("{k} {v}")).collect();
            let _ = writeln!(t, "{}", parts.join(", "));
        }
        let _ = write!(t, "\n## Game state\n{WINDOW_SLOT}\n");
        let i = &self.instruction;
        let _ = write!(
            t,
            "\n## Player instruction (id {}, tick {}, {})\n<<<\n{}\n>>>\n",
            i.id,
            i.tick_received,
            i.channel.name(),
            i.text
        );
        t.push_str(
            "\n## Reply format\nReply with a single JSON object in a ```json fence:\n{\"basis\": \"<preset name>\", \"deltas\": {<modulator fields to change>}, \"rationale\": \"<one or two sentences for the player>\"}\n\
If basis names the current policy, deltas apply to the current modulators; otherwise they apply to that preset's defaults.\n\
Valid delta fields: composition_weights {melee, ranged, air} (0-100, not all zero), attack_supply_threshold (0-200), worker_target_per_base (1-30), max_bases (1-4), build_turrets (bool).\n",
        );
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::advisor::Channel;
    use crate::rts::{reset, Cell, GameConfig, Unit};

    fn frame(tick: u64, army: u32) -> FrameSummary {
        let mut s = FrameStats { army_supply: army, ..Default::default() };
        s.units.insert("melee".into(), army);
        FrameSummary { tick, faction: FactionId::Player, text: format!("t{tick}"), structured: s }
    }

    #[test]
    fn reset_frame_counts() {
        let s = reset(&GameConfig::default()).unwrap();
        let f = summarize_frame(&s, FactionId::Player);
        assert_eq!(f.structured.building(BuildingKind::Base), 1);
        assert_eq!(f.structured.unit(UnitKind::Worker), 6);
        assert_eq!(f.structured.army_supply, 0);
        assert_eq!(f.structured.base_count, 1);
        assert!(!f.structured.under_attack);
        assert!(f.text.contains("workers 6"));
    }

    #[test]
    fn enemy_near_building_sets_under_attack() {
        let mut s = reset(&GameConfig::default()).unwrap();
        let base = s.faction(FactionId::Player).buildings[0].position;
        let id = s.next_id;
        s.next_id += 1;
        s.faction_mut(FactionId::Opponent).units.push(Unit::new(id, UnitKind::Melee, Cell::new(base.x + 3, base.y)));
        assert!(summarize_frame(&s, FactionId::Player).structured.under_attack);
        assert!(!summarize_frame(&s, FactionId::Opponent).structured.under_attack);
    }

    #[test]
    fn single_frame_window_has_zero_deltas() {
        let w = summarize_window(&[frame(5, 3)], 10).unwrap();
        assert!(w.deltas.values().all(|d| *d == 0));
        assert_eq!(w.tick_range, (5, 5));
        assert!(!w.trends.army_growing);
    }

    #[test]
    fn growing_army_window() {
        let w = summarize_window(&[frame(0, 4), frame(10, 7), frame(20, 10)], 10).unwrap();
        assert_eq!(w.deltas["army_supply"], 6);
        assert!(w.trends.army_growing);
        assert!(!w.trends.losing_units);
    }

    #[test]
    fn window_errors() {
        assert_eq!(summarize_window(&[], 10), Err(SummaryError::EmptyWindow));
        assert_eq!(
            summarize_window(&[frame(10, 1), frame(10, 1)], 10),
            Err(SummaryError::NonIncreasingTicks { prev: 10, next: 10 })
        );
    }

    #[test]
    fn stride_skips_close_frames_but_keeps_last() {
        let frames: Vec<FrameSummary> = [0, 3, 10, 12, 15].iter().map(|t| frame(*t, 1)).collect();
        let w = summarize_window(&frames, 10).unwrap();
        assert_eq!(w.frames, 3);
        assert_eq!(w.tick_range, (0, 15));
    }

    fn request(text: &str, window_text: String) -> AdvisorRequest {
        let lib = PolicyLibrary::default();
        let mut window = summarize_window(&[frame(0, 1)], 10).unwrap();
        window.text = window_text;
        let mut policy = lib.policy("balanced_macro").unwrap();
        policy.revision = 3;
        let instr = Instruction { id: 1, tick_received: 0, text: text.into(), channel: Channel::Chat };
        AdvisorRequest {
            window,
            current_policy: policy,
            last_action_digest: ActionDigest::default(),
            instruction: instr,
            policy_library_digest: lib.digest(),
        }
    }

    #[test]
    fn instruction_is_verbatim_and_policy_named() {
        let out = request("attack now", "w".into()).render().unwrap();
        assert!(out.contains("\nattack now\n"));
        assert!(out.contains("balanced_macro (revision 3)"));
    }

    #[test]
    fn oversize_window_is_truncated_not_the_instruction() {
        let text = "do it ".repeat(100);
        let out = request(&text, "x".repeat(20_000)).render().unwrap();
        assert!(out.chars().count() <= REQUEST_BUDGET);
        assert!(out.contains(&text));
        assert!(out.contains(TRUNCATION_MARK));
    }

    #[test]
    fn oversize_instruction_is_budget_impossible() {
        let err = request(&"a".repeat(REQUEST_BUDGET), String::new()).render().unwrap_err();
        assert!(matches!(err, SummaryError::BudgetImpossible { .. }));
    }

    #[test]
    fn truncation_respects_char_boundaries() {
        let s = "é".repeat(50);
        let t = truncate_chars(&s, 20);
        assert_eq!(t.chars().count(), 20);
    }
}
