//! Advisors turn an [`AdvisorRequest`] into a policy proposal.
//!
//! [`ScriptedAdvisor`] is a deterministic keyword table used for tests and
//! offline play. Network-backed advisors live outside this crate and only
//! need to implement [`Advisor`], usually by sending
//! [`AdvisorRequest::render`] and passing the reply to [`parse_llm_reply`].

use serde::{Deserialize, Serialize};

use crate::bt::{ModulatorDelta, ModulatorSet, Policy, PolicyLibrary, WeightDelta, MAX_ATTACK_THRESHOLD, MAX_WEIGHT};
use crate::rts::UnitKind;
use crate::summarizer::{AdvisorRequest, FrameSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Scripted,
    Http,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Scripted => "scripted",
            Backend::Http => "http",
        }
    }
}

impl std::str::FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "scripted" => Ok(Backend::Scripted),
            "http" => Ok(Backend::Http),
            other => Err(format!("unknown advisor backend `{other}` (expected scripted or http)")),
        }
    }
}

pub const DEFAULT_TIMEOUT_MS: u64 = 8000;
pub const DEFAULT_API_KEY_ENV: &str = "CMDR_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdvisorConfig {
    pub backend: Backend,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub temperature: f64,
    pub timeout_ms: u64,
    /// Name of the environment variable holding the API key. The key itself
    /// is never stored in a config or log.
    pub api_key_env: String,
}

impl Default for AdvisorConfig {
    fn default() -> Self {
        AdvisorConfig {
            backend: Backend::Scripted,
            endpoint: None,
            model: None,
            temperature: 0.0,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
        }
    }
}

impl AdvisorConfig {
    pub fn validate(&self) -> Result<(), AdvisorError> {
        let bad = |m: &str| Err(AdvisorError::Config(m.to_string()));
        if !(0.0..=2.0).contains(&self.temperature) {
            return bad("temperature must lie in [0, 2]");
        }
        if self.timeout_ms == 0 {
            return bad("timeout_ms must be positive");
        }
        if self.backend == Backend::Http {
            let Some(endpoint) = self.endpoint.as_deref() else { return bad("http backend needs an endpoint") };
            let rest = endpoint.strip_prefix("http://").or_else(|| endpoint.strip_prefix("https://"));
            if rest.is_none_or(|r| r.is_empty() || r.starts_with('/')) {
                return bad("endpoint must be an http(s) URL with a host");
            }
            if self.model.as_deref().is_none_or(str::is_empty) {
                return bad("http backend needs a model name");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    #[default]
    Chat,
    Transcript,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::Chat => "chat",
            Channel::Transcript => "transcript",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instruction {
    pub id: u64,
    pub tick_received: u64,
    pub text: String,
    pub channel: Channel,
}

/// What an advisor returns before the session numbers it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdvisorReply {
    pub basis: String,
    #[serde(default)]
    pub deltas: ModulatorDelta,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyProposal {
    pub id: u64,
    pub basis: String,
    pub deltas: ModulatorDelta,
    pub rationale: String,
    pub source_backend: Backend,
    pub in_reply_to: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AdvisorError {
    #[error("advisor unavailable: {0}")]
    Unavailable(String),
    #[error("malformed advisor reply: {0}")]
    Malformed(String),
    #[error("advisor timed out after {0} ms")]
    Timeout(u64),
    #[error("proposal violates invariants: {0}")]
    InvariantViolation(String),
    #[error("bad advisor config: {0}")]
    Config(String),
}

/// Which step of the loop the request is for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Choosing the opening preset from the first instruction.
    Initial,
    /// Adjusting the running policy.
    Adjust,
}

pub trait Advisor: Send + Sync {
    fn backend(&self) -> Backend;

    fn propose(
        &self,
        stage: Stage,
        request: &AdvisorRequest,
        library: &PolicyLibrary,
    ) -> Result<AdvisorReply, AdvisorError>;
}

/// Modulators a proposal would produce. When `basis` names the current
/// policy, deltas apply on top of its live modulators; any other basis starts
/// from that preset's defaults.
pub fn resolve_proposal(
    current: &Policy,
    basis: &str,
    deltas: &ModulatorDelta,
    library: &PolicyLibrary,
) -> Result<ModulatorSet, AdvisorError> {
    let base = if basis == current.policy_id {
        current.modulators
    } else {
        library
            .get(basis)
            .ok_or_else(|| AdvisorError::InvariantViolation(format!("unknown basis `{basis}`")))?
            .modulators
    };
    let m = base.with_delta(deltas);
    m.validate().map_err(|e| AdvisorError::InvariantViolation(e.to_string()))?;
    Ok(m)
}

/// The policy that approving `proposal` on top of `current` activates.
pub fn proposed_policy(
    current: &Policy,
    proposal: &PolicyProposal,
    library: &PolicyLibrary,
) -> Result<Policy, AdvisorError> {
    Ok(Policy {
        policy_id: proposal.basis.clone(),
        modulators: resolve_proposal(current, &proposal.basis, &proposal.deltas, library)?,
        revision: current.revision + 1,
    })
}

fn check_reply(reply: AdvisorReply, current: &Policy, library: &PolicyLibrary) -> Result<AdvisorReply, AdvisorError> {
    if reply.rationale.trim().is_empty() {
        return Err(AdvisorError::Malformed("empty rationale".into()));
    }
    resolve_proposal(current, &reply.basis, &reply.deltas, library)?;
    Ok(reply)
}

fn number(reply: AdvisorReply, id: u64, backend: Backend, in_reply_to: Option<u64>) -> PolicyProposal {
    PolicyProposal {
        id,
        basis: reply.basis,
        deltas: reply.deltas,
        rationale: reply.rationale,
        source_backend: backend,
        in_reply_to,
    }
}

/// Opening proposal from the first frame and instruction.
pub fn select_initial_policy(
    advisor: &dyn Advisor,
    s0_summary: &FrameSummary,
    c0: &Instruction,
    current: &Policy,
    library: &PolicyLibrary,
    proposal_id: u64,
) -> Result<PolicyProposal, AdvisorError> {
    let window = crate::summarizer::summarize_window(std::slice::from_ref(s0_summary), 1)
        .map_err(|e| AdvisorError::Malformed(e.to_string()))?;
    let request = crate::summarizer::integrate_context(window, current, &Default::default(), c0, library)
        .map_err(|e| AdvisorError::Malformed(e.to_string()))?;
    let reply = check_reply(advisor.propose(Stage::Initial, &request, library)?, current, library)?;
    Ok(number(reply, proposal_id, advisor.backend(), Some(c0.id)))
}

pub fn adjust_policy(
    advisor: &dyn Advisor,
    request: &AdvisorRequest,
    library: &PolicyLibrary,
    proposal_id: u64,
) -> Result<PolicyProposal, AdvisorError> {
    call_advisor(advisor, Stage::Adjust, request, library, proposal_id)
}

/// Runs one advisor call and validates the reply against the request's policy.
pub fn call_advisor(
    advisor: &dyn Advisor,
    stage: Stage,
    request: &AdvisorRequest,
    library: &PolicyLibrary,
    proposal_id: u64,
) -> Result<PolicyProposal, AdvisorError> {
    let reply = check_reply(advisor.propose(stage, request, library)?, &request.current_policy, library)?;
    Ok(number(reply, proposal_id, advisor.backend(), Some(request.instruction.id)))
}

/// Extracts `{basis, deltas, rationale}` from free text. A ```json fence is
/// preferred; otherwise the first embedded object with a `basis` key is used.
pub fn parse_llm_reply(raw: &str, current: &Policy, library: &PolicyLibrary) -> Result<AdvisorReply, AdvisorError> {
    let value = fenced_json(raw)
        .or_else(|| embedded_objects(raw).find(|v| v.get("basis").is_some()))
        .ok_or_else(|| AdvisorError::Malformed("no JSON object with a `basis` field".into()))?;
    let reply: AdvisorReply = serde_json::from_value(value).map_err(|e| AdvisorError::Malformed(e.to_string()))?;
    check_reply(reply, current, library)
}

fn fenced_json(raw: &str) -> Option<serde_json::Value> {
    let mut rest = raw;
    while let Some(start) = rest.find("```") {
        let after = &rest[start + 3..];
        let body_start = after.find('\n').map(|i| i + 1).unwrap_or(0);
        let Some(end) = after[body_start..].find("```") else { break };
        let body = &after[body_start..body_start + end];
        if let Ok(v @ serde_json::Value::Object(_)) = serde_json::from_str(body.trim()) {
            return Some(v);
        }
        rest = &after[body_start + end + 3..];
    }
    None
}

fn embedded_objects(raw: &str) -> impl Iterator<Item = serde_json::Value> + '_ {
    raw.match_indices('{').filter_map(move |(i, _)| {
        let mut it = serde_json::Deserializer::from_str(&raw[i..]).into_iter::<serde_json::Value>();
        match it.next() {
            Some(Ok(v @ serde_json::Value::Object(_))) => Some(v),
            _ => None,
        }
    })
}

// ---- scripted advisor ----

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Effect {
    /// Move to another preset with its default modulators.
    Switch { basis: String },
    /// Melee and ranged weights at least 1; air stays dominant if it was.
    GroundFloor,
    /// Air weight raised to at least twice the ground weight.
    AirDominant,
    /// Lower attack threshold by a third.
    Aggressive,
    /// Raise attack threshold by half and build turrets.
    Defensive,
    /// One more base, up to the cap.
    Expand,
    /// Four more workers per base, up to the cap.
    Economy,
    /// `unit` weight raised to at least twice the others combined.
    Focus { unit: UnitKind },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialRule {
    pub keywords: Vec<String>,
    pub basis: String,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdjustRule {
    pub keywords: Vec<String>,
    pub effect: Effect,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefaultChoice {
    pub basis: String,
    pub rationale: String,
}

/// Ordered keyword rules; the first rule with a matching keyword wins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleTable {
    pub initial: Vec<InitialRule>,
    pub initial_default: DefaultChoice,
    pub adjust: Vec<AdjustRule>,
    pub adjust_default_rationale: String,
}

const SHIPPED_RULES: &str = include_str!("../fixtures/advisor_rules.json");

impl Default for RuleTable {
    fn default() -> Self {
        serde_json::from_str(SHIPPED_RULES).expect("shipped advisor rules parse")
    }
}

/// Lowercased alphanumeric words.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(str::to_lowercase).collect()
}

/// Whole-word match; a multi-word keyword must appear as consecutive words.
fn mentions(words: &[String], keyword: &str) -> bool {
    let kw = tokenize(keyword);
    !kw.is_empty() && words.windows(kw.len()).any(|w| w == kw.as_slice())
}

fn matches_any(words: &[String], keywords: &[String]) -> bool {
    keywords.iter().any(|k| mentions(words, k))
}

#[derive(Debug, Clone, Default)]
pub struct ScriptedAdvisor {
    rules: RuleTable,
}

impl ScriptedAdvisor {
    pub fn new(rules: RuleTable) -> Self {
        Self { rules }
    }

    pub fn rules(&self) -> &RuleTable {
        &self.rules
    }

    pub fn initial(&self, text: &str) -> AdvisorReply {
        let words = tokenize(text);
        match self.rules.initial.iter().find(|r| matches_any(&words, &r.keywords)) {
            Some(r) => AdvisorReply {
                basis: r.basis.clone(),
                deltas: ModulatorDelta::default(),
                rationale: r.rationale.clone(),
            },
            None => AdvisorReply {
                basis: self.rules.initial_default.basis.clone(),
                deltas: ModulatorDelta::default(),
                rationale: self.rules.initial_default.rationale.clone(),
            },
        }
    }

    pub fn adjust(&self, text: &str, current: &Policy) -> AdvisorReply {
        let words = tokenize(text);
        let Some(rule) = self.rules.adjust.iter().find(|r| matches_any(&words, &r.keywords)) else {
            return AdvisorReply {
                basis: current.policy_id.clone(),
                deltas: ModulatorDelta::default(),
                rationale: self.rules.adjust_default_rationale.clone(),
            };
        };
        let (basis, deltas) = match &rule.effect {
            Effect::Switch { basis } => (basis.clone(), ModulatorDelta::default()),
            other => (current.policy_id.clone(), effect_delta(other, &current.modulators)),
        };
        AdvisorReply { basis, deltas, rationale: rule.rationale.clone() }
    }
}

impl Advisor for ScriptedAdvisor {
    fn backend(&self) -> Backend {
        Backend::Scripted
    }

    fn propose(
        &self,
        stage: Stage,
        request: &AdvisorRequest,
        _library: &PolicyLibrary,
    ) -> Result<AdvisorReply, AdvisorError> {
        Ok(match stage {
            Stage::Initial => self.initial(&request.instruction.text),
            Stage::Adjust => self.adjust(&request.instruction.text, &request.current_policy),
        })
    }
}

/// `(target, others)` weights with `target >= 2 * sum(others)`, within
/// [`MAX_WEIGHT`].
fn dominate(target: u32, others: [u32; 2]) -> (u32, [u32; 2]) {
    let cap = MAX_WEIGHT / 4;
    let others =
        if 2 * (others[0] + others[1]) > MAX_WEIGHT { [others[0].min(cap), others[1].min(cap)] } else { others };
    let target = target.max(2 * (others[0] + others[1])).clamp(2, MAX_WEIGHT);
    (target, others)
}

fn effect_delta(effect: &Effect, m: &ModulatorSet) -> ModulatorDelta {
    let w = m.composition_weights;
    match effect {
        Effect::Switch { .. } => ModulatorDelta::default(),
        Effect::GroundFloor => {
            let melee = w.melee.max(1);
            let ranged = w.ranged.max(1);
            let air = if w.air_dominant() { w.air.max(2 * (melee + ranged)).min(MAX_WEIGHT) } else { w.air };
            ModulatorDelta::weights(Some(melee), Some(ranged), Some(air))
        }
        Effect::AirDominant => {
            let (air, [melee, ranged]) = dominate(w.air.max(4), [w.melee, w.ranged]);
            ModulatorDelta::weights(Some(melee), Some(ranged), Some(air))
        }
        Effect::Focus { unit } => {
            let delta = match unit {
                UnitKind::Melee => {
                    let (t, [r, a]) = dominate(w.melee, [w.ranged, w.air]);
                    WeightDelta { melee: Some(t), ranged: Some(r), air: Some(a) }
                }
                UnitKind::Ranged => {
                    let (t, [mm, a]) = dominate(w.ranged, [w.melee, w.air]);
                    WeightDelta { melee: Some(mm), ranged: Some(t), air: Some(a) }
                }
                UnitKind::Air | UnitKind::Worker => {
                    let (t, [mm, r]) = dominate(w.air, [w.melee, w.ranged]);
                    WeightDelta { melee: Some(mm), ranged: Some(r), air: Some(t) }
                }
            };
            ModulatorDelta { composition_weights: Some(delta), ..Default::default() }
        }
        Effect::Aggressive => {
            let t = m.attack_supply_threshold;
            ModulatorDelta {
                attack_supply_threshold: Some(t.saturating_sub((t / 3).max(1)).max(1)),
                ..Default::default()
            }
        }
        Effect::Defensive => {
            let t = m.attack_supply_threshold;
            ModulatorDelta {
                attack_supply_threshold: Some((t + (t / 2).max(4)).min(MAX_ATTACK_THRESHOLD)),
                build_turrets: Some(true),
                ..Default::default()
            }
        }
        Effect::Expand => ModulatorDelta {
            max_bases: Some((m.max_bases + 1).min(*crate::bt::MAX_BASES_RANGE.end())),
            ..Default::default()
        },
        Effect::Economy => ModulatorDelta {
            worker_target_per_base: Some((m.worker_target_per_base + 4).min(*crate::bt::WORKER_TARGET_RANGE.end())),
            ..Default::default()
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bt::CompositionWeights;

    fn lib() -> PolicyLibrary {
        PolicyLibrary::default()
    }

    fn resolved(reply: &AdvisorReply, current: &Policy) -> ModulatorSet {
        resolve_proposal(current, &reply.basis, &reply.deltas, &lib()).unwrap()
    }

    #[test]
    fn initial_keywords() {
        let a = ScriptedAdvisor::default();
        assert_eq!(a.initial("watch out, armored units").basis, "ranged_armored");
        assert_eq!(a.initial("rush them early").basis, "melee_rush");
        let hello = a.initial("hello");
        assert_eq!(hello.basis, "balanced_macro");
        assert!(hello.rationale.contains("default"));
    }

    #[test]
    fn whole_words_only() {
        let a = ScriptedAdvisor::default();
        // "fair" contains "air" but is not the word air
        assert_eq!(a.initial("a fair game").basis, "balanced_macro");
        assert_eq!(a.initial("AIR!").basis, "air_dominance");
    }

    #[test]
    fn sky_army_becomes_air_dominant() {
        let a = ScriptedAdvisor::default();
        let cur = lib().policy("balanced_macro").unwrap();
        let r = a.adjust("I want to play a sky army style", &cur);
        assert_eq!(r.basis, "balanced_macro");
        assert!(resolved(&r, &cur).composition_weights.air_dominant());
    }

    #[test]
    fn ground_floor_keeps_air_dominant() {
        let a = ScriptedAdvisor::default();
        let cur = lib().policy("air_dominance").unwrap();
        let r = a.adjust("we should also produce some ground army", &cur);
        let w = resolved(&r, &cur).composition_weights;
        assert!(w.melee + w.ranged > 0);
        assert!(w.air_dominant(), "{w:?}");
    }

    #[test]
    fn heavy_ground_still_reaches_air_dominance() {
        let a = ScriptedAdvisor::default();
        let mut cur = lib().policy("balanced_macro").unwrap();
        cur.modulators.composition_weights = CompositionWeights::new(90, 80, 1);
        let r = a.adjust("more air", &cur);
        assert!(resolved(&r, &cur).composition_weights.air_dominant());
    }

    #[test]
    fn unrecognized_is_no_change() {
        let a = ScriptedAdvisor::default();
        let cur = lib().policy("turtle_economy").unwrap();
        let r = a.adjust("nice weather today", &cur);
        assert_eq!(r.rationale, "no change");
        assert!(r.deltas.is_empty());
        assert_eq!(resolved(&r, &cur), cur.modulators);
    }

    #[test]
    fn every_effect_validates_from_extremes() {
        let a = ScriptedAdvisor::default();
        let texts = [
            "armored", "ground", "air", "rush", "balanced", "attack", "defend", "expand", "workers", "melee", "ranged",
        ];
        for weights in
            [CompositionWeights::new(100, 100, 100), CompositionWeights::new(0, 0, 1), CompositionWeights::new(1, 0, 0)]
        {
            for (t, wt, mb) in [(0, 1, 1), (200, 30, 4)] {
                let mut cur = lib().policy("balanced_macro").unwrap();
                cur.modulators.composition_weights = weights;
                cur.modulators.attack_supply_threshold = t;
                cur.modulators.worker_target_per_base = wt;
                cur.modulators.max_bases = mb;
                for text in texts {
                    let r = a.adjust(text, &cur);
                    assert!(resolve_proposal(&cur, &r.basis, &r.deltas, &lib()).is_ok(), "{text} {weights:?}");
                }
            }
        }
    }

    #[test]
    fn parse_fenced_and_embedded() {
        let cur = lib().policy("balanced_macro").unwrap();
        let fenced =
            "Sure.\n```json\n{\"basis\":\"air_dominance\",\"deltas\":{},\"rationale\":\"air\"}\n```\nGood luck";
        assert_eq!(parse_llm_reply(fenced, &cur, &lib()).unwrap().basis, "air_dominance");
        let inline = r#"I'd go {"basis":"air_dominance","deltas":{"max_bases":3},"rationale":"..."} now"#;
        assert_eq!(parse_llm_reply(inline, &cur, &lib()).unwrap().deltas.max_bases, Some(3));
    }

    #[test]
    fn parse_errors() {
        let cur = lib().policy("balanced_macro").unwrap();
        let bad_basis = r#"{"basis":"nonexistent","deltas":{},"rationale":"x"}"#;
        assert!(matches!(parse_llm_reply(bad_basis, &cur, &lib()), Err(AdvisorError::InvariantViolation(_))));
        assert!(matches!(parse_llm_reply("just build more stuff", &cur, &lib()), Err(AdvisorError::Malformed(_))));
        let zero = r#"{"basis":"balanced_macro","deltas":{"composition_weights":{"melee":0,"ranged":0,"air":0}},"rationale":"x"}"#;
        assert!(matches!(parse_llm_reply(zero, &cur, &lib()), Err(AdvisorError::InvariantViolation(_))));
        let unknown = r#"{"basis":"balanced_macro","deltas":{"kiting":true},"rationale":"x"}"#;
        assert!(matches!(parse_llm_reply(unknown, &cur, &lib()), Err(AdvisorError::Malformed(_))));
    }

    #[test]
    fn basis_semantics() {
        let mut cur = lib().policy("balanced_macro").unwrap();
        cur.modulators.max_bases = 4;
        let same = resolve_proposal(&cur, "balanced_macro", &ModulatorDelta::default(), &lib()).unwrap();
        assert_eq!(same.max_bases, 4);
        let other = resolve_proposal(&cur, "melee_rush", &ModulatorDelta::default(), &lib()).unwrap();
        assert_eq!(other, lib().get("melee_rush").unwrap().modulators);
    }

    #[test]
    fn config_validation() {
        assert!(AdvisorConfig::default().validate().is_ok());
        let http = AdvisorConfig { backend: Backend::Http, ..Default::default() };
        assert!(http.validate().is_err());
        let ok = AdvisorConfig {
            backend: Backend::Http,
            endpoint: Some("http://127.0.0.1:9/v1/chat/completions".into()),
            model: Some("m".into()),
            ..Default::default()
        };
        assert!(ok.validate().is_ok());
        assert!(AdvisorConfig { temperature: 2.5, ..ok.clone() }.validate().is_err());
        assert!(AdvisorConfig { endpoint: Some("ftp://x".into()), ..ok }.validate().is_err());
    }
}
