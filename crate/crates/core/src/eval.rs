//! Batch evaluation: win rates against the opponent ladder and an
//! instruction-following score for advisors. Both are automated proxies.

use std::sync::OnceLock;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::advisor::{
    call_advisor, proposed_policy, Advisor, AdvisorError, Channel, Instruction, ScriptedAdvisor, Stage,
};
use crate::bt::{BehaviorTree, ModulatorSet, Policy, PolicyLibrary};
use crate::opponent::{opponent_actions, profile_actions, OpponentProfile, OpponentProfiles};
use crate::rts::{reset, step, FactionId, GameConfig, MapPreset, Outcome, UnitKind};
use crate::session::{run_episode_with, EpisodeOutcome, LogMode, ScriptEntry, SessionConfig, SessionError};
use crate::summarizer::{
    integrate_context, summarize_frame, summarize_window, ActionDigest, AdvisorRequest, FrameSummary,
};

pub const PROXY_HEADER: &str = "automated proxy; not human ratings";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("at least one seed is required")]
    NoSeeds,
    #[error("at least one case is required")]
    NoCases,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("unknown policy `{0}`")]
    UnknownPolicy(String),
    #[error(transparent)]
    Session(#[from] SessionError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpponentChoice {
    Difficulty(u8),
    /// The case's own policy at full income and reaction speed.
    Mirror,
}

impl OpponentChoice {
    pub fn label(&self) -> String {
        match self {
            OpponentChoice::Difficulty(d) => d.to_string(),
            OpponentChoice::Mirror => "mirror".into(),
        }
    }
}

/// One row of a batch: a policy (auto-approved script optional) against one opponent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchCase {
    pub policy: String,
    pub opponent: OpponentChoice,
    pub map: MapPreset,
    #[serde(default)]
    pub script: Vec<ScriptEntry>,
}

impl BatchCase {
    pub fn new(policy: &str, opponent: OpponentChoice) -> Self {
        BatchCase { policy: policy.into(), opponent, map: MapPreset::default(), script: Vec::new() }
    }

    /// Session config for one seed. Auto-approve is always on.
    pub fn session_config(&self, seed: u64, library: &PolicyLibrary) -> Result<SessionConfig, EvalError> {
        let preset = library.get(&self.policy).ok_or_else(|| EvalError::UnknownPolicy(self.policy.clone()))?;
        let (difficulty, profile) = match self.opponent {
            OpponentChoice::Difficulty(d) => (d, None),
            OpponentChoice::Mirror => (1, Some(OpponentProfile::mirror_of(&preset.modulators))),
        };
        Ok(SessionConfig {
            game: GameConfig::generate(self.map, seed),
            opponent_difficulty: difficulty,
            opponent_profile: profile,
            auto_approve: true,
            initial_policy: self.policy.clone(),
            ..SessionConfig::default()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub difficulty: String,
    pub policy: String,
    pub map: MapPreset,
    pub seeds: usize,
    pub wins: usize,
    pub losses: usize,
    pub draws: usize,
}

impl EvalRow {
    pub fn rate(&self) -> f64 {
        if self.seeds == 0 {
            0.0
        } else {
            self.wins as f64 / self.seeds as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction_following: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_advisor_latency_ms: Option<f64>,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("difficulty,policy,seeds,wins,losses,draws,rate\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{:.4}\n",
                r.difficulty,
                r.policy,
                r.seeds,
                r.wins,
                r.losses,
                r.draws,
                r.rate()
            ));
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("# {PROXY_HEADER}\n");
        out.push_str(&format!(
            "{:<10} {:<16} {:<8} {:>5} {:>5} {:>6} {:>6} {:>6}\n",
            "difficulty", "policy", "map", "seeds", "wins", "losses", "draws", "rate"
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "{:<10} {:<16} {:<8} {:>5} {:>5} {:>6} {:>6} {:>6.3}\n",
                r.difficulty,
                r.policy,
                r.map.name(),
                r.seeds,
                r.wins,
                r.losses,
                r.draws,
                r.rate()
            ));
        }
        if let Some(score) = self.instruction_following {
            out.push_str(&format!("instruction following: {score:.3}\n"));
        }
        if let Some(ms) = self.mean_advisor_latency_ms {
            out.push_str(&format!("mean advisor latency: {ms:.1} ms\n"));
        }
        out
    }
}

/// Plays every case once per seed, in parallel, headless and lockstep with
/// the scripted advisor. Results do not depend on thread scheduling.
pub fn run_batch(cases: &[BatchCase], seeds: &[u64]) -> Result<EvalReport, EvalError> {
    if seeds.is_empty() {
        return Err(EvalError::NoSeeds);
    }
    if cases.is_empty() {
        return Err(EvalError::NoCases);
    }
    let library = PolicyLibrary::default();
    let mut jobs = Vec::new();
    for (ci, case) in cases.iter().enumerate() {
        for seed in seeds {
            jobs.push((ci, case.session_config(*seed, &library)?, case.script.clone()));
        }
    }
    let advisor: std::sync::Arc<dyn Advisor> = std::sync::Arc::new(ScriptedAdvisor::default());
    let outcomes: Vec<(usize, EpisodeOutcome)> = jobs
        .par_iter()
        .map(|(ci, cfg, script)| {
            run_episode_with(cfg, advisor.clone(), script, LogMode::Off).map(|(r, _)| (*ci, r.outcome))
        })
        .collect::<Result<_, _>>()?;
    let rows = cases
        .iter()
        .enumerate()
        .map(|(ci, case)| {
            let mine = outcomes.iter().filter(|(c, _)| *c == ci);
            let count = |o: EpisodeOutcome| mine.clone().filter(|(_, x)| *x == o).count();
            EvalRow {
                difficulty: case.opponent.label(),
                policy: case.policy.clone(),
                map: case.map,
                seeds: seeds.len(),
                wins: count(EpisodeOutcome::Win),
                losses: count(EpisodeOutcome::Loss),
                draws: count(EpisodeOutcome::Draw),
            }
        })
        .collect();
    Ok(EvalReport { rows, seeds: seeds.to_vec(), instruction_following: None, mean_advisor_latency_ms: None })
}

/// `policy` against difficulties 1 to 6 on `map`.
pub fn ladder_cases(policy: &str, map: MapPreset) -> Vec<BatchCase> {
    (1..=6).map(|d| BatchCase { map, ..BatchCase::new(policy, OpponentChoice::Difficulty(d)) }).collect()
}

/// Profile `a` (player side) against profile `b` on one seeded map.
pub fn self_play(a: &OpponentProfile, b: &OpponentProfile, map: MapPreset, seed: u64) -> Outcome {
    let tree = BehaviorTree::default();
    let mut cfg = GameConfig::generate(map, seed);
    cfg.income_permille = [a.income_permille, b.income_permille];
    let mut s = reset(&cfg).expect("generated configs are valid");
    let player_seed = seed ^ 0x5eed_5eed;
    while !s.is_terminal() {
        let pa = profile_actions(&tree, &s, a, player_seed, FactionId::Player).expect("state is live");
        let oa = opponent_actions(&tree, &s, b, seed).expect("state is live");
        s = step(&s, &pa, &oa).expect("state is live").0;
    }
    s.terminal.unwrap_or(Outcome::Draw)
}

/// Win rate of ladder difficulty `a` (as player) against `b` over `seeds`.
pub fn self_play_rate(a: u8, b: u8, map: MapPreset, seeds: &[u64]) -> f64 {
    let profiles = OpponentProfiles::default();
    let (pa, pb) = (profiles.get(a).expect("difficulty in ladder"), profiles.get(b).expect("difficulty in ladder"));
    let wins =
        seeds.par_iter().filter(|seed| self_play(pa, pb, map, **seed) == Outcome::Winner(FactionId::Player)).count();
    wins as f64 / seeds.len().max(1) as f64
}

// ---- instruction following ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureTag {
    Composition,
    Aggression,
    Economy,
    Null,
}

/// What a correct proposal must do, judged on the policy before and the
/// modulators after applying it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum Expectation {
    AirDominant,
    /// Some melee or ranged weight, and air still dominant.
    GroundFloorAirDominant,
    Basis {
        policy: String,
    },
    Dominant {
        unit: UnitKind,
    },
    ThresholdLowered,
    ThresholdRaised,
    TurretsOn,
    MoreBases,
    MoreWorkers,
    /// Same preset, same modulators.
    NoChange,
}

impl Expectation {
    pub fn holds(&self, before: &Policy, basis: &str, after: &ModulatorSet) -> bool {
        let w = after.composition_weights;
        let b = &before.modulators;
        match self {
            Expectation::AirDominant => w.air_dominant(),
            Expectation::GroundFloorAirDominant => w.melee + w.ranged > 0 && w.air_dominant(),
            Expectation::Basis { policy } => basis == policy,
            Expectation::Dominant { unit } => {
                let mine = w.get(*unit);
                mine > 0 && mine >= 2 * (w.total() - mine)
            }
            Expectation::ThresholdLowered => after.attack_supply_threshold < b.attack_supply_threshold,
            Expectation::ThresholdRaised => after.attack_supply_threshold > b.attack_supply_threshold,
            Expectation::TurretsOn => after.build_turrets,
            Expectation::MoreBases => after.max_bases > b.max_bases,
            Expectation::MoreWorkers => after.worker_target_per_base > b.worker_target_per_base,
            Expectation::NoChange => basis == before.policy_id && after == b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstructionFixture {
    pub text: String,
    pub tag: FixtureTag,
    pub expected: Expectation,
    /// Policy active when the instruction arrives; defaults to balanced_macro.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_policy: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub fixtures: Vec<InstructionFixture>,
}

const SHIPPED_CORPUS: &str = include_str!("../fixtures/instruction_corpus.json");

impl Default for Corpus {
    fn default() -> Self {
        serde_json::from_str(SHIPPED_CORPUS).expect("shipped corpus parses")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureResult {
    pub text: String,
    pub tag: FixtureTag,
    pub matched: bool,
    /// Set when the advisor failed outright.
    pub error: Option<String>,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowingScore {
    pub rate: f64,
    pub results: Vec<FixtureResult>,
    pub mean_latency_ms: f64,
}

const CANONICAL_TICK: u64 = 1200;
const CANONICAL_DIFFICULTY: u8 = 3;

/// Frames and action digest from a fixed mid-game rollout: Corner map, seed
/// 0, balanced_macro against difficulty 3, sampled every 10 ticks up to tick 1200.
fn canonical_context() -> &'static (Vec<FrameSummary>, ActionDigest) {
    static CONTEXT: OnceLock<(Vec<FrameSummary>, ActionDigest)> = OnceLock::new();
    CONTEXT.get_or_init(|| {
        let library = PolicyLibrary::default();
        let tree = BehaviorTree::default();
        let policy = library.policy("balanced_macro").expect("shipped preset");
        let profile = OpponentProfiles::default().get(CANONICAL_DIFFICULTY).expect("ladder entry").clone();
        let mut cfg = GameConfig::default();
        cfg.income_permille[1] = profile.income_permille;
        let mut s = reset(&cfg).expect("default config is valid");
        let mut frames = std::collections::VecDeque::new();
        let mut digest = ActionDigest::default();
        while s.tick < CANONICAL_TICK && !s.is_terminal() {
            let pa = tree.tick(&policy, &library, &s, FactionId::Player).expect("valid policy");
            let oa = opponent_actions(&tree, &s, &profile, cfg.rng_seed).expect("live state");
            if s.tick + 200 >= CANONICAL_TICK {
                digest.record(&pa);
            }
            s = step(&s, &pa, &oa).expect("live state").0;
            if s.tick.is_multiple_of(10) {
                frames.push_back(summarize_frame(&s, FactionId::Player));
                if frames.len() > 20 {
                    frames.pop_front();
                }
            }
        }
        (frames.into_iter().collect(), digest)
    })
}

/// The fixed mid-game request used to score advisors.
pub fn canonical_request(text: &str, policy: &Policy) -> Result<AdvisorRequest, EvalError> {
    let (frames, digest) = canonical_context();
    let window = summarize_window(frames, 10).map_err(|e| EvalError::Session(SessionError::Internal(e.to_string())))?;
    let instruction =
        Instruction { id: 1, tick_received: CANONICAL_TICK, text: text.to_string(), channel: Channel::Chat };
    integrate_context(window, policy, digest, &instruction, &PolicyLibrary::default())
        .map_err(|e| EvalError::Session(SessionError::BadInstruction(e.to_string())))
}

/// Fraction of fixtures whose proposal satisfies the fixture's expectation.
pub fn score_instruction_following(
    corpus: &[InstructionFixture],
    advisor: &dyn Advisor,
) -> Result<FollowingScore, EvalError> {
    if corpus.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let library = PolicyLibrary::default();
    let mut results = Vec::with_capacity(corpus.len());
    for f in corpus {
        let context = f.context_policy.as_deref().unwrap_or("balanced_macro");
        let before = library.policy(context).map_err(|_| EvalError::UnknownPolicy(context.to_string()))?;
        let request = canonical_request(&f.text, &before)?;
        let started = Instant::now();
        let outcome: Result<bool, AdvisorError> =
            call_advisor(advisor, Stage::Adjust, &request, &library, 1).and_then(|p| {
                proposed_policy(&before, &p, &library)
                    .map(|after| f.expected.holds(&before, &p.basis, &after.modulators))
            });
        let latency_ms = started.elapsed().as_secs_f64() * 1000.0;
        results.push(FixtureResult {
            text: f.text.clone(),
            tag: f.tag,
            matched: *outcome.as_ref().unwrap_or(&false),
            error: outcome.err().map(|e| e.to_string()),
            latency_ms,
        });
    }
    let rate = results.iter().filter(|r| r.matched).count() as f64 / results.len() as f64;
    let mean_latency_ms = results.iter().map(|r| r.latency_ms).sum::<f64>() / results.len() as f64;
    Ok(FollowingScore { rate, results, mean_latency_ms })
}
