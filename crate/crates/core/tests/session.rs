use cmdr_core::advisor::Channel;
use cmdr_core::log::{replay, EpisodeLog, LogRecord};
use cmdr_core::rts::{canonical_json, Command, FactionId, GameConfig, MapPreset, UnitKind};
use cmdr_core::session::{
    run_episode, scripted_advisor, Decision, EpisodeOutcome, Phase, ScriptEntry, Session, SessionConfig, SessionError,
};

fn config(seed: u64) -> SessionConfig {
    SessionConfig { game: GameConfig::generate(MapPreset::Corner, seed), ..SessionConfig::default() }
}

fn session(seed: u64) -> Session {
    let cfg = config(seed);
    let advisor = scripted_advisor(&cfg.advisor).unwrap();
    Session::new("t", cfg, advisor).unwrap()
}

fn tick_revisions(log: &EpisodeLog) -> Vec<(u64, u32)> {
    log.records
        .iter()
        .filter_map(|r| match r {
            LogRecord::Tick { tick, policy_revision, .. } => Some((*tick, *policy_revision)),
            _ => None,
        })
        .collect()
}

#[test]
fn no_instructions_no_revisions() {
    let (result, log) = run_episode(&config(1), &[]).unwrap();
    assert_eq!(result.policy_revision_count, 0);
    assert!(tick_revisions(&log).iter().all(|(_, r)| *r == 0));
    assert!(matches!(log.records.last(), Some(LogRecord::End { .. })));
}

#[test]
fn approved_sky_army_takes_effect_next_step() {
    let script = [ScriptEntry::new(500, "play a sky army style", Some(Decision::Approve))];
    let (result, log) = run_episode(&config(2), &script).unwrap();
    assert_eq!(result.policy_revision_count, 1);
    let decision_tick = log
        .records
        .iter()
        .find_map(|r| match r {
            LogRecord::Decision { tick, policy, .. } => {
                assert!(policy.modulators.composition_weights.air_dominant());
                Some(*tick)
            }
            _ => None,
        })
        .unwrap();
    assert_eq!(decision_tick, 500);
    for (tick, rev) in tick_revisions(&log) {
        assert_eq!(rev, u32::from(tick >= 500), "tick {tick}");
    }
}

#[test]
fn rejected_proposal_leaves_policy_bytes() {
    let mut s = session(3);
    for _ in 0..50 {
        s.advance(None).unwrap();
    }
    let before = canonical_json(s.policy());
    let p = s.handle_instruction("armored push incoming", Channel::Chat).unwrap();
    assert_eq!(p.basis, "ranged_armored");
    s.decide(p.id, Decision::Reject).unwrap();
    assert_eq!(canonical_json(s.policy()), before);
}

#[test]
fn lockstep_runs_are_byte_identical_and_replay() {
    let script = [
        ScriptEntry::new(0, "rush them early", Some(Decision::Approve)),
        ScriptEntry::new(300, "we need more workers", Some(Decision::Reject)),
        ScriptEntry::new(900, "attack now", Some(Decision::Approve)),
    ];
    let (_, a) = run_episode(&config(4), &script).unwrap();
    let (_, b) = run_episode(&config(4), &script).unwrap();
    assert_eq!(a.to_jsonl(), b.to_jsonl());
    let parsed = EpisodeLog::from_jsonl(&a.to_jsonl()).unwrap();
    assert_eq!(parsed, a);
    let report = replay(&parsed).unwrap();
    assert!(report.ok(), "{report}");
    assert_eq!(report.ticks, a.tick_hashes().len());
}

#[test]
fn tampered_log_reports_first_bad_tick() {
    let (_, log) = run_episode(&config(5), &[]).unwrap();
    let mut text = String::new();
    for (i, line) in log.to_jsonl().lines().enumerate() {
        if i == 101 {
            let mut v: serde_json::Value = serde_json::from_str(line).unwrap();
            v["state_hash"] = serde_json::json!("0000000000000000");
            text.push_str(&v.to_string());
        } else {
            text.push_str(line);
        }
        text.push('\n');
    }
    let report = replay(&EpisodeLog::from_jsonl(&text).unwrap()).unwrap();
    assert_eq!(report.first_mismatch, Some(100));
    assert_eq!(report.matched + 1, report.ticks);
}

#[test]
fn newer_instruction_supersedes_pending() {
    let mut s = session(6);
    s.start();
    s.advance(None).unwrap();
    let first = s.handle_instruction("more air", Channel::Chat).unwrap();
    let second = s.handle_instruction("defend", Channel::Transcript).unwrap();
    assert_eq!(s.decide(first.id, Decision::Approve), Err(SessionError::StaleProposal(first.id)));
    assert_eq!(s.decide(99, Decision::Approve), Err(SessionError::UnknownProposal(99)));
    s.decide(second.id, Decision::Approve).unwrap();
    assert_eq!(s.decide(second.id, Decision::Approve), Err(SessionError::StaleProposal(second.id)));
    assert!(s
        .log()
        .records
        .iter()
        .any(|r| matches!(r, LogRecord::Stale { proposal_id, .. } if *proposal_id == first.id)));
}

#[test]
fn pregame_phase_and_initial_selection() {
    let mut s = session(7);
    assert_eq!(s.phase(), Phase::AwaitingInitialInstruction);
    let p = s.handle_instruction("I want an armored army", Channel::Chat).unwrap();
    assert_eq!(p.basis, "ranged_armored");
    assert_eq!(p.in_reply_to, Some(1));
    s.decide(p.id, Decision::Approve).unwrap();
    assert_eq!(s.phase(), Phase::Running);
    assert_eq!(s.policy().policy_id, "ranged_armored");
}

#[test]
fn instructions_after_the_end_are_refused() {
    let mut cfg = config(8);
    cfg.game.tick_limit = 20;
    let mut s = Session::new("t", cfg.clone(), scripted_advisor(&cfg.advisor).unwrap()).unwrap();
    while s.phase() != Phase::Ended {
        s.advance(None).unwrap();
    }
    assert_eq!(s.result().unwrap().outcome, EpisodeOutcome::Draw);
    assert_eq!(s.handle_instruction("attack", Channel::Chat).unwrap_err(), SessionError::SessionEnded);
    assert_eq!(s.advance(None).unwrap_err(), SessionError::SessionEnded);
}

#[test]
fn empty_instruction_rejected() {
    let mut s = session(9);
    assert_eq!(s.handle_instruction("   ", Channel::Chat).unwrap_err(), SessionError::EmptyInstruction);
}

#[test]
fn manual_commands_override_the_tree_and_are_logged() {
    let mut s = session(10);
    let worker = s.state().faction(FactionId::Player).units.iter().find(|u| u.kind == UnitKind::Worker).unwrap().id;
    let enemy = s.state().faction(FactionId::Opponent).units[0].id;
    assert_eq!(s.push_manual(vec![Command::Stop { unit: enemy }]), Err(SessionError::NotOwned(enemy)));
    let to = cmdr_core::rts::Cell::new(5, 5);
    s.push_manual(vec![Command::Move { unit: worker, to }]).unwrap();
    s.advance(None).unwrap();
    let logged = s.log().records.iter().find_map(|r| match r {
        LogRecord::Tick { manual_actions, .. } => Some(manual_actions.clone()),
        _ => None,
    });
    assert_eq!(logged, Some(vec![Command::Move { unit: worker, to }]));
    assert!(replay(s.log()).unwrap().ok());
}

#[test]
fn invalid_configs() {
    let lib = cmdr_core::bt::PolicyLibrary::default();
    let bad = SessionConfig { opponent_difficulty: 9, ..SessionConfig::default() };
    assert!(matches!(bad.validate(&lib), Err(SessionError::InvalidConfig(_))));
    let bad = SessionConfig { tick_rate: 0, ..SessionConfig::default() };
    assert!(bad.validate(&lib).is_err());
    let bad = SessionConfig { initial_policy: "nope".into(), ..SessionConfig::default() };
    assert!(bad.validate(&lib).is_err());
}

#[test]
fn unordered_script_rejected() {
    let script = [ScriptEntry::new(10, "a", None), ScriptEntry::new(5, "b", None)];
    assert_eq!(run_episode(&config(1), &script).unwrap_err(), SessionError::UnorderedScript);
}

fn via_value<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_value(v).unwrap().to_string()
}

#[test]
fn canonical_writer_matches_sorted_value_rendering() {
    let mut s = session(7);
    s.start();
    for _ in 0..300 {
        s.advance(None).unwrap();
    }
    let p = s.handle_instruction("build air and rush their base", Channel::Chat).unwrap();
    s.decide(p.id, Decision::Approve).unwrap();
    let mut checked = 0;
    while s.state().terminal.is_none() {
        if s.state().tick.is_multiple_of(97) {
            assert_eq!(s.state().canonical_json(), via_value(s.state()), "tick {}", s.state().tick);
            checked += 1;
        }
        s.advance(None).unwrap();
    }
    assert_eq!(s.state().canonical_json(), via_value(s.state()));
    for r in &s.log().records {
        assert_eq!(r.to_line(), via_value(r));
    }
    assert!(checked > 5);
    assert!(s.log().records.len() > 100);
}

#[test]
fn canonical_writer_handles_maps_and_enums() {
    use std::collections::HashMap;
    #[derive(serde::Serialize)]
    enum E {
        Unit,
        New(u8),
        Tup(u8, i64),
        Rec { z: f32, a: Option<char> },
    }
    #[derive(serde::Serialize)]
    struct S {
        zeta: HashMap<u32, String>,
        alpha: Vec<E>,
        mid: (bool, f64, &'static str),
        bytes: serde_bytes_like::Bytes,
    }
    mod serde_bytes_like {
        pub struct Bytes(pub Vec<u8>);
        impl serde::Serialize for Bytes {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_bytes(&self.0)
            }
        }
    }
    let v = S {
        zeta: [(10, "ten".into()), (2, "t\"wo\n".into()), (33, "x".into())].into_iter().collect(),
        alpha: vec![
            E::Unit,
            E::New(3),
            E::Tup(1, -9),
            E::Rec { z: 0.1, a: Some('é') },
            E::Rec { z: f32::NAN, a: None },
        ],
        mid: (true, 1e300, "é\u{1}"),
        bytes: serde_bytes_like::Bytes(vec![0, 255]),
    };
    assert_eq!(canonical_json(&v), via_value(&v));
}
