use proptest::prelude::*;

use cmdr_core::advisor::parse_llm_reply;
use cmdr_core::bt::PolicyLibrary;
use cmdr_core::eval::canonical_request;
use cmdr_core::rts::{
    reset, step, ActionSet, BuildingKind, Cell, Command, FactionId, GameConfig, GameState, MapPreset, UnitKind,
};
use cmdr_core::summarizer::{summarize_frame, summarize_window, FRAME_BUDGET, REQUEST_BUDGET, WINDOW_BUDGET};

fn cell() -> impl Strategy<Value = Cell> {
    (-2..34i32, -2..34i32).prop_map(|(x, y)| Cell::new(x, y))
}

/// Mostly nonsense: ids and cells are random, so most commands get dropped.
fn command() -> impl Strategy<Value = Command> {
    let id = 0..60u32;
    prop_oneof![
        (id.clone(), prop::sample::select(UnitKind::ALL.to_vec()))
            .prop_map(|(building, kind)| Command::BuildUnit { building, kind }),
        (id.clone(), prop::sample::select(BuildingKind::ALL.to_vec()), cell())
            .prop_map(|(worker, kind, at)| Command::BuildStructure { worker, kind, at }),
        (id.clone(), 0..20u32).prop_map(|(worker, node)| Command::AssignWorker { worker, node }),
        (id.clone(), cell()).prop_map(|(unit, to)| Command::Move { unit, to }),
        (id.clone(), cell()).prop_map(|(unit, to)| Command::Attack { unit, to }),
        id.prop_map(|unit| Command::Stop { unit }),
    ]
}

fn script() -> impl Strategy<Value = Vec<(Vec<Command>, Vec<Command>)>> {
    prop::collection::vec((prop::collection::vec(command(), 0..4), prop::collection::vec(command(), 0..4)), 1..120)
}

fn play(seed: u64, script: &[(Vec<Command>, Vec<Command>)]) -> Vec<(u64, GameState)> {
    let mut s = reset(&GameConfig::generate(MapPreset::Compact, seed)).unwrap();
    let mut out = Vec::new();
    for (mine, theirs) in script {
        if s.is_terminal() {
            break;
        }
        let a = ActionSet { faction: FactionId::Player, commands: mine.clone() };
        let b = ActionSet { faction: FactionId::Opponent, commands: theirs.clone() };
        s = step(&s, &a, &b).unwrap().0;
        out.push((s.state_hash(), s.clone()));
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn random_orders_replay_identically(seed in 0..1000u64, script in script()) {
        let a = play(seed, &script);
        let b = play(seed, &script);
        prop_assert_eq!(a.len(), b.len());
        for ((ha, _), (hb, _)) in a.iter().zip(&b) {
            prop_assert_eq!(ha, hb);
        }
    }

    #[test]
    fn canonical_json_matches_sorted_value(seed in 0..1000u64, script in script()) {
        for (_, state) in play(seed, &script).iter().step_by(17) {
            prop_assert_eq!(state.canonical_json(), serde_json::to_value(state).unwrap().to_string());
        }
    }

    #[test]
    fn summaries_stay_within_budget(seed in 0..1000u64, script in script(), stride in 1..15u64) {
        let states = play(seed, &script);
        let frames: Vec<_> = states.iter().map(|(_, s)| summarize_frame(s, FactionId::Player)).collect();
        for f in &frames {
            prop_assert!(f.text.chars().count() <= FRAME_BUDGET);
        }
        let w = summarize_window(&frames, stride).unwrap();
        prop_assert!(w.text.chars().count() <= WINDOW_BUDGET);
        prop_assert!(w.frames <= frames.len());
        prop_assert_eq!(w.tick_range, (frames[0].tick, frames[frames.len() - 1].tick));
    }

    #[test]
    fn window_rejects_unordered_ticks(seed in 0..1000u64, script in script()) {
        let states = play(seed, &script);
        prop_assume!(states.len() >= 2);
        let mut frames: Vec<_> = states.iter().map(|(_, s)| summarize_frame(s, FactionId::Player)).collect();
        frames.reverse();
        prop_assert!(summarize_window(&frames, 1).is_err());
    }

    #[test]
    fn request_keeps_instruction_and_budget(text in "[a-zA-Z0-9 ,.!?'-]{1,400}") {
        prop_assume!(!text.trim().is_empty());
        let lib = PolicyLibrary::default();
        let req = canonical_request(&text, &lib.policy("balanced_macro").unwrap()).unwrap();
        let prompt = req.render().unwrap();
        prop_assert!(prompt.chars().count() <= REQUEST_BUDGET);
        prop_assert!(prompt.contains(&text));
    }

    #[test]
    fn reply_parser_never_panics(raw in ".{0,600}") {
        let lib = PolicyLibrary::default();
        let _ = parse_llm_reply(&raw, &lib.policy("balanced_macro").unwrap(), &lib);
    }

    #[test]
    fn fenced_reply_survives_surrounding_prose(before in "[a-z .\n]{0,200}", after in "[a-z .\n]{0,200}") {
        let lib = PolicyLibrary::default();
        let raw = format!("{before}\n```json\n{{\"basis\": \"air_dominance\", \"deltas\": {{}}, \"rationale\": \"air\"}}\n```\n{after}");
        let reply = parse_llm_reply(&raw, &lib.policy("balanced_macro").unwrap(), &lib).unwrap();
        prop_assert_eq!(reply.basis, "air_dominance");
    }
}
