use serde_json::Value;

use cmdr_web::{Connection, Demo, Entry, Verb};

fn schema() -> jsonschema::Validator {
    let text =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../server/schema/wire.schema.json")).unwrap();
    jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).unwrap()
}

fn check_all(v: &jsonschema::Validator, frames: &[Value]) {
    for f in frames {
        assert!(v.is_valid(f), "invalid frame {}", f["type"]);
    }
}

#[test]
fn opening_snapshot_shows_base_and_workers() {
    let mut d = Demo::new(1, 1).unwrap();
    let frames = d.take_frames();
    assert_eq!(frames[0]["type"], "state_update");
    let view = d.view();
    assert_eq!(view.connection, Connection::Live);
    let state = view.state.as_ref().unwrap();
    let me = &state["factions"][0];
    assert_eq!(me["units"].as_array().unwrap().len() + me["buildings"].as_array().unwrap().len(), 7);
    assert_eq!(me["minerals"], 50);
    assert_eq!(view.phase, "awaiting_initial_instruction");
}

#[test]
fn sky_army_flow_over_frames() {
    let validator = schema();
    let mut d = Demo::new(2, 1).unwrap();
    let chat = d.view().chat_frame("I want to play a sky army style", false).unwrap();
    assert!(validator.is_valid(&chat));
    d.send(&chat);
    let view = d.view();
    let card = view.pending.clone().expect("proposal card");
    assert_eq!(card.basis, "air_dominance");
    assert!(matches!(view.transcript[0], Entry::Instruction { .. }));
    assert!(matches!(view.transcript[1], Entry::Proposal { .. }));

    let approve = d.view().decision_frame(true).unwrap();
    assert!(validator.is_valid(&approve));
    d.send(&approve);
    assert_eq!(d.view().policy.as_ref().unwrap().revision, 1);
    assert_eq!(d.view().policy.as_ref().unwrap().policy_id, "air_dominance");

    assert_eq!(d.advance(30), 30);
    assert_eq!(d.view().tick, 30);
    assert_eq!(d.view().phase, "running");
    let ids = d.view().select((0, 0), (31, 31));
    assert!(ids.len() >= 6);
    let order = d.view().unit_command_frame(&ids[..3], (10, 10), Verb::Move).unwrap();
    assert!(validator.is_valid(&order));
    d.send(&order);
    check_all(&validator, &d.take_frames());
}

#[test]
fn stale_and_bad_decisions_come_back_as_errors() {
    let mut d = Demo::new(3, 1).unwrap();
    d.advance(5);
    d.send(&d.view().chat_frame("more air", false).unwrap());
    let first = d.view().pending.clone().unwrap().id;
    d.send(&d.view().chat_frame("go ground army", false).unwrap());
    assert_ne!(d.view().pending.clone().unwrap().id, first);
    let stale = serde_json::json!({ "type": "decision", "payload": { "proposal_id": first, "decision": "approve" } });
    d.send(&stale);
    let codes: Vec<String> = d
        .view()
        .transcript
        .iter()
        .filter_map(|e| if let Entry::Error { code, .. } = e { Some(code.clone()) } else { None })
        .collect();
    assert!(codes.contains(&"proposal_superseded".to_string()), "{codes:?}");
    assert!(codes.contains(&"stale_proposal".to_string()), "{codes:?}");
    check_all(&schema(), &d.take_frames());
}

#[test]
fn plays_to_the_end_and_disables_controls() {
    let validator = schema();
    let mut d = Demo::new(4, 1).unwrap();
    let mut played = 0;
    while d.view().connection != Connection::Ended {
        let n = d.advance(500);
        assert!(n > 0, "stalled at tick {}", d.view().tick);
        played += n;
        check_all(&validator, &d.take_frames());
    }
    assert!(played > 100);
    assert!(d.view().result.is_some());
    assert!(!d.view().controls_enabled());
    assert_eq!(d.advance(10), 0);
    assert!(d.view().chat_frame("attack", false).is_none());
}
