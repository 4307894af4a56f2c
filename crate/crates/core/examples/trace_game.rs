//! Prints a side-by-side economy trace of one bot-vs-bot game.
//!
//! cargo run -p cmdr-core --example trace_game -- [policy] [difficulty, 0 = mirror] [seed] [every]

use cmdr_core::bt::{BehaviorTree, PolicyLibrary};
use cmdr_core::opponent::{opponent_actions, OpponentProfile, OpponentProfiles};
use cmdr_core::rts::*;

fn summary(f: &FactionState) -> String {
    let u = |k| f.count_units(k);
    let b = |k| f.count_buildings(k);
    format!(
        "m{:5} g{:4} sup{:3}/{:3} W{:2} M{:2} R{:2} A{:2} | B{} D{} Bk{} F{} Ap{} T{}",
        f.minerals,
        f.gas,
        f.supply_used,
        f.supply_cap,
        u(UnitKind::Worker),
        u(UnitKind::Melee),
        u(UnitKind::Ranged),
        u(UnitKind::Air),
        b(BuildingKind::Base),
        b(BuildingKind::SupplyDepot),
        b(BuildingKind::Barracks),
        b(BuildingKind::Factory),
        b(BuildingKind::Airport),
        b(BuildingKind::Turret)
    )
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let policy = args.get(1).cloned().unwrap_or("balanced_macro".into());
    let diff: u8 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let seed: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0);
    let every: u64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(250);
    let tree = BehaviorTree::default();
    let lib = PolicyLibrary::default();
    let p = lib.policy(&policy).unwrap();
    let opp = if diff == 0 {
        OpponentProfile::mirror_of(&p.modulators)
    } else {
        OpponentProfiles::default().get(diff).unwrap().clone()
    };
    let mut cfg = GameConfig::generate(MapPreset::Corner, seed);
    cfg.income_permille[1] = opp.income_permille;
    let mut s = reset(&cfg).unwrap();
    let mut drops = 0;
    while !s.is_terminal() {
        if s.tick.is_multiple_of(every) {
            println!("t{:5} P {}\n       O {}", s.tick, summary(&s.factions[0]), summary(&s.factions[1]));
        }
        let pa = tree.tick(&p, &lib, &s, FactionId::Player).unwrap();
        let oa = opponent_actions(&tree, &s, &opp, seed).unwrap();
        let (n, r) = step(&s, &pa, &oa).unwrap();
        drops += r.dropped.len();
        if !r.dropped.is_empty() && drops < 10 {
            println!("drop t{} {:?}", s.tick, r.dropped);
        }
        for e in &r.events {
            if matches!(e, GameEvent::BuildingDestroyed { .. }) {
                println!("t{} {:?}", s.tick, e);
            }
        }
        s = n;
    }
    println!("end t{} {:?} drops {drops}", s.tick, s.terminal);
    println!("P {}\nO {}", summary(&s.factions[0]), summary(&s.factions[1]));
}
