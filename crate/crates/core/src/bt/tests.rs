use super::*;
use crate::rts::*;

fn policy(id: &str, weights: CompositionWeights, threshold: u32) -> Policy {
    Policy {
        policy_id: id.into(),
        modulators: ModulatorSet {
            composition_weights: weights,
            attack_supply_threshold: threshold,
            worker_target_per_base: 16,
            max_bases: 2,
            build_turrets: false,
        },
        revision: 0,
    }
}

fn rich_state() -> GameState {
    let cfg = GameConfig { starting_minerals: 100_000, starting_gas: 100_000, ..GameConfig::default() };
    reset(&cfg).unwrap()
}

fn add_building(state: &mut GameState, faction: FactionId, kind: BuildingKind, at: Cell) -> EntityId {
    let id = state.next_id;
    state.next_id += 1;
    state.faction_mut(faction).buildings.push(Building::new(id, kind, at, 0));
    let fs = state.faction_mut(faction);
    fs.supply_cap = fs.computed_supply_cap();
    id
}

fn add_unit(state: &mut GameState, faction: FactionId, kind: UnitKind, at: Cell) {
    let id = state.next_id;
    state.next_id += 1;
    let fs = state.faction_mut(faction);
    fs.units.push(Unit::new(id, kind, at));
    fs.supply_used = fs.computed_supply_used();
}

fn army_orders(actions: &ActionSet) -> Vec<UnitKind> {
    actions
        .commands
        .iter()
        .filter_map(|c| match c {
            Command::BuildUnit { kind, .. } if kind.is_army() => Some(*kind),
            _ => None,
        })
        .collect()
}

#[test]
fn air_only_weights_train_air_at_idle_airport() {
    let mut s = rich_state();
    let airport = add_building(&mut s, FactionId::Player, BuildingKind::Airport, Cell::new(7, 7));
    let p = policy("air_dominance", CompositionWeights::new(0, 0, 1), 24);
    let actions = tick(&p, &s, FactionId::Player).unwrap();
    assert!(actions.commands.contains(&Command::BuildUnit { building: airport, kind: UnitKind::Air }));
}

#[test]
fn no_attack_below_threshold() {
    let s = rich_state();
    let p = policy("balanced_macro", CompositionWeights::new(2, 2, 1), 20);
    let actions = tick(&p, &s, FactionId::Player).unwrap();
    assert!(!actions.commands.iter().any(|c| matches!(c, Command::Attack { .. })));
}

#[test]
fn largest_deficit_picks_ranged_after_four_melee() {
    // target 1:1; with 4 melee and 0 ranged the deficits are
    // melee 1*(4+1) - 4*2 = -3, ranged 1*(4+1) - 0*2 = 5.
    let mut s = rich_state();
    add_building(&mut s, FactionId::Player, BuildingKind::Barracks, Cell::new(7, 7));
    add_building(&mut s, FactionId::Player, BuildingKind::Factory, Cell::new(8, 8));
    add_building(&mut s, FactionId::Player, BuildingKind::SupplyDepot, Cell::new(9, 9));
    for _ in 0..4 {
        add_unit(&mut s, FactionId::Player, UnitKind::Melee, Cell::new(6, 6));
    }
    let p = policy("ranged_armored", CompositionWeights::new(1, 1, 0), 40);
    let actions = tick(&p, &s, FactionId::Player).unwrap();
    assert_eq!(army_orders(&actions).first(), Some(&UnitKind::Ranged));
}

#[test]
fn deficit_ties_break_by_kind_name() {
    let mut s = rich_state();
    add_building(&mut s, FactionId::Player, BuildingKind::Barracks, Cell::new(7, 7));
    add_building(&mut s, FactionId::Player, BuildingKind::Airport, Cell::new(8, 8));
    add_building(&mut s, FactionId::Player, BuildingKind::SupplyDepot, Cell::new(9, 9));
    let p = policy("balanced_macro", CompositionWeights::new(1, 0, 1), 40);
    let actions = tick(&p, &s, FactionId::Player).unwrap();
    assert_eq!(army_orders(&actions).first(), Some(&UnitKind::Air));
}

#[test]
fn tick_is_pure_and_repeatable() {
    let s = rich_state();
    let before = s.clone();
    let p = PolicyLibrary::default().policy("balanced_macro").unwrap();
    let a = tick(&p, &s, FactionId::Player).unwrap();
    let b = tick(&p, &s, FactionId::Player).unwrap();
    assert_eq!(a, b);
    assert_eq!(s, before);
}

#[test]
fn emitted_commands_stay_in_own_faction() {
    let p = PolicyLibrary::default().policy("balanced_macro").unwrap();
    let mut s = reset(&GameConfig::default()).unwrap();
    for _ in 0..600 {
        for f in FactionId::BOTH {
            let a = tick(&p, &s, f).unwrap();
            assert_eq!(a.faction, f);
            for c in &a.commands {
                assert_eq!(s.owner_of(c.actor()), Some(f), "{c:?}");
            }
        }
        let pa = tick(&p, &s, FactionId::Player).unwrap();
        let oa = tick(&p, &s, FactionId::Opponent).unwrap();
        s = step(&s, &pa, &oa).unwrap().0;
    }
}

#[test]
fn unknown_policy_rejected() {
    let s = rich_state();
    let p = policy("nonexistent", CompositionWeights::new(1, 1, 1), 10);
    assert!(matches!(tick(&p, &s, FactionId::Player), Err(BtError::InvalidPolicy(_))));
}

#[test]
fn build_units_never_hit_supply_cap() {
    let lib = PolicyLibrary::default();
    for (seed, id) in [(1, "balanced_macro"), (2, "melee_rush"), (3, "air_dominance"), (4, "turtle_economy")] {
        let p = lib.policy(id).unwrap();
        let mut s = reset(&GameConfig::generate(MapPreset::Corner, seed)).unwrap();
        for _ in 0..3000 {
            if s.is_terminal() {
                break;
            }
            let pa = tick(&p, &s, FactionId::Player).unwrap();
            let oa = tick(&p, &s, FactionId::Opponent).unwrap();
            let (next, r) = step(&s, &pa, &oa).unwrap();
            assert!(
                !r.dropped.iter().any(|d| d.reason == DropReason::SupplyBlocked),
                "{id} seed {seed} tick {}: {:?}",
                s.tick,
                r.dropped
            );
            for e in &r.events {
                if let GameEvent::UnitProduced { faction, .. } = e {
                    let f = next.faction(*faction);
                    assert!(f.supply_used <= f.supply_cap, "{id} seed {seed}: production overran supply");
                }
            }
            s = next;
        }
    }
}

/// Brute force: 2000 combat-free ticks with unlimited money, then compare the
/// army (including queued units) with the weight ratio.
#[test]
fn composition_converges_to_weights() {
    for weights in [
        CompositionWeights::new(1, 1, 1),
        CompositionWeights::new(2, 2, 1),
        CompositionWeights::new(0, 0, 1),
        CompositionWeights::new(1, 3, 0),
        CompositionWeights::new(3, 0, 2),
    ] {
        let p = policy("balanced_macro", weights, MAX_ATTACK_THRESHOLD);
        let mut s = rich_state();
        let idle = ActionSet::empty(FactionId::Opponent);
        for _ in 0..2000 {
            let pa = tick(&p, &s, FactionId::Player).unwrap();
            s = step(&s, &pa, &idle).unwrap().0;
        }
        let me = s.faction(FactionId::Player);
        let count = |k: UnitKind| {
            me.count_units(k) + me.buildings.iter().flat_map(|b| &b.production_queue).filter(|q| q.kind == k).count()
        };
        let n: usize = UnitKind::ARMY.iter().map(|k| count(*k)).sum();
        assert!(n >= 20, "{weights:?}: army too small ({n}) to judge convergence");
        for k in UnitKind::ARMY {
            let target = n as f64 * weights.get(k) as f64 / weights.total() as f64;
            let got = count(k) as f64;
            assert!((got - target).abs() <= 1.0, "{weights:?} {k:?}: got {got}, target {target:.2} of {n}");
        }
    }
}

#[test]
fn lower_threshold_never_attacks_later() {
    fn first_attack(threshold: u32) -> Option<u64> {
        let p = policy("balanced_macro", CompositionWeights::new(2, 2, 1), threshold);
        let mut s = reset(&GameConfig::default()).unwrap();
        let idle = ActionSet::empty(FactionId::Opponent);
        for _ in 0..4000 {
            let pa = tick(&p, &s, FactionId::Player).unwrap();
            if pa.commands.iter().any(|c| matches!(c, Command::Attack { .. })) {
                return Some(s.tick);
            }
            s = step(&s, &pa, &idle).unwrap().0;
        }
        None
    }
    let ticks: Vec<Option<u64>> = [40, 30, 20, 12, 6, 1].into_iter().map(first_attack).collect();
    for pair in ticks.windows(2) {
        let (hi, lo) = (pair[0].unwrap_or(u64::MAX), pair[1].unwrap_or(u64::MAX));
        assert!(lo <= hi, "{ticks:?}");
    }
    assert!(ticks.last().unwrap().is_some());
}

#[test]
fn emergency_recalls_army_and_builds_turret() {
    let mut s = rich_state();
    add_unit(&mut s, FactionId::Player, UnitKind::Melee, Cell::new(10, 10));
    add_unit(&mut s, FactionId::Opponent, UnitKind::Melee, Cell::new(8, 8));
    let mut p = policy("turtle_economy", CompositionWeights::new(1, 2, 1), 40);
    p.modulators.build_turrets = true;
    let a = tick(&p, &s, FactionId::Player).unwrap();
    assert!(a.commands.iter().any(|c| matches!(c, Command::Attack { to, .. } if *to == Cell::new(8, 8))));
    assert!(a.commands.iter().any(|c| matches!(c, Command::BuildStructure { kind: BuildingKind::Turret, .. })));
}
