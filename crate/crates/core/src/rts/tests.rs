use super::*;

fn empty(f: FactionId) -> ActionSet {
    ActionSet::empty(f)
}

fn idle_step(state: &GameState) -> GameState {
    step(state, &empty(FactionId::Player), &empty(FactionId::Opponent)).unwrap().0
}

/// Default map with every unit removed; both Bases stay in their corners.
fn sandbox() -> GameState {
    let mut s = reset(&GameConfig::default()).unwrap();
    for f in s.factions.iter_mut() {
        f.units.clear();
        f.supply_used = 0;
    }
    s
}

fn spawn(state: &mut GameState, faction: FactionId, kind: UnitKind, at: Cell) -> EntityId {
    let id = state.next_id;
    state.next_id += 1;
    state.faction_mut(faction).units.push(Unit::new(id, kind, at));
    id
}

#[test]
fn reset_default_layout() {
    let s = reset(&GameConfig::default()).unwrap();
    assert_eq!(s.tick, 0);
    assert!(s.terminal.is_none());
    let bases: usize = s.factions.iter().map(|f| f.count_buildings(BuildingKind::Base)).sum();
    let workers: usize = s.factions.iter().map(|f| f.count_units(UnitKind::Worker)).sum();
    assert_eq!(bases, 2);
    assert_eq!(workers, 12);
    for f in &s.factions {
        assert_eq!(f.supply_used, 6);
        assert_eq!(f.supply_cap, 10);
    }
}

#[test]
fn reset_is_byte_identical_for_same_seed() {
    let cfg = GameConfig::generate(MapPreset::Flank, 42);
    let a = reset(&cfg).unwrap().canonical_json();
    let b = reset(&cfg).unwrap().canonical_json();
    assert_eq!(a, b);
}

#[test]
fn reset_rejects_zero_amount_node() {
    let mut cfg = GameConfig::default();
    cfg.resource_layout[0].amount = 0;
    assert!(matches!(reset(&cfg), Err(RtsError::InvalidConfig(_))));
}

#[test]
fn empty_actions_advance_one_tick_without_income() {
    let s0 = reset(&GameConfig::default()).unwrap();
    let s1 = idle_step(&s0);
    assert_eq!(s1.tick, 1);
    for f in FactionId::BOTH {
        assert_eq!(s1.faction(f).minerals, s0.faction(f).minerals);
        assert_eq!(s1.faction(f).gas, s0.faction(f).gas);
    }
}

#[test]
fn five_workers_on_one_node_for_eighty_ticks() {
    // 5 workers x 80 ticks / 8 ticks per mineral = 50.
    let s0 = reset(&GameConfig::default()).unwrap();
    let node = s0
        .resource_nodes
        .iter()
        .find(|n| n.kind == ResourceKind::Minerals && s0.node_served_by(FactionId::Player, n))
        .unwrap()
        .id;
    let workers: Vec<EntityId> = s0.faction(FactionId::Player).units.iter().take(5).map(|u| u.id).collect();
    let assign = ActionSet {
        faction: FactionId::Player,
        commands: workers.iter().map(|&w| Command::AssignWorker { worker: w, node }).collect(),
    };
    let (mut s, _) = step(&s0, &assign, &empty(FactionId::Opponent)).unwrap();
    for _ in 1..80 {
        s = idle_step(&s);
    }
    assert_eq!(s.tick, 80);
    let start = s0.faction(FactionId::Player).minerals;
    assert_eq!(s.faction(FactionId::Player).minerals, start + 50);
    assert_eq!(s.faction(FactionId::Player).mined_minerals, 50);
}

#[test]
fn melee_kills_worker_on_eighth_tick() {
    // 40 hp / 5 damage per tick = 8 ticks.
    let mut s = sandbox();
    let worker = spawn(&mut s, FactionId::Player, UnitKind::Worker, Cell::new(15, 15));
    spawn(&mut s, FactionId::Opponent, UnitKind::Melee, Cell::new(16, 15));
    for t in 1..=8 {
        s = idle_step(&s);
        let alive = s.faction(FactionId::Player).unit(worker).is_some();
        assert_eq!(alive, t < 8, "tick {t}");
    }
}

#[test]
fn damage_bonus_table_matches_pairwise_duels() {
    fn expected(attacker: UnitKind, target: UnitKind) -> i32 {
        let hits_air = matches!(attacker, UnitKind::Ranged | UnitKind::Air);
        let base = match attacker {
            UnitKind::Worker => 0,
            UnitKind::Melee => 5,
            UnitKind::Ranged | UnitKind::Air => 4,
        };
        if target == UnitKind::Air && !hits_air {
            return 0;
        }
        let mut d = base;
        if attacker == UnitKind::Ranged && target == UnitKind::Air {
            d += 4;
        }
        if attacker == UnitKind::Air && target == UnitKind::Melee {
            d += 3;
        }
        d
    }
    for attacker in UnitKind::ALL {
        for target in UnitKind::ALL {
            let mut s = sandbox();
            let victim = spawn(&mut s, FactionId::Player, target, Cell::new(15, 15));
            spawn(&mut s, FactionId::Opponent, attacker, Cell::new(16, 15));
            let before = s.faction(FactionId::Player).unit(victim).unwrap().hp;
            let after = idle_step(&s).faction(FactionId::Player).unit(victim).map_or(0, |u| u.hp);
            assert_eq!(before - after, expected(attacker, target), "{attacker:?} vs {target:?}");
        }
    }
}

#[test]
fn combat_targets_lowest_id_in_range() {
    let mut s = sandbox();
    let low = spawn(&mut s, FactionId::Player, UnitKind::Melee, Cell::new(15, 14));
    let high = spawn(&mut s, FactionId::Player, UnitKind::Melee, Cell::new(15, 16));
    spawn(&mut s, FactionId::Opponent, UnitKind::Ranged, Cell::new(15, 15));
    let s1 = idle_step(&s);
    let p = s1.faction(FactionId::Player);
    assert_eq!(p.unit(low).unwrap().hp, 60 - 4);
    assert_eq!(p.unit(high).unwrap().hp, 60);
}

#[test]
fn combat_is_simultaneous() {
    // Two melee units finishing each other on the same tick both die.
    let mut s = sandbox();
    let a = spawn(&mut s, FactionId::Player, UnitKind::Melee, Cell::new(15, 15));
    let b = spawn(&mut s, FactionId::Opponent, UnitKind::Melee, Cell::new(16, 15));
    s.faction_mut(FactionId::Player).units[0].hp = 5;
    s.faction_mut(FactionId::Opponent).units[0].hp = 5;
    let s1 = idle_step(&s);
    assert!(s1.faction(FactionId::Player).unit(a).is_none());
    assert!(s1.faction(FactionId::Opponent).unit(b).is_none());
}

#[test]
fn victory_when_enemy_has_no_buildings() {
    let mut s = reset(&GameConfig::default()).unwrap();
    assert_eq!(check_victory(&s), None);
    s.faction_mut(FactionId::Opponent).buildings.clear();
    assert_eq!(check_victory(&s), Some(Outcome::Winner(FactionId::Player)));
    s.faction_mut(FactionId::Player).buildings.clear();
    assert_eq!(check_victory(&s), Some(Outcome::Draw));
}

#[test]
fn draw_at_tick_limit() {
    let mut cfg = GameConfig::default();
    cfg.tick_limit = 3;
    let mut s = reset(&cfg).unwrap();
    for _ in 0..3 {
        s = idle_step(&s);
    }
    assert_eq!(s.terminal, Some(Outcome::Draw));
    assert_eq!(step(&s, &empty(FactionId::Player), &empty(FactionId::Opponent)), Err(RtsError::StepAfterTerminal));
}

#[test]
fn reward_only_at_terminal_tick() {
    let mut s = sandbox();
    s.faction_mut(FactionId::Opponent).buildings[0].hp = 5;
    spawn(&mut s, FactionId::Player, UnitKind::Melee, Cell::new(26, 26));
    let (s1, r) = step(&s, &empty(FactionId::Player), &empty(FactionId::Opponent)).unwrap();
    assert_eq!(s1.terminal, Some(Outcome::Winner(FactionId::Player)));
    assert_eq!(r.reward, 1);
    assert!(r.events.iter().any(|e| matches!(e, GameEvent::BuildingDestroyed { .. })));
}

#[test]
fn invalid_commands_are_dropped_not_fatal() {
    let s = reset(&GameConfig::default()).unwrap();
    let enemy_worker = s.faction(FactionId::Opponent).units[0].id;
    let cmds = ActionSet {
        faction: FactionId::Player,
        commands: vec![
            Command::Move { unit: enemy_worker, to: Cell::new(1, 1) },
            Command::Stop { unit: 9999 },
            Command::BuildUnit { building: 1, kind: UnitKind::Air },
        ],
    };
    let (s1, r) = step(&s, &cmds, &empty(FactionId::Opponent)).unwrap();
    assert_eq!(s1.tick, 1);
    let reasons: Vec<DropReason> = r.dropped.iter().map(|d| d.reason).collect();
    assert_eq!(reasons, vec![DropReason::NotOwned, DropReason::UnknownActor, DropReason::CannotProduce]);
}

#[test]
fn production_respects_supply_cap_at_order_time() {
    let mut cfg = GameConfig::default();
    cfg.starting_minerals = 10_000;
    let s = reset(&cfg).unwrap();
    let base = s.faction(FactionId::Player).buildings[0].id;
    // 6 workers used, cap 10: only 4 more fit; the queue holds 5.
    let cmds = ActionSet {
        faction: FactionId::Player,
        commands: vec![Command::BuildUnit { building: base, kind: UnitKind::Worker }; 5],
    };
    let (s1, r) = step(&s, &cmds, &empty(FactionId::Opponent)).unwrap();
    assert_eq!(s1.faction(FactionId::Player).buildings[0].production_queue.len(), 4);
    assert_eq!(r.dropped.len(), 1);
    assert_eq!(r.dropped[0].reason, DropReason::SupplyBlocked);
    assert_eq!(s1.faction(FactionId::Player).minerals, 10_000 - 200);
}

#[test]
fn geyser_takes_at_most_three_workers() {
    let s = reset(&GameConfig::default()).unwrap();
    let geyser = s
        .resource_nodes
        .iter()
        .find(|n| n.kind == ResourceKind::Gas && s.node_served_by(FactionId::Player, n))
        .unwrap()
        .id;
    let cmds = ActionSet {
        faction: FactionId::Player,
        commands: s
            .faction(FactionId::Player)
            .units
            .iter()
            .take(4)
            .map(|u| Command::AssignWorker { worker: u.id, node: geyser })
            .collect(),
    };
    let (_, r) = step(&s, &cmds, &empty(FactionId::Opponent)).unwrap();
    assert_eq!(r.dropped.len(), 1);
    assert_eq!(r.dropped[0].reason, DropReason::GeyserFull);
}

#[test]
fn structures_build_and_raise_supply() {
    let mut cfg = GameConfig::default();
    cfg.starting_minerals = 500;
    let s = reset(&cfg).unwrap();
    let worker = s.faction(FactionId::Player).units[0].id;
    let cmds = ActionSet {
        faction: FactionId::Player,
        commands: vec![Command::BuildStructure { worker, kind: BuildingKind::SupplyDepot, at: Cell::new(7, 7) }],
    };
    let (mut s, _) = step(&s, &cmds, &empty(FactionId::Opponent)).unwrap();
    assert_eq!(s.faction(FactionId::Player).supply_cap, 10);
    for _ in 1..150 {
        s = idle_step(&s);
    }
    assert_eq!(s.faction(FactionId::Player).supply_cap, 18);
    assert_eq!(s.faction(FactionId::Player).minerals, 400);
}

#[test]
fn fnv_reference_vectors() {
    assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
    assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
}

#[test]
fn canonical_json_sorts_keys() {
    let s = reset(&GameConfig::default()).unwrap();
    let json = s.canonical_json();
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    assert!(json.starts_with("{\"factions\":"));
}
