use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::action::{ActionSet, Command};
use super::config::GameConfig;
use super::types::*;
use super::RtsError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum GameEvent {
    UnitDied { faction: FactionId, id: EntityId, kind: UnitKind },
    BuildingDestroyed { faction: FactionId, id: EntityId, kind: BuildingKind },
    UnitProduced { faction: FactionId, id: EntityId, kind: UnitKind },
    StructureCompleted { faction: FactionId, id: EntityId, kind: BuildingKind },
    ResourceExhausted { node: NodeId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    WrongFaction,
    UnknownActor,
    NotOwned,
    WrongActorKind,
    NotComplete,
    CannotProduce,
    QueueFull,
    Unaffordable,
    SupplyBlocked,
    OutOfBounds,
    InvalidPlacement,
    NodeUnavailable,
    GeyserFull,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedCommand {
    pub faction: FactionId,
    pub command: Command,
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TickResult {
    /// +1 player win, -1 player loss, 0 otherwise (including draws).
    pub reward: i32,
    pub events: Vec<GameEvent>,
    pub dropped: Vec<DroppedCommand>,
}

const SPAWN_OFFSETS: [(i32, i32); 8] = [(1, 1), (1, 0), (0, 1), (-1, 1), (1, -1), (-1, 0), (0, -1), (-1, -1)];

/// Builds the tick-0 state for `config`.
pub fn reset(config: &GameConfig) -> Result<GameState, RtsError> {
    config.validate()?;
    let map = MapInfo {
        width: config.map_width,
        height: config.map_height,
        tick_limit: config.tick_limit,
        start_locations: config.start_locations.clone(),
        expansion_sites: config.expansion_sites.clone(),
    };
    let mut next_id: EntityId = 1;
    let mut factions = Vec::with_capacity(2);
    for (i, &start) in config.start_locations.iter().enumerate() {
        let mut base = Building::new(next_id, BuildingKind::Base, start, 0);
        base.hp = config.starting_base_hp.min(BuildingKind::Base.stats().max_hp);
        next_id += 1;
        let units: Vec<Unit> = (0..config.starting_workers as usize)
            .map(|k| {
                let (dx, dy) = SPAWN_OFFSETS[k % SPAWN_OFFSETS.len()];
                let sign = if i == 0 { 1 } else { -1 };
                let pos = clamp(&map, Cell::new(start.x + sign * dx, start.y + sign * dy));
                let u = Unit::new(next_id, UnitKind::Worker, pos);
                next_id += 1;
                u
            })
            .collect();
        let mut fs = FactionState {
            minerals: config.starting_minerals,
            gas: config.starting_gas,
            supply_used: 0,
            supply_cap: 0,
            units,
            buildings: vec![base],
            income_permille: config.income_permille[i],
            mined_minerals: 0,
            mined_gas: 0,
            spent_minerals: 0,
            spent_gas: 0,
        };
        fs.supply_used = fs.computed_supply_used();
        fs.supply_cap = fs.computed_supply_cap();
        factions.push(fs);
    }
    let resource_nodes: Vec<ResourceNode> = config
        .resource_layout
        .iter()
        .enumerate()
        .map(|(i, r)| ResourceNode { id: i as NodeId, kind: r.kind, position: r.cell, remaining: r.amount })
        .collect();
    let total = |k| resource_nodes.iter().filter(|n| n.kind == k).map(|n| n.remaining as u64).sum();
    let [player, opponent]: [FactionState; 2] = factions.try_into().expect("two factions");
    Ok(GameState {
        tick: 0,
        initial_minerals: total(ResourceKind::Minerals),
        initial_gas: total(ResourceKind::Gas),
        map,
        factions: [player, opponent],
        resource_nodes,
        next_id,
        terminal: None,
    })
}

fn clamp(map: &MapInfo, c: Cell) -> Cell {
    Cell::new(c.x.clamp(0, map.width - 1), c.y.clamp(0, map.height - 1))
}

/// Winner when one side has no buildings left; draw when both are gone or the
/// tick limit is reached with both standing.
pub fn check_victory(state: &GameState) -> Option<Outcome> {
    let alive = |f: FactionId| !state.faction(f).buildings.is_empty();
    match (alive(FactionId::Player), alive(FactionId::Opponent)) {
        (false, false) => Some(Outcome::Draw),
        (true, false) => Some(Outcome::Winner(FactionId::Player)),
        (false, true) => Some(Outcome::Winner(FactionId::Opponent)),
        (true, true) if state.tick >= state.map.tick_limit => Some(Outcome::Draw),
        (true, true) => None,
    }
}

/// Advances the world by one tick.
pub fn step(
    state: &GameState,
    player_actions: &ActionSet,
    opponent_actions: &ActionSet,
) -> Result<(GameState, TickResult), RtsError> {
    if state.is_terminal() {
        return Err(RtsError::StepAfterTerminal);
    }
    let mut next = state.clone();
    let mut result = TickResult::default();

    // 1. orders
    for (faction, set) in [(FactionId::Player, player_actions), (FactionId::Opponent, opponent_actions)] {
        for cmd in &set.commands {
            let outcome = if set.faction != faction {
                Err(DropReason::WrongFaction)
            } else {
                apply_command(&mut next, faction, cmd)
            };
            if let Err(reason) = outcome {
                result.dropped.push(DroppedCommand { faction, command: *cmd, reason });
            }
        }
    }

    // 2. production
    production(&mut next, &mut result.events);
    // 3. movement
    movement(&mut next);
    // 4. combat
    combat(&mut next);
    // 5. harvesting
    harvesting(&mut next, &mut result.events);
    // 6. deaths
    remove_dead(&mut next, &mut result.events);
    for fs in next.factions.iter_mut() {
        fs.supply_used = fs.computed_supply_used();
        fs.supply_cap = fs.computed_supply_cap();
    }

    // 7. victory
    next.tick += 1;
    next.terminal = check_victory(&next);
    result.reward = match next.terminal {
        Some(Outcome::Winner(FactionId::Player)) => 1,
        Some(Outcome::Winner(FactionId::Opponent)) => -1,
        _ => 0,
    };
    Ok((next, result))
}

fn apply_command(state: &mut GameState, faction: FactionId, cmd: &Command) -> Result<(), DropReason> {
    let actor = cmd.actor();
    let fs = state.faction(faction);
    if fs.unit(actor).is_none() && fs.building(actor).is_none() {
        return Err(if state.owner_of(actor).is_some() { DropReason::NotOwned } else { DropReason::UnknownActor });
    }
    match *cmd {
        Command::BuildUnit { building, kind } => {
            let b = fs.building(building).ok_or(DropReason::WrongActorKind)?;
            if !b.is_complete() {
                return Err(DropReason::NotComplete);
            }
            if !b.kind.stats().produces.contains(&kind) {
                return Err(DropReason::CannotProduce);
            }
            if b.production_queue.len() >= MAX_QUEUE {
                return Err(DropReason::QueueFull);
            }
            let s = kind.stats();
            if fs.minerals < s.minerals || fs.gas < s.gas {
                return Err(DropReason::Unaffordable);
            }
            if fs.supply_used + fs.queued_supply() + s.supply > fs.supply_cap {
                return Err(DropReason::SupplyBlocked);
            }
            let fs = state.faction_mut(faction);
            spend(fs, s.minerals, s.gas);
            let b = fs.buildings.iter_mut().find(|b| b.id == building).expect("checked");
            b.production_queue.push(QueueItem { kind, ticks_remaining: s.build_ticks });
        }
        Command::BuildStructure { worker, kind, at } => {
            let w = fs.unit(worker).ok_or(DropReason::WrongActorKind)?;
            if w.kind != UnitKind::Worker {
                return Err(DropReason::WrongActorKind);
            }
            if !state.map.contains(at) {
                return Err(DropReason::OutOfBounds);
            }
            if state.cell_has_structure_or_node(at) {
                return Err(DropReason::InvalidPlacement);
            }
            let is_site = state.map.base_sites().any(|c| c == at);
            let placement_ok = if kind == BuildingKind::Base {
                is_site
            } else {
                !is_site
                    && fs
                        .buildings
                        .iter()
                        .any(|b| b.kind == BuildingKind::Base && b.position.distance(at) <= BUILD_RADIUS)
            };
            if !placement_ok {
                return Err(DropReason::InvalidPlacement);
            }
            let s = kind.stats();
            if fs.minerals < s.minerals || fs.gas < s.gas {
                return Err(DropReason::Unaffordable);
            }
            let id = state.next_id;
            state.next_id += 1;
            let fs = state.faction_mut(faction);
            spend(fs, s.minerals, s.gas);
            fs.buildings.push(Building::new(id, kind, at, s.build_ticks));
        }
        Command::AssignWorker { worker, node } => {
            let w = fs.unit(worker).ok_or(DropReason::WrongActorKind)?;
            if w.kind != UnitKind::Worker {
                return Err(DropReason::WrongActorKind);
            }
            let n = state.node(node).ok_or(DropReason::NodeUnavailable)?;
            if n.remaining == 0 || !state.node_served_by(faction, n) {
                return Err(DropReason::NodeUnavailable);
            }
            if n.kind == ResourceKind::Gas {
                let on_geyser =
                    fs.units.iter().filter(|u| u.id != worker && u.order == Order::Harvest { node }).count();
                if on_geyser >= MAX_GAS_WORKERS {
                    return Err(DropReason::GeyserFull);
                }
            }
            let u = unit_mut(state, faction, worker);
            if u.order != (Order::Harvest { node }) {
                u.order = Order::Harvest { node };
                u.harvest_progress = 0;
            }
        }
        Command::Move { unit, to } => {
            fs.unit(unit).ok_or(DropReason::WrongActorKind)?;
            if !state.map.contains(to) {
                return Err(DropReason::OutOfBounds);
            }
            unit_mut(state, faction, unit).order = Order::Move { to };
        }
        Command::Attack { unit, to } => {
            let u = fs.unit(unit).ok_or(DropReason::WrongActorKind)?;
            if !u.kind.is_army() {
                return Err(DropReason::WrongActorKind);
            }
            if !state.map.contains(to) {
                return Err(DropReason::OutOfBounds);
            }
            unit_mut(state, faction, unit).order = Order::Attack { to };
        }
        Command::Stop { unit } => {
            fs.unit(unit).ok_or(DropReason::WrongActorKind)?;
            unit_mut(state, faction, unit).order = Order::Idle;
        }
    }
    Ok(())
}

fn unit_mut(state: &mut GameState, faction: FactionId, id: EntityId) -> &mut Unit {
    state.faction_mut(faction).units.iter_mut().find(|u| u.id == id).expect("validated unit id")
}

fn spend(fs: &mut FactionState, minerals: u32, gas: u32) {
    fs.minerals -= minerals;
    fs.gas -= gas;
    fs.spent_minerals += minerals as u64;
    fs.spent_gas += gas as u64;
}

fn production(state: &mut GameState, events: &mut Vec<GameEvent>) {
    let center = Cell::new(state.map.width / 2, state.map.height / 2);
    for faction in FactionId::BOTH {
        let fs = state.faction_mut(faction);
        for b in fs.buildings.iter_mut() {
            if b.construction_remaining > 0 {
                b.construction_remaining -= 1;
                if b.construction_remaining == 0 {
                    events.push(GameEvent::StructureCompleted { faction, id: b.id, kind: b.kind });
                }
            }
        }
        fs.supply_cap = fs.computed_supply_cap();
    }
    for faction in FactionId::BOTH {
        let mut spawned = Vec::new();
        let mut next_id = state.next_id;
        let fs = state.faction_mut(faction);
        let mut supply_used = fs.computed_supply_used();
        for b in fs.buildings.iter_mut().filter(|b| b.construction_remaining == 0) {
            let Some(front) = b.production_queue.first_mut() else { continue };
            if front.ticks_remaining > 0 {
                front.ticks_remaining -= 1;
            }
            if front.ticks_remaining == 0 {
                let kind = front.kind;
                // Completion waits for room if the cap dropped since the order.
                if supply_used + kind.stats().supply <= fs.supply_cap {
                    b.production_queue.remove(0);
                    supply_used += kind.stats().supply;
                    spawned.push(Unit::new(next_id, kind, b.position.step_toward(center)));
                    events.push(GameEvent::UnitProduced { faction, id: next_id, kind });
                    next_id += 1;
                }
            }
        }
        fs.units.extend(spawned);
        fs.supply_used = supply_used;
        state.next_id = next_id;
    }
}

#[derive(Clone, Copy)]
struct TargetInfo {
    id: EntityId,
    pos: Cell,
    air: bool,
    unit_kind: Option<UnitKind>,
}

fn targets_of(fs: &FactionState) -> Vec<TargetInfo> {
    let mut t: Vec<TargetInfo> = fs
        .units
        .iter()
        .map(|u| TargetInfo { id: u.id, pos: u.position, air: u.is_air(), unit_kind: Some(u.kind) })
        .chain(fs.buildings.iter().map(|b| TargetInfo { id: b.id, pos: b.position, air: false, unit_kind: None }))
        .collect();
    t.sort_by_key(|t| t.id);
    t
}

/// Lowest-id enemy within `range` that the attacker can hit.
fn pick_target(pos: Cell, range: i32, hits_ground: bool, hits_air: bool, enemies: &[TargetInfo]) -> Option<TargetInfo> {
    enemies.iter().find(|e| pos.distance(e.pos) <= range && if e.air { hits_air } else { hits_ground }).copied()
}

fn movement(state: &mut GameState) {
    let snapshots = [targets_of(&state.factions[0]), targets_of(&state.factions[1])];
    for faction in FactionId::BOTH {
        let enemies = &snapshots[faction.enemy().index()];
        for u in state.faction_mut(faction).units.iter_mut() {
            let s = u.kind.stats();
            let to = match u.order {
                Order::Move { to } => to,
                Order::Attack { to } => {
                    if pick_target(u.position, s.range, s.hits_ground, s.hits_air, enemies).is_some() {
                        u.move_progress = 0;
                        continue;
                    }
                    to
                }
                Order::Idle | Order::Harvest { .. } => continue,
            };
            if u.position != to {
                u.move_progress += 1;
                if u.move_progress >= s.move_period {
                    u.position = u.position.step_toward(to);
                    u.move_progress = 0;
                }
            }
            if u.position == to && matches!(u.order, Order::Move { .. }) {
                u.order = Order::Idle;
                u.move_progress = 0;
            }
        }
    }
}

fn combat(state: &mut GameState) {
    let snapshots = [targets_of(&state.factions[0]), targets_of(&state.factions[1])];
    let mut damage: BTreeMap<EntityId, i32> = BTreeMap::new();
    for faction in FactionId::BOTH {
        let fs = state.faction(faction);
        let enemies = &snapshots[faction.enemy().index()];
        for u in fs.units.iter() {
            let s = u.kind.stats();
            if s.damage == 0 {
                continue;
            }
            if let Some(t) = pick_target(u.position, s.range, s.hits_ground, s.hits_air, enemies) {
                let tags: &[Tag] = match t.unit_kind {
                    Some(k) => k.stats().tags,
                    None => &[Tag::Ground, Tag::Armored],
                };
                *damage.entry(t.id).or_default() += s.damage + bonus_damage(u.kind, t.unit_kind, tags);
            }
        }
        for b in fs.buildings.iter().filter(|b| b.is_complete()) {
            let s = b.kind.stats();
            if s.damage == 0 {
                continue;
            }
            if let Some(t) = pick_target(b.position, s.range, true, true, enemies) {
                *damage.entry(t.id).or_default() += s.damage;
            }
        }
    }
    if damage.is_empty() {
        return;
    }
    for fs in state.factions.iter_mut() {
        for u in fs.units.iter_mut() {
            if let Some(d) = damage.get(&u.id) {
                u.hp -= d;
            }
        }
        for b in fs.buildings.iter_mut() {
            if let Some(d) = damage.get(&b.id) {
                b.hp -= d;
            }
        }
    }
}

fn harvesting(state: &mut GameState, events: &mut Vec<GameEvent>) {
    for faction in FactionId::BOTH {
        let served: HashSet<NodeId> = state
            .resource_nodes
            .iter()
            .filter(|n| n.remaining > 0 && state.node_served_by(faction, n))
            .map(|n| n.id)
            .collect();
        let GameState { factions, resource_nodes, .. } = state;
        let fs = &mut factions[faction.index()];
        let income = fs.income_permille;
        for u in fs.units.iter_mut() {
            let Order::Harvest { node } = u.order else { continue };
            let Some(n) = resource_nodes.iter_mut().find(|n| n.id == node) else {
                u.order = Order::Idle;
                continue;
            };
            if !served.contains(&node) || n.remaining == 0 {
                u.order = Order::Idle;
                u.harvest_progress = 0;
                continue;
            }
            let period = match n.kind {
                ResourceKind::Minerals => MINERAL_PERIOD,
                ResourceKind::Gas => GAS_PERIOD,
            } * 1000;
            u.harvest_progress += income;
            while u.harvest_progress >= period && n.remaining > 0 {
                u.harvest_progress -= period;
                n.remaining -= 1;
                match n.kind {
                    ResourceKind::Minerals => {
                        fs.minerals += 1;
                        fs.mined_minerals += 1;
                    }
                    ResourceKind::Gas => {
                        fs.gas += 1;
                        fs.mined_gas += 1;
                    }
                }
                if n.remaining == 0 {
                    events.push(GameEvent::ResourceExhausted { node });
                }
            }
        }
    }
}

fn remove_dead(state: &mut GameState, events: &mut Vec<GameEvent>) {
    for faction in FactionId::BOTH {
        let fs = state.faction_mut(faction);
        fs.units.retain(|u| {
            if u.hp <= 0 {
                events.push(GameEvent::UnitDied { faction, id: u.id, kind: u.kind });
                false
            } else {
                true
            }
        });
        fs.buildings.retain(|b| {
            if b.hp <= 0 {
                events.push(GameEvent::BuildingDestroyed { faction, id: b.id, kind: b.kind });
                false
            } else {
                true
            }
        });
    }
}
