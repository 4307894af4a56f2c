use std::collections::{HashMap, HashSet};

use super::modulators::{ModulatorSet, Policy, PolicyLibrary};
use super::tree::{Emitter, Node, Predicate, TreeDocument};
use super::BtError;
use crate::rts::{
    ActionSet, BuildingKind, Cell, Command, EntityId, FactionId, FactionState, GameState, NodeId, Order, ResourceKind,
    UnitKind, BUILD_RADIUS, HARVEST_RADIUS, MAX_GAS_WORKERS, MAX_SUPPLY,
};

/// Enemy army within this distance of any own building triggers emergency defense.
pub const DEFENSE_RADIUS: i32 = 8;
/// Production buildings keep at most this many queued units.
const ARMY_QUEUE_DEPTH: usize = 2;
const RALLY_DISTANCE: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Success,
    Failure,
}

/// A compiled tree template. Ticking it against a state is pure.
#[derive(Debug, Clone)]
pub struct BehaviorTree {
    root: Node,
}

impl Default for BehaviorTree {
    fn default() -> Self {
        Self::from_document(&TreeDocument::shipped()).expect("shipped template compiles")
    }
}

impl BehaviorTree {
    pub fn from_document(doc: &TreeDocument) -> Result<Self, BtError> {
        Ok(Self { root: doc.compile()? })
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// Evaluates the tree for `faction` and returns the commands it emits.
    pub fn tick(
        &self,
        policy: &Policy,
        library: &PolicyLibrary,
        state: &GameState,
        faction: FactionId,
    ) -> Result<ActionSet, BtError> {
        library.check(policy)?;
        Ok(self.tick_modulators(&policy.modulators, state, faction))
    }

    /// Same as [`tick`](Self::tick) for a bare, already-validated modulator set.
    pub fn tick_modulators(&self, modulators: &ModulatorSet, state: &GameState, faction: FactionId) -> ActionSet {
        if state.is_terminal() {
            return ActionSet::empty(faction);
        }
        let mut bb = Blackboard::new(state, faction, modulators);
        eval(&self.root, &mut bb);
        ActionSet { faction, commands: bb.commands }
    }
}

/// Ticks the shipped template.
pub fn tick(policy: &Policy, state: &GameState, faction: FactionId) -> Result<ActionSet, BtError> {
    thread_local! {
        static TREE: BehaviorTree = BehaviorTree::default();
        static LIBRARY: PolicyLibrary = PolicyLibrary::default();
    }
    TREE.with(|t| LIBRARY.with(|l| t.tick(policy, l, state, faction)))
}

fn eval(node: &Node, bb: &mut Blackboard<'_>) -> Status {
    match node {
        Node::Selector(children) => {
            for c in children {
                if eval(c, bb) == Status::Success {
                    return Status::Success;
                }
            }
            Status::Failure
        }
        Node::Sequence(children) => {
            for c in children {
                if eval(c, bb) == Status::Failure {
                    return Status::Failure;
                }
            }
            Status::Success
        }
        Node::Condition(p) => {
            if bb.check(*p) {
                Status::Success
            } else {
                Status::Failure
            }
        }
        Node::Action(e) => {
            bb.emit(*e);
            Status::Success
        }
    }
}

/// Scratch state for one tick: a running budget plus everything already
/// planned, so that later emitters never double-book money, supply, workers
/// or build cells.
struct Blackboard<'a> {
    state: &'a GameState,
    faction: FactionId,
    me: &'a FactionState,
    enemy: &'a FactionState,
    mods: &'a ModulatorSet,
    minerals: u32,
    gas: u32,
    supply_free: u32,
    commands: Vec<Command>,
    busy: HashSet<EntityId>,
    planned_cells: HashSet<Cell>,
    planned_queue: HashMap<EntityId, usize>,
    planned_units: HashMap<UnitKind, u32>,
    planned_buildings: HashMap<BuildingKind, u32>,
}

impl<'a> Blackboard<'a> {
    fn new(state: &'a GameState, faction: FactionId, mods: &'a ModulatorSet) -> Self {
        let me = state.faction(faction);
        Self {
            state,
            faction,
            me,
            enemy: state.faction(faction.enemy()),
            mods,
            minerals: me.minerals,
            gas: me.gas,
            supply_free: me.supply_cap.saturating_sub(me.supply_used + me.queued_supply()),
            commands: Vec::new(),
            busy: HashSet::new(),
            planned_cells: HashSet::new(),
            planned_queue: HashMap::new(),
            planned_units: HashMap::new(),
            planned_buildings: HashMap::new(),
        }
    }

    fn check(&self, p: Predicate) -> bool {
        match p {
            Predicate::EnemyNearBase => self.threat().is_some(),
            Predicate::ArmyReady => {
                let supply = self.me.army_supply();
                let threshold = self.mods.attack_supply_threshold;
                // An army already committed to the attack keeps going until it
                // has lost half of the threshold.
                // A starved or maxed-out economy cannot grow the army any
                // further, so it goes with what it has.
                let stuck = supply > 0 && (self.starved() || self.me.supply_used + 2 >= MAX_SUPPLY);
                supply >= threshold || stuck || (self.attacking_main() && 2 * supply >= threshold && supply > 0)
            }
        }
    }

    fn emit(&mut self, e: Emitter) {
        match e {
            Emitter::BuildTurret => self.build_turret(),
            Emitter::RecallArmy => self.recall_army(),
            Emitter::BuildSupply => self.build_supply(),
            Emitter::TrainWorkers => self.train_workers(),
            Emitter::Expand => self.expand(),
            Emitter::AssignWorkers => self.assign_workers(),
            Emitter::BuildProduction => self.build_production(),
            Emitter::TrainArmy => self.train_army(),
            Emitter::AttackEnemyMain => self.attack_enemy_main(),
            Emitter::RallyAtBase => self.rally_at_base(),
        }
    }

    // ---- queries ----

    fn main_base(&self) -> Option<Cell> {
        self.me.main_position()
    }

    fn map_center(&self) -> Cell {
        Cell::new(self.state.map.width / 2, self.state.map.height / 2)
    }

    /// Threatened own building and the enemy army unit closest to it.
    fn threat(&self) -> Option<(Cell, Cell)> {
        let mut best: Option<(i32, EntityId, Cell, Cell)> = None;
        for b in self.me.buildings.iter() {
            for u in self.enemy.units.iter().filter(|u| u.kind.is_army()) {
                let d = b.position.distance(u.position);
                if d <= DEFENSE_RADIUS && best.is_none_or(|(bd, bid, _, _)| (d, u.id) < (bd, bid)) {
                    best = Some((d, u.id, b.position, u.position));
                }
            }
        }
        best.map(|(_, _, base, enemy)| (base, enemy))
    }

    /// No minerals left in reach and too poor to train anything.
    fn starved(&self) -> bool {
        let cheapest = UnitKind::ARMY.iter().map(|k| k.stats().minerals).min().unwrap_or(0);
        self.me.minerals < cheapest
            && !self.state.resource_nodes.iter().any(|n| {
                n.kind == ResourceKind::Minerals && n.remaining > 0 && self.state.node_served_by(self.faction, n)
            })
    }

    /// Bases that still have minerals within harvest range. Mined-out bases
    /// do not count against `max_bases`.
    fn live_bases(&self) -> u32 {
        let live = self
            .me
            .buildings
            .iter()
            .filter(|b| b.kind == BuildingKind::Base)
            .filter(|b| {
                !b.is_complete()
                    || self.state.resource_nodes.iter().any(|n| {
                        n.kind == ResourceKind::Minerals
                            && n.remaining > 0
                            && n.position.distance(b.position) <= HARVEST_RADIUS
                    })
            })
            .count() as u32;
        live + self.planned_buildings.get(&BuildingKind::Base).copied().unwrap_or(0)
    }

    fn enemy_main(&self) -> Option<Cell> {
        self.enemy.main_position()
    }

    fn attacking_main(&self) -> bool {
        let Some(target) = self.enemy_main() else { return false };
        self.me.units.iter().any(|u| u.order == Order::Attack { to: target })
    }

    fn army_units(&self) -> impl Iterator<Item = &'a crate::rts::Unit> + '_ {
        self.me.units.iter().filter(|u| u.kind.is_army())
    }

    fn buildings_of(&self, kind: BuildingKind) -> u32 {
        self.me.count_buildings(kind) as u32 + self.planned_buildings.get(&kind).copied().unwrap_or(0)
    }

    fn completed_bases(&self) -> u32 {
        self.me.buildings.iter().filter(|b| b.kind == BuildingKind::Base && b.is_complete()).count() as u32
    }

    fn under_construction(&self, kind: BuildingKind) -> u32 {
        self.me.buildings.iter().filter(|b| b.kind == kind && !b.is_complete()).count() as u32
            + self.planned_buildings.get(&kind).copied().unwrap_or(0)
    }

    /// Existing plus queued plus planned units of `kind`.
    fn unit_count(&self, kind: UnitKind) -> u32 {
        let queued =
            self.me.buildings.iter().flat_map(|b| b.production_queue.iter()).filter(|q| q.kind == kind).count();
        (self.me.count_units(kind) + queued) as u32 + self.planned_units.get(&kind).copied().unwrap_or(0)
    }

    fn can_afford(&self, minerals: u32, gas: u32) -> bool {
        self.minerals >= minerals && self.gas >= gas
    }

    fn free_worker(&self) -> Option<EntityId> {
        let workers = || self.me.units.iter().filter(|u| u.kind == UnitKind::Worker && !self.busy.contains(&u.id));
        let on_gas = |u: &&crate::rts::Unit| match u.order {
            Order::Harvest { node } => self.state.node(node).is_some_and(|n| n.kind == ResourceKind::Gas),
            _ => false,
        };
        workers().find(|u| !on_gas(u)).or_else(|| workers().next()).map(|u| u.id)
    }

    fn cell_free(&self, c: Cell) -> bool {
        self.state.map.contains(c)
            && !self.planned_cells.contains(&c)
            && !self.state.cell_has_structure_or_node(c)
            && !self.state.map.base_sites().any(|s| s == c)
    }

    /// First free cell in rings around `near`, scanning each ring in row-major order.
    fn build_cell(&self, near: Cell) -> Option<Cell> {
        for r in 2..=BUILD_RADIUS {
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx.abs().max(dy.abs()) != r {
                        continue;
                    }
                    let c = Cell::new(near.x + dx, near.y + dy);
                    if self.cell_free(c) {
                        return Some(c);
                    }
                }
            }
        }
        None
    }

    // ---- emitters ----

    fn place(&mut self, kind: BuildingKind, near: Cell) -> bool {
        let s = kind.stats();
        if !self.can_afford(s.minerals, s.gas) {
            return false;
        }
        let cell = if kind == BuildingKind::Base { Some(near) } else { self.build_cell(near) };
        let (Some(at), Some(worker)) = (cell, self.free_worker()) else { return false };
        self.minerals -= s.minerals;
        self.gas -= s.gas;
        self.busy.insert(worker);
        self.planned_cells.insert(at);
        *self.planned_buildings.entry(kind).or_default() += 1;
        self.commands.push(Command::BuildStructure { worker, kind, at });
        true
    }

    fn queue_unit(&mut self, building: EntityId, kind: UnitKind) -> bool {
        let s = kind.stats();
        if !self.can_afford(s.minerals, s.gas) || self.supply_free < s.supply {
            return false;
        }
        self.minerals -= s.minerals;
        self.gas -= s.gas;
        self.supply_free -= s.supply;
        *self.planned_queue.entry(building).or_default() += 1;
        *self.planned_units.entry(kind).or_default() += 1;
        self.commands.push(Command::BuildUnit { building, kind });
        true
    }

    fn queue_len(&self, b: &crate::rts::Building) -> usize {
        b.production_queue.len() + self.planned_queue.get(&b.id).copied().unwrap_or(0)
    }

    fn build_turret(&mut self) {
        if !self.mods.build_turrets {
            return;
        }
        let Some((base, _)) = self.threat() else { return };
        let nearby = self.me.buildings.iter().any(|b| b.kind == BuildingKind::Turret && b.position.distance(base) <= 4)
            || self.planned_buildings.contains_key(&BuildingKind::Turret);
        if !nearby {
            self.place(BuildingKind::Turret, base);
        }
    }

    fn recall_army(&mut self) {
        let Some((_, enemy)) = self.threat() else { return };
        let orders: Vec<Command> = self
            .army_units()
            .filter(|u| !self.busy.contains(&u.id) && u.order != Order::Attack { to: enemy })
            .map(|u| Command::Attack { unit: u.id, to: enemy })
            .collect();
        self.busy.extend(orders.iter().map(Command::actor));
        self.commands.extend(orders);
    }

    fn build_supply(&mut self) {
        let pending =
            self.under_construction(BuildingKind::SupplyDepot) * 8 + self.under_construction(BuildingKind::Base) * 10;
        let cap = self.me.supply_cap + pending;
        if cap >= MAX_SUPPLY {
            return;
        }
        let headroom = cap.saturating_sub(self.me.supply_used + self.me.queued_supply());
        let producers = self.me.count_buildings(BuildingKind::Barracks)
            + self.me.count_buildings(BuildingKind::Factory)
            + self.me.count_buildings(BuildingKind::Airport);
        let max_concurrent = 1 + producers as u32 / 3;
        if headroom < 4 && self.under_construction(BuildingKind::SupplyDepot) < max_concurrent {
            if let Some(base) = self.main_base() {
                self.place(BuildingKind::SupplyDepot, base);
            }
        }
    }

    fn train_workers(&mut self) {
        let target = self.mods.worker_target_per_base * self.completed_bases();
        let bases: Vec<EntityId> = self
            .me
            .buildings
            .iter()
            .filter(|b| b.kind == BuildingKind::Base && b.is_complete())
            .filter(|b| self.queue_len(b) == 0)
            .map(|b| b.id)
            .collect();
        for base in bases {
            if self.unit_count(UnitKind::Worker) >= target {
                break;
            }
            self.queue_unit(base, UnitKind::Worker);
        }
    }

    fn expand(&mut self) {
        if self.minerals <= 400 || self.live_bases() >= self.mods.max_bases {
            return;
        }
        let Some(main) = self.main_base() else { return };
        let site = self
            .state
            .map
            .base_sites()
            .enumerate()
            .filter(|(_, c)| {
                !self.planned_cells.contains(c)
                    && !self.state.factions.iter().any(|f| f.buildings.iter().any(|b| b.position == *c))
            })
            .min_by_key(|(i, c)| (c.distance(main), *i))
            .map(|(_, c)| c);
        if let Some(site) = site {
            self.place(BuildingKind::Base, site);
        }
    }

    fn assign_workers(&mut self) {
        let needs_gas = self.mods.composition_weights.ranged > 0 || self.mods.composition_weights.air > 0;
        let mut load: HashMap<NodeId, usize> = HashMap::new();
        for u in &self.me.units {
            if let Order::Harvest { node } = u.order {
                *load.entry(node).or_default() += 1;
            }
        }
        let served: Vec<(NodeId, ResourceKind)> = self
            .state
            .resource_nodes
            .iter()
            .filter(|n| n.remaining > 0 && self.state.node_served_by(self.faction, n))
            .map(|n| (n.id, n.kind))
            .collect();

        let mut idle: Vec<EntityId> = self
            .me
            .units
            .iter()
            .filter(|u| u.kind == UnitKind::Worker && u.order == Order::Idle && !self.busy.contains(&u.id))
            .map(|u| u.id)
            .collect();

        // Pull mineral workers onto empty gas slots once the economy can spare them.
        let workers = self.me.count_units(UnitKind::Worker);
        if needs_gas && workers >= 10 {
            let open_slots: usize = served
                .iter()
                .filter(|(_, k)| *k == ResourceKind::Gas)
                .map(|(id, _)| MAX_GAS_WORKERS.saturating_sub(load.get(id).copied().unwrap_or(0)))
                .sum();
            let short = open_slots.saturating_sub(idle.len());
            let donors: Vec<EntityId> = self
                .me
                .units
                .iter()
                .rev()
                .filter(|u| {
                    matches!(u.order, Order::Harvest { node } if served.iter().any(|(id, k)| *id == node && *k == ResourceKind::Minerals))
                        && !self.busy.contains(&u.id)
                })
                .take(short)
                .map(|u| u.id)
                .collect();
            idle.extend(donors);
        }

        for worker in idle {
            let gas = served
                .iter()
                .filter(|(id, k)| *k == ResourceKind::Gas && load.get(id).copied().unwrap_or(0) < MAX_GAS_WORKERS)
                .map(|(id, _)| *id)
                .next()
                .filter(|_| needs_gas && workers >= 8);
            let target = gas.or_else(|| {
                served
                    .iter()
                    .filter(|(_, k)| *k == ResourceKind::Minerals)
                    .min_by_key(|(id, _)| (load.get(id).copied().unwrap_or(0), *id))
                    .map(|(id, _)| *id)
            });
            let Some(node) = target else { break };
            let current = self.me.unit(worker).map(|u| u.order);
            if current == Some(Order::Harvest { node }) {
                continue;
            }
            if let Some(Order::Harvest { node: old }) = current {
                if let Some(l) = load.get_mut(&old) {
                    *l -= 1;
                }
            }
            *load.entry(node).or_default() += 1;
            self.busy.insert(worker);
            self.commands.push(Command::AssignWorker { worker, node });
        }
    }

    fn build_production(&mut self) {
        let Some(main) = self.main_base() else { return };
        let w = self.mods.composition_weights;
        let total = w.total().max(1);
        let slots = 2 * self.completed_bases().max(1);
        for kind in UnitKind::ARMY {
            let weight = w.get(kind);
            if weight == 0 {
                continue;
            }
            let producer = BuildingKind::producer_of(kind);
            if self.under_construction(producer) > 0 {
                continue;
            }
            let mut desired = (weight * slots).div_ceil(total).max(1);
            if self.minerals > 600 {
                desired += 1;
            }
            if self.buildings_of(producer) < desired {
                self.place(producer, main);
            }
        }
    }

    /// Largest-deficit-first against the target composition. Ties go to the
    /// kind whose name sorts first.
    fn train_army(&mut self) {
        let w = self.mods.composition_weights;
        let total_w = w.total() as i64;
        if total_w == 0 {
            return;
        }
        loop {
            let army: i64 = UnitKind::ARMY.iter().map(|k| self.unit_count(*k) as i64).sum();
            let pick = UnitKind::ARMY
                .into_iter()
                .filter(|k| w.get(*k) > 0)
                .map(|k| {
                    // deficit scaled by total weight: w_k (N + 1) - c_k W
                    let deficit = w.get(k) as i64 * (army + 1) - self.unit_count(k) as i64 * total_w;
                    (deficit, k)
                })
                .max_by(|(da, ka), (db, kb)| da.cmp(db).then_with(|| kb.name().cmp(ka.name())));
            let Some((_, kind)) = pick else { return };
            let producer_kind = BuildingKind::producer_of(kind);
            let producer = self
                .me
                .buildings
                .iter()
                .filter(|b| b.kind == producer_kind && b.is_complete() && self.queue_len(b) < ARMY_QUEUE_DEPTH)
                .min_by_key(|b| (self.queue_len(b), b.id))
                .map(|b| b.id);
            let Some(building) = producer else { return };
            if !self.queue_unit(building, kind) {
                return;
            }
        }
    }

    fn attack_enemy_main(&mut self) {
        let Some(target) = self.enemy_main() else { return };
        let orders: Vec<Command> = self
            .army_units()
            .filter(|u| !self.busy.contains(&u.id) && u.order != Order::Attack { to: target })
            .map(|u| Command::Attack { unit: u.id, to: target })
            .collect();
        self.busy.extend(orders.iter().map(Command::actor));
        self.commands.extend(orders);
    }

    fn rally_at_base(&mut self) {
        let Some(main) = self.main_base() else { return };
        let center = self.map_center();
        let rally = (0..RALLY_DISTANCE).fold(main, |c, _| c.step_toward(center));
        let orders: Vec<Command> = self
            .army_units()
            .filter(|u| !self.busy.contains(&u.id))
            .filter(|u| match u.order {
                Order::Attack { .. } => true,
                Order::Idle => u.position.distance(rally) > 2,
                _ => false,
            })
            .map(|u| Command::Move { unit: u.id, to: rally })
            .collect();
        self.busy.extend(orders.iter().map(Command::actor));
        self.commands.extend(orders);
    }
}
