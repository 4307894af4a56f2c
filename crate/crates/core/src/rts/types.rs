use serde::{Deserialize, Serialize};

/// Identifier shared by units and buildings. Allocated from a single
/// per-episode counter and never reused.
pub type EntityId = u32;

/// Index into [`GameState::resource_nodes`](super::GameState::resource_nodes).
pub type NodeId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    /// Grid distance with diagonal moves allowed.
    pub fn distance(self, other: Cell) -> i32 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }

    /// One diagonal-or-straight step toward `target`.
    pub fn step_toward(self, target: Cell) -> Cell {
        Cell::new(self.x + (target.x - self.x).signum(), self.y + (target.y - self.y).signum())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactionId {
    Player,
    Opponent,
}

impl FactionId {
    pub const BOTH: [FactionId; 2] = [FactionId::Player, FactionId::Opponent];

    pub fn index(self) -> usize {
        match self {
            FactionId::Player => 0,
            FactionId::Opponent => 1,
        }
    }

    pub fn enemy(self) -> FactionId {
        match self {
            FactionId::Player => FactionId::Opponent,
            FactionId::Opponent => FactionId::Player,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    Ground,
    Air,
    Armored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    Worker,
    Melee,
    Ranged,
    Air,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnitStats {
    pub minerals: u32,
    pub gas: u32,
    pub supply: u32,
    pub max_hp: i32,
    pub damage: i32,
    pub range: i32,
    /// Ticks per one-cell step.
    pub move_period: u32,
    pub build_ticks: u32,
    pub hits_ground: bool,
    pub hits_air: bool,
    pub tags: &'static [Tag],
}

/// Constants table for the unit roster.
///
/// | kind   | cost (m/g) | supply | hp | dmg | range | move | build | tags            |
/// |--------|------------|--------|----|-----|-------|------|-------|-----------------|
/// | Worker | 50/0       | 1      | 40 | 0   | -     | 2    | 60    | ground          |
/// | Melee  | 50/0       | 1      | 60 | 5   | 1     | 2    | 80    | ground          |
/// | Ranged | 75/25      | 2      | 70 | 4   | 4     | 3    | 100   | ground, armored |
/// | Air    | 100/75     | 2      | 80 | 4   | 3     | 1    | 120   | air             |
///
/// Bonus damage: Ranged +4 against air-tagged targets, Air +3 against Melee.
/// Melee only hits ground; Ranged and Air hit both. Workers do not fight.
impl UnitKind {
    pub const ALL: [UnitKind; 4] = [UnitKind::Worker, UnitKind::Melee, UnitKind::Ranged, UnitKind::Air];
    pub const ARMY: [UnitKind; 3] = [UnitKind::Melee, UnitKind::Ranged, UnitKind::Air];

    pub fn stats(self) -> UnitStats {
        match self {
            UnitKind::Worker => UnitStats {
                minerals: 50,
                gas: 0,
                supply: 1,
                max_hp: 40,
                damage: 0,
                range: 0,
                move_period: 2,
                build_ticks: 60,
                hits_ground: false,
                hits_air: false,
                tags: &[Tag::Ground],
            },
            UnitKind::Melee => UnitStats {
                minerals: 50,
                gas: 0,
                supply: 1,
                max_hp: 60,
                damage: 5,
                range: 1,
                move_period: 2,
                build_ticks: 80,
                hits_ground: true,
                hits_air: false,
                tags: &[Tag::Ground],
            },
            UnitKind::Ranged => UnitStats {
                minerals: 75,
                gas: 25,
                supply: 2,
                max_hp: 70,
                damage: 4,
                range: 4,
                move_period: 3,
                build_ticks: 100,
                hits_ground: true,
                hits_air: true,
                tags: &[Tag::Ground, Tag::Armored],
            },
            UnitKind::Air => UnitStats {
                minerals: 100,
                gas: 75,
                supply: 2,
                max_hp: 80,
                damage: 4,
                range: 3,
                move_period: 1,
                build_ticks: 120,
                hits_ground: true,
                hits_air: true,
                tags: &[Tag::Air],
            },
        }
    }

    pub fn is_army(self) -> bool {
        self != UnitKind::Worker
    }

    pub fn name(self) -> &'static str {
        match self {
            UnitKind::Worker => "worker",
            UnitKind::Melee => "melee",
            UnitKind::Ranged => "ranged",
            UnitKind::Air => "air",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuildingKind {
    Base,
    SupplyDepot,
    Barracks,
    Factory,
    Airport,
    Turret,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildingStats {
    pub minerals: u32,
    pub gas: u32,
    pub max_hp: i32,
    pub build_ticks: u32,
    pub supply_provided: u32,
    pub produces: &'static [UnitKind],
    pub damage: i32,
    pub range: i32,
}

/// | kind        | cost (m/g) | hp   | build | supply | produces     |
/// |-------------|------------|------|-------|--------|--------------|
/// | Base        | 400/0      | 1500 | 400   | 10     | Worker       |
/// | SupplyDepot | 100/0      | 400  | 150   | 8      |              |
/// | Barracks    | 150/0      | 800  | 250   |        | Melee        |
/// | Factory     | 150/50     | 800  | 300   |        | Ranged       |
/// | Airport     | 150/100    | 800  | 300   |        | Air          |
/// | Turret      | 100/0      | 500  | 150   |        | (6 dmg, r 5) |
impl BuildingKind {
    pub const ALL: [BuildingKind; 6] = [
        BuildingKind::Base,
        BuildingKind::SupplyDepot,
        BuildingKind::Barracks,
        BuildingKind::Factory,
        BuildingKind::Airport,
        BuildingKind::Turret,
    ];

    pub fn stats(self) -> BuildingStats {
        let (minerals, gas, max_hp, build_ticks, supply_provided, produces): (_, _, _, _, _, &'static [UnitKind]) =
            match self {
                BuildingKind::Base => (400, 0, 1500, 400, 10, &[UnitKind::Worker]),
                BuildingKind::SupplyDepot => (100, 0, 400, 150, 8, &[]),
                BuildingKind::Barracks => (150, 0, 800, 250, 0, &[UnitKind::Melee]),
                BuildingKind::Factory => (150, 50, 800, 300, 0, &[UnitKind::Ranged]),
                BuildingKind::Airport => (150, 100, 800, 300, 0, &[UnitKind::Air]),
                BuildingKind::Turret => (100, 0, 500, 150, 0, &[]),
            };
        let (damage, range) = if self == BuildingKind::Turret { (6, 5) } else { (0, 0) };
        BuildingStats { minerals, gas, max_hp, build_ticks, supply_provided, produces, damage, range }
    }

    /// The single building kind able to train `unit`.
    pub fn producer_of(unit: UnitKind) -> BuildingKind {
        match unit {
            UnitKind::Worker => BuildingKind::Base,
            UnitKind::Melee => BuildingKind::Barracks,
            UnitKind::Ranged => BuildingKind::Factory,
            UnitKind::Air => BuildingKind::Airport,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BuildingKind::Base => "base",
            BuildingKind::SupplyDepot => "supply_depot",
            BuildingKind::Barracks => "barracks",
            BuildingKind::Factory => "factory",
            BuildingKind::Airport => "airport",
            BuildingKind::Turret => "turret",
        }
    }
}

pub const MAX_SUPPLY: u32 = 200;
pub const MAX_QUEUE: usize = 5;
pub const MINERAL_PERIOD: u32 = 8;
pub const GAS_PERIOD: u32 = 10;
pub const MAX_GAS_WORKERS: usize = 3;
/// Harvestable nodes must lie within this distance of a completed own Base.
pub const HARVEST_RADIUS: i32 = 6;
/// Non-Base structures must be placed within this distance of an own Base.
pub const BUILD_RADIUS: i32 = 8;

/// Extra damage dealt by `attacker` against a target of `target_kind` carrying `target_tags`.
pub fn bonus_damage(attacker: UnitKind, target_kind: Option<UnitKind>, target_tags: &[Tag]) -> i32 {
    match attacker {
        UnitKind::Ranged if target_tags.contains(&Tag::Air) => 4,
        UnitKind::Air if target_kind == Some(UnitKind::Melee) => 3,
        _ => 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Order {
    Idle,
    Move { to: Cell },
    Attack { to: Cell },
    Harvest { node: NodeId },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unit {
    pub id: EntityId,
    pub kind: UnitKind,
    pub hp: i32,
    pub position: Cell,
    pub order: Order,
    pub tags: Vec<Tag>,
    /// Ticks accumulated toward the next one-cell step.
    pub move_progress: u32,
    /// Per-mille progress toward the next harvested unit of resource.
    pub harvest_progress: u32,
}

impl Unit {
    pub fn new(id: EntityId, kind: UnitKind, position: Cell) -> Self {
        let stats = kind.stats();
        Self {
            id,
            kind,
            hp: stats.max_hp,
            position,
            order: Order::Idle,
            tags: stats.tags.to_vec(),
            move_progress: 0,
            harvest_progress: 0,
        }
    }

    pub fn is_air(&self) -> bool {
        self.tags.contains(&Tag::Air)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueItem {
    pub kind: UnitKind,
    pub ticks_remaining: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Building {
    pub id: EntityId,
    pub kind: BuildingKind,
    pub hp: i32,
    pub position: Cell,
    pub production_queue: Vec<QueueItem>,
    /// Ticks until construction finishes; zero once complete.
    pub construction_remaining: u32,
}

impl Building {
    pub fn new(id: EntityId, kind: BuildingKind, position: Cell, construction_remaining: u32) -> Self {
        Self { id, kind, hp: kind.stats().max_hp, position, production_queue: Vec::new(), construction_remaining }
    }

    pub fn is_complete(&self) -> bool {
        self.construction_remaining == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceKind {
    Minerals,
    Gas,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceNode {
    pub id: NodeId,
    pub kind: ResourceKind,
    pub position: Cell,
    pub remaining: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactionState {
    pub minerals: u32,
    pub gas: u32,
    pub supply_used: u32,
    pub supply_cap: u32,
    pub units: Vec<Unit>,
    pub buildings: Vec<Building>,
    /// Harvest speed multiplier in thousandths (1000 = normal).
    pub income_permille: u32,
    pub mined_minerals: u64,
    pub mined_gas: u64,
    pub spent_minerals: u64,
    pub spent_gas: u64,
}

impl FactionState {
    pub fn unit(&self, id: EntityId) -> Option<&Unit> {
        self.units.iter().find(|u| u.id == id)
    }

    pub fn building(&self, id: EntityId) -> Option<&Building> {
        self.buildings.iter().find(|b| b.id == id)
    }

    pub fn count_units(&self, kind: UnitKind) -> usize {
        self.units.iter().filter(|u| u.kind == kind).count()
    }

    pub fn count_buildings(&self, kind: BuildingKind) -> usize {
        self.buildings.iter().filter(|b| b.kind == kind).count()
    }

    pub fn army_supply(&self) -> u32 {
        self.units.iter().filter(|u| u.kind.is_army()).map(|u| u.kind.stats().supply).sum()
    }

    /// Supply reserved by units still in production queues.
    pub fn queued_supply(&self) -> u32 {
        self.buildings.iter().flat_map(|b| b.production_queue.iter()).map(|q| q.kind.stats().supply).sum()
    }

    pub fn computed_supply_used(&self) -> u32 {
        self.units.iter().map(|u| u.kind.stats().supply).sum()
    }

    pub fn computed_supply_cap(&self) -> u32 {
        self.buildings
            .iter()
            .filter(|b| b.is_complete())
            .map(|b| b.kind.stats().supply_provided)
            .sum::<u32>()
            .min(MAX_SUPPLY)
    }

    /// Position of the lowest-id Base, falling back to the lowest-id building.
    pub fn main_position(&self) -> Option<Cell> {
        self.buildings
            .iter()
            .filter(|b| b.kind == BuildingKind::Base)
            .min_by_key(|b| b.id)
            .or_else(|| self.buildings.iter().min_by_key(|b| b.id))
            .map(|b| b.position)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", content = "faction", rename_all = "snake_case")]
pub enum Outcome {
    Winner(FactionId),
    Draw,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapInfo {
    pub width: i32,
    pub height: i32,
    pub tick_limit: u64,
    pub start_locations: Vec<Cell>,
    pub expansion_sites: Vec<Cell>,
}

impl MapInfo {
    pub fn contains(&self, cell: Cell) -> bool {
        cell.x >= 0 && cell.y >= 0 && cell.x < self.width && cell.y < self.height
    }

    /// Cells where a Base may be placed.
    pub fn base_sites(&self) -> impl Iterator<Item = Cell> + '_ {
        self.start_locations.iter().chain(self.expansion_sites.iter()).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameState {
    pub tick: u64,
    pub map: MapInfo,
    pub factions: [FactionState; 2],
    pub resource_nodes: Vec<ResourceNode>,
    pub initial_minerals: u64,
    pub initial_gas: u64,
    pub next_id: EntityId,
    pub terminal: Option<Outcome>,
}

impl GameState {
    pub fn faction(&self, id: FactionId) -> &FactionState {
        &self.factions[id.index()]
    }

    pub fn faction_mut(&mut self, id: FactionId) -> &mut FactionState {
        &mut self.factions[id.index()]
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal.is_some()
    }

    pub fn node(&self, id: NodeId) -> Option<&ResourceNode> {
        self.resource_nodes.iter().find(|n| n.id == id)
    }

    /// Owner of a unit or building id, if it is alive.
    pub fn owner_of(&self, id: EntityId) -> Option<FactionId> {
        FactionId::BOTH.into_iter().find(|f| {
            let fs = self.faction(*f);
            fs.unit(id).is_some() || fs.building(id).is_some()
        })
    }

    pub fn cell_has_structure_or_node(&self, cell: Cell) -> bool {
        self.factions.iter().any(|f| f.buildings.iter().any(|b| b.position == cell))
            || self.resource_nodes.iter().any(|n| n.position == cell)
    }

    /// True when `node` is within harvesting range of a completed Base of `faction`.
    pub fn node_served_by(&self, faction: FactionId, node: &ResourceNode) -> bool {
        self.faction(faction).buildings.iter().any(|b| {
            b.kind == BuildingKind::Base && b.is_complete() && b.position.distance(node.position) <= HARVEST_RADIUS
        })
    }
}
