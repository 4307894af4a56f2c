use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::types::{Cell, ResourceKind};
use super::RtsError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceSpec {
    pub cell: Cell,
    pub kind: ResourceKind,
    pub amount: u32,
}

/// Map layouts the generator knows how to lay out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapPreset {
    /// 32x32, starts in opposite corners.
    #[default]
    Corner,
    /// 40x24, starts on the short edges.
    Flank,
    /// 24x24, short rush distance.
    Compact,
}

impl MapPreset {
    pub const ALL: [MapPreset; 3] = [MapPreset::Corner, MapPreset::Flank, MapPreset::Compact];

    fn geometry(self) -> (i32, i32, Cell, [Cell; 2]) {
        match self {
            MapPreset::Corner => (32, 32, Cell::new(4, 4), [Cell::new(4, 16), Cell::new(16, 4)]),
            MapPreset::Flank => (40, 24, Cell::new(4, 12), [Cell::new(12, 4), Cell::new(12, 19)]),
            MapPreset::Compact => (24, 24, Cell::new(4, 4), [Cell::new(4, 14), Cell::new(14, 4)]),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MapPreset::Corner => "corner",
            MapPreset::Flank => "flank",
            MapPreset::Compact => "compact",
        }
    }
}

impl std::str::FromStr for MapPreset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MapPreset::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown map `{s}` (expected corner, flank or compact)"))
    }
}

const MINERAL_OFFSETS: [(i32, i32); 5] = [(-3, -1), (-3, 0), (-3, 1), (-1, -3), (0, -3)];
const GAS_OFFSET: (i32, i32) = (2, -3);

/// Everything needed to build the initial [`GameState`](super::GameState).
///
/// Unit and building constants live on [`UnitKind::stats`](super::UnitKind::stats)
/// and [`BuildingKind::stats`](super::BuildingKind::stats).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GameConfig {
    pub map_width: i32,
    pub map_height: i32,
    pub starting_workers: u32,
    pub starting_base_hp: i32,
    pub starting_minerals: u32,
    pub starting_gas: u32,
    /// Player start first, opponent start second.
    pub start_locations: Vec<Cell>,
    pub expansion_sites: Vec<Cell>,
    pub resource_layout: Vec<ResourceSpec>,
    pub rng_seed: u64,
    pub tick_limit: u64,
    /// Harvest speed per faction in thousandths, `[player, opponent]`.
    pub income_permille: [u32; 2],
}

impl Default for GameConfig {
    fn default() -> Self {
        GameConfig::generate(MapPreset::Corner, 0)
    }
}

impl GameConfig {
    /// Lays out `preset` with mineral and gas amounts drawn from `seed`.
    ///
    /// Site positions are point-symmetric; amounts are drawn independently per
    /// node, so the two sides differ slightly from seed to seed.
    pub fn generate(preset: MapPreset, seed: u64) -> Self {
        let (width, height, start, naturals) = preset.geometry();
        let mirror = |c: Cell| Cell::new(width - 1 - c.x, height - 1 - c.y);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let player_sites = [start, naturals[0], naturals[1]];
        let mut resource_layout = Vec::new();
        for side in 0..2 {
            for site in player_sites {
                let orient = |(dx, dy): (i32, i32)| {
                    let c = Cell::new(site.x + dx, site.y + dy);
                    if side == 0 {
                        c
                    } else {
                        mirror(c)
                    }
                };
                for off in MINERAL_OFFSETS {
                    resource_layout.push(ResourceSpec {
                        cell: orient(off),
                        kind: ResourceKind::Minerals,
                        amount: rng.random_range(700..=1300),
                    });
                }
                resource_layout.push(ResourceSpec {
                    cell: orient(GAS_OFFSET),
                    kind: ResourceKind::Gas,
                    amount: rng.random_range(1500..=2500),
                });
            }
        }

        GameConfig {
            map_width: width,
            map_height: height,
            starting_workers: 6,
            starting_base_hp: 1500,
            starting_minerals: 50,
            starting_gas: 0,
            start_locations: vec![start, mirror(start)],
            expansion_sites: vec![naturals[0], naturals[1], mirror(naturals[0]), mirror(naturals[1])],
            resource_layout,
            rng_seed: seed,
            tick_limit: 20_000,
            income_permille: [1000, 1000],
        }
    }

    pub fn validate(&self) -> Result<(), RtsError> {
        let bad = |msg: String| Err(RtsError::InvalidConfig(msg));
        if self.map_width < 8 || self.map_height < 8 {
            return bad(format!("map must be at least 8x8, got {}x{}", self.map_width, self.map_height));
        }
        if self.start_locations.len() != 2 {
            return bad(format!("expected exactly 2 start locations, got {}", self.start_locations.len()));
        }
        let inside = |c: Cell| c.x >= 0 && c.y >= 0 && c.x < self.map_width && c.y < self.map_height;
        if self.start_locations[0] == self.start_locations[1] {
            return bad("start locations coincide".into());
        }
        for c in self.start_locations.iter().chain(&self.expansion_sites) {
            if !inside(*c) {
                return bad(format!("site ({}, {}) lies outside the map", c.x, c.y));
            }
        }
        for (i, r) in self.resource_layout.iter().enumerate() {
            if r.amount == 0 {
                return bad(format!("resource node {i} has zero amount"));
            }
            if !inside(r.cell) {
                return bad(format!("resource node {i} lies outside the map"));
            }
        }
        if self.starting_base_hp <= 0 {
            return bad("starting_base_hp must be positive".into());
        }
        if self.tick_limit == 0 {
            return bad("tick_limit must be positive".into());
        }
        if self.income_permille.contains(&0) {
            return bad("income_permille must be positive".into());
        }
        Ok(())
    }
}
