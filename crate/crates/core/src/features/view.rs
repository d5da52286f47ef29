use std::sync::Arc;

use crate::simulator::{
    growth_threshold, worked_yield, Actor, GameState, Improvement, PlayerId, Pos, Production,
    Resource, TerrainKind, UnitKind, Verb, FOOD_PER_POP,
};

/// Kind of the acting unit, or a city.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActorKind {
    Settler,
    Worker,
    Warrior,
    City,
}

impl ActorKind {
    pub const COUNT: usize = 4;
    pub const ALL: [ActorKind; 4] = [
        ActorKind::Settler,
        ActorKind::Worker,
        ActorKind::Warrior,
        ActorKind::City,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ActorKind::Settler => "settler",
            ActorKind::Worker => "worker",
            ActorKind::Warrior => "warrior",
            ActorKind::City => "city",
        }
    }

    pub fn from_unit(kind: UnitKind) -> ActorKind {
        match kind {
            UnitKind::Settler => ActorKind::Settler,
            UnitKind::Worker => ActorKind::Worker,
            UnitKind::Warrior => ActorKind::Warrior,
        }
    }

    /// Seed-vocabulary key of the actor's label.
    pub fn vocab_key(self) -> String {
        format!("unit.{}", self.name())
    }
}

/// Textual game attributes of a tile or a neighborhood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Attr {
    Grassland,
    Plains,
    Hills,
    Mountains,
    Desert,
    Ocean,
    River,
    Wheat,
    Coal,
    Irrigation,
    Mine,
    Road,
    City,
    EnemyUnit,
    EnemyCity,
}

impl Attr {
    pub const COUNT: usize = 15;
    pub const ALL: [Attr; 15] = [
        Attr::Grassland,
        Attr::Plains,
        Attr::Hills,
        Attr::Mountains,
        Attr::Desert,
        Attr::Ocean,
        Attr::River,
        Attr::Wheat,
        Attr::Coal,
        Attr::Irrigation,
        Attr::Mine,
        Attr::Road,
        Attr::City,
        Attr::EnemyUnit,
        Attr::EnemyCity,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Attr::Grassland => "grassland",
            Attr::Plains => "plains",
            Attr::Hills => "hills",
            Attr::Mountains => "mountains",
            Attr::Desert => "desert",
            Attr::Ocean => "ocean",
            Attr::River => "river",
            Attr::Wheat => "wheat",
            Attr::Coal => "coal",
            Attr::Irrigation => "irrigation",
            Attr::Mine => "mine",
            Attr::Road => "road",
            Attr::City => "city",
            Attr::EnemyUnit => "enemy_unit",
            Attr::EnemyCity => "enemy_city",
        }
    }

    pub fn vocab_key(self) -> String {
        format!("attr.{}", self.name())
    }

    fn terrain(kind: TerrainKind) -> Attr {
        Attr::ALL[kind.index()]
    }
}

/// Bit set over [`Attr`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct AttrSet(pub u32);

impl AttrSet {
    pub fn insert(&mut self, a: Attr) {
        self.0 |= 1 << a.index();
    }

    pub fn contains(self, a: Attr) -> bool {
        self.0 & (1 << a.index()) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Members in declaration order.
    pub fn iter(self) -> impl Iterator<Item = Attr> {
        Attr::ALL.into_iter().filter(move |a| self.contains(*a))
    }

    pub fn of(attrs: &[Attr]) -> AttrSet {
        let mut s = AttrSet::default();
        for a in attrs {
            s.insert(*a);
        }
        s
    }
}

/// Numeric game attributes, each scaled to order one.
pub const NUMERIC_NAMES: [&str; 23] = [
    "world_controlled",
    "score",
    "opponent_score",
    "cities",
    "avg_city_size",
    "total_city_size",
    "units",
    "gold",
    "food_surplus",
    "shield_surplus",
    "trade_surplus",
    "moves_left",
    "health",
    "closest_city_dist",
    "avg_city_dist",
    "city_size",
    "turns_to_grow",
    "food_store",
    "shield_store",
    "turns_to_complete",
    "city_food_surplus",
    "city_shield_surplus",
    "city_trade_surplus",
];
pub const NUMERIC_COUNT: usize = NUMERIC_NAMES.len();
const NATION_SLOTS: usize = 11;

/// Flattened game attributes of one candidate (state, actor, action).
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeView {
    pub actor: ActorKind,
    pub verb: Verb,
    /// Attributes of the actor's own tile.
    pub tile: AttrSet,
    /// Attributes present within Chebyshev distance 1, own tile included.
    pub neighborhood: AttrSet,
    pub producing: Option<Production>,
    pub numeric: Arc<[f64; NUMERIC_COUNT]>,
}

impl AttributeView {
    /// A view with no numeric attributes, for tests and fixtures.
    pub fn bare(actor: ActorKind, verb: Verb, tile: AttrSet, neighborhood: AttrSet) -> Self {
        AttributeView {
            actor,
            verb,
            tile,
            neighborhood,
            producing: None,
            numeric: Arc::new([0.0; NUMERIC_COUNT]),
        }
    }

    /// Key of the attributes the relevance features depend on.
    pub fn relevance_key(&self) -> (ActorKind, Verb, AttrSet, AttrSet) {
        (self.actor, self.verb, self.tile, self.neighborhood)
    }
}

/// Per-player numeric summary shared by every actor of that player.
#[derive(Debug, Clone, PartialEq)]
pub struct NationSummary {
    slots: [f64; NATION_SLOTS],
}

impl NationSummary {
    pub fn new(state: &GameState, player: PlayerId) -> NationSummary {
        let cities: Vec<_> = state.cities_of(player).collect();
        let land = state
            .positions()
            .filter(|p| state.tile(*p).kind.is_land())
            .count()
            .max(1);
        let controlled = state
            .positions()
            .filter(|p| {
                state.tile(*p).kind.is_land() && cities.iter().any(|c| c.pos.chebyshev(*p) <= 1)
            })
            .count();
        let total_pop: i32 = cities.iter().map(|c| c.population).sum();
        let (mut food, mut shield, mut trade) = (0, 0, 0);
        for c in &cities {
            let y = worked_yield(state, c);
            food += y.food - FOOD_PER_POP * c.population;
            shield += y.shield;
            trade += y.trade;
        }
        let avg = if cities.is_empty() {
            0.0
        } else {
            total_pop as f64 / cities.len() as f64
        };
        NationSummary {
            slots: [
                controlled as f64 / land as f64,
                crate::simulator::score(state, player) / 100.0,
                crate::simulator::score(state, crate::simulator::opponent_of(player)) / 100.0,
                cities.len() as f64 / 10.0,
                avg / 10.0,
                total_pop as f64 / 10.0,
                state.units_of(player).count() as f64 / 10.0,
                state.gold[player] as f64 / 100.0,
                food as f64 / 10.0,
                shield as f64 / 10.0,
                trade as f64 / 10.0,
            ],
        }
    }
}

/// Everything about one actor that does not depend on the candidate verb.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorContext {
    pub actor: ActorKind,
    pub tile: AttrSet,
    pub neighborhood: AttrSet,
    pub producing: Option<Production>,
    pub numeric: Arc<[f64; NUMERIC_COUNT]>,
}

impl ActorContext {
    pub fn new(
        state: &GameState,
        player: PlayerId,
        nation: &NationSummary,
        actor: Actor,
    ) -> Option<ActorContext> {
        let mut numeric = [0.0; NUMERIC_COUNT];
        numeric[..NATION_SLOTS].copy_from_slice(&nation.slots);
        let (kind, pos, producing) = match actor {
            Actor::Unit(id) => {
                let u = state.unit(id)?;
                numeric[11] = u.moves_left as f64;
                numeric[12] = u.hp as f64 / 10.0;
                (ActorKind::from_unit(u.kind), u.pos, None)
            }
            Actor::City(id) => {
                let c = state.city(id)?;
                let y = worked_yield(state, c);
                let surplus = y.food - FOOD_PER_POP * c.population;
                numeric[15] = c.population as f64 / 10.0;
                if surplus > 0 {
                    let need = (growth_threshold(c.population) - c.food_store).max(0);
                    numeric[16] = ((need + surplus - 1) / surplus) as f64 / 10.0;
                }
                numeric[17] = c.food_store as f64 / 10.0;
                numeric[18] = c.shield_store as f64 / 10.0;
                if let Some(kind) = c.producing.unit_kind() {
                    if y.shield > 0 {
                        let need = (kind.cost() - c.shield_store).max(0);
                        numeric[19] = ((need + y.shield - 1) / y.shield) as f64 / 10.0;
                    }
                }
                numeric[20] = surplus as f64 / 10.0;
                numeric[21] = y.shield as f64 / 10.0;
                numeric[22] = y.trade as f64 / 10.0;
                (ActorKind::City, c.pos, Some(c.producing))
            }
        };
        let dists: Vec<i32> = state
            .cities_of(player)
            .map(|c| c.pos.chebyshev(pos))
            .filter(|d| actor_is_unit(actor) || *d > 0)
            .collect();
        if let Some(min) = dists.iter().min() {
            numeric[13] = *min as f64 / 10.0;
            numeric[14] = dists.iter().sum::<i32>() as f64 / dists.len() as f64 / 10.0;
        }
        Some(ActorContext {
            actor: kind,
            tile: tile_attrs(state, pos),
            neighborhood: neighborhood_attrs(state, pos, player),
            producing,
            numeric: Arc::new(numeric),
        })
    }

    pub fn view(&self, verb: Verb) -> AttributeView {
        AttributeView {
            actor: self.actor,
            verb,
            tile: self.tile,
            neighborhood: self.neighborhood,
            producing: self.producing,
            numeric: Arc::clone(&self.numeric),
        }
    }
}

fn actor_is_unit(a: Actor) -> bool {
    matches!(a, Actor::Unit(_))
}

pub fn tile_attrs(state: &GameState, p: Pos) -> AttrSet {
    let t = state.tile(p);
    let mut s = AttrSet::default();
    s.insert(Attr::terrain(t.kind));
    if t.has_river {
        s.insert(Attr::River);
    }
    match t.resource {
        Some(Resource::Wheat) => s.insert(Attr::Wheat),
        Some(Resource::Coal) => s.insert(Attr::Coal),
        None => {}
    }
    match t.improvement {
        Improvement::Irrigation => s.insert(Attr::Irrigation),
        Improvement::Mine => s.insert(Attr::Mine),
        Improvement::Road => s.insert(Attr::Road),
        Improvement::City => s.insert(Attr::City),
        Improvement::None => {}
    }
    s
}

pub fn neighborhood_attrs(state: &GameState, p: Pos, player: PlayerId) -> AttrSet {
    let mut s = tile_attrs(state, p);
    for q in state.neighbors(p) {
        s.0 |= tile_attrs(state, q).0;
    }
    for q in std::iter::once(p).chain(state.neighbors(p)) {
        if state.units_at(q).any(|u| u.owner != player) {
            s.insert(Attr::EnemyUnit);
        }
        if state.city_at(q).is_some_and(|c| c.owner != player) {
            s.insert(Attr::EnemyCity);
        }
    }
    s
}
