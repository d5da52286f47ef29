use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Player index. The search agent is always [`AGENT`]; the scripted opponent is [`OPPONENT`].
pub type PlayerId = usize;
pub const AGENT: PlayerId = 0;
pub const OPPONENT: PlayerId = 1;
pub const NUM_PLAYERS: usize = 2;

pub fn opponent_of(player: PlayerId) -> PlayerId {
    1 - player
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pos {
    pub x: i32,
    pub y: i32,
}

impl Pos {
    pub const fn new(x: i32, y: i32) -> Self {
        Pos { x, y }
    }

    pub fn chebyshev(self, other: Pos) -> i32 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }

    pub fn offset(self, dx: i32, dy: i32) -> Pos {
        Pos::new(self.x + dx, self.y + dy)
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TerrainKind {
    Grassland,
    Plains,
    Hills,
    Mountains,
    Desert,
    Ocean,
}

impl TerrainKind {
    pub const ALL: [TerrainKind; 6] = [
        TerrainKind::Grassland,
        TerrainKind::Plains,
        TerrainKind::Hills,
        TerrainKind::Mountains,
        TerrainKind::Desert,
        TerrainKind::Ocean,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TerrainKind::Grassland => "grassland",
            TerrainKind::Plains => "plains",
            TerrainKind::Hills => "hills",
            TerrainKind::Mountains => "mountains",
            TerrainKind::Desert => "desert",
            TerrainKind::Ocean => "ocean",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|t| t.name() == s)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_land(self) -> bool {
        self != TerrainKind::Ocean
    }

    /// Base (food, shield, trade) of an unimproved tile.
    pub fn base_yield(self) -> Yield {
        match self {
            TerrainKind::Grassland => Yield::new(2, 0, 0),
            TerrainKind::Plains => Yield::new(1, 1, 0),
            TerrainKind::Hills => Yield::new(1, 2, 0),
            TerrainKind::Mountains => Yield::new(0, 1, 0),
            TerrainKind::Desert => Yield::new(0, 1, 0),
            TerrainKind::Ocean => Yield::new(1, 0, 2),
        }
    }

    pub fn irrigable(self) -> bool {
        matches!(
            self,
            TerrainKind::Grassland | TerrainKind::Plains | TerrainKind::Desert
        )
    }

    pub fn mineable(self) -> bool {
        matches!(self, TerrainKind::Hills | TerrainKind::Mountains)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Resource {
    Wheat,
    Coal,
}

impl Resource {
    pub fn name(self) -> &'static str {
        match self {
            Resource::Wheat => "wheat",
            Resource::Coal => "coal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Improvement {
    None,
    Irrigation,
    Mine,
    Road,
    City,
}

impl Improvement {
    pub fn name(self) -> &'static str {
        match self {
            Improvement::None => "none",
            Improvement::Irrigation => "irrigation",
            Improvement::Mine => "mine",
            Improvement::Road => "road",
            Improvement::City => "city",
        }
    }

    /// Counted towards the score when inside own territory.
    pub fn is_worked_improvement(self) -> bool {
        matches!(
            self,
            Improvement::Irrigation | Improvement::Mine | Improvement::Road
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Yield {
    pub food: i32,
    pub shield: i32,
    pub trade: i32,
}

impl Yield {
    pub const fn new(food: i32, shield: i32, trade: i32) -> Self {
        Yield {
            food,
            shield,
            trade,
        }
    }
}

impl std::ops::AddAssign for Yield {
    fn add_assign(&mut self, rhs: Yield) {
        self.food += rhs.food;
        self.shield += rhs.shield;
        self.trade += rhs.trade;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Terrain {
    pub kind: TerrainKind,
    pub has_river: bool,
    pub resource: Option<Resource>,
    pub improvement: Improvement,
}

impl Terrain {
    pub fn new(kind: TerrainKind) -> Self {
        Terrain {
            kind,
            has_river: false,
            resource: None,
            improvement: Improvement::None,
        }
    }

    /// Yield of the tile when worked by a city.
    pub fn tile_yield(&self) -> Yield {
        let mut y = self.kind.base_yield();
        match self.resource {
            Some(Resource::Wheat) => y.food += 2,
            Some(Resource::Coal) => y.shield += 2,
            None => {}
        }
        if self.has_river {
            y.trade += 1;
        }
        match self.improvement {
            Improvement::Irrigation => y.food += 1,
            Improvement::Mine => y.shield += 2,
            Improvement::Road
                if matches!(
                    self.kind,
                    TerrainKind::Grassland | TerrainKind::Plains | TerrainKind::Desert
                ) =>
            {
                y.trade += 1
            }
            Improvement::City => {
                y.food += 1;
                y.shield = y.shield.max(1);
            }
            _ => {}
        }
        y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnitKind {
    Settler,
    Worker,
    Warrior,
}

impl UnitKind {
    pub const ALL: [UnitKind; 3] = [UnitKind::Settler, UnitKind::Worker, UnitKind::Warrior];

    pub fn name(self) -> &'static str {
        match self {
            UnitKind::Settler => "settler",
            UnitKind::Worker => "worker",
            UnitKind::Warrior => "warrior",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|k| k.name() == s)
    }

    /// Shield cost to produce in a city.
    pub fn cost(self) -> i32 {
        match self {
            UnitKind::Settler => 20,
            UnitKind::Worker => 12,
            UnitKind::Warrior => 8,
        }
    }
}

pub const MAX_HP: i32 = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unit {
    pub id: u32,
    pub owner: PlayerId,
    pub kind: UnitKind,
    pub pos: Pos,
    pub hp: i32,
    pub moves_left: i32,
    pub fortified: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Production {
    Settler,
    Worker,
    Warrior,
    Nothing,
}

impl Production {
    pub fn name(self) -> &'static str {
        match self {
            Production::Settler => "settler",
            Production::Worker => "worker",
            Production::Warrior => "warrior",
            Production::Nothing => "none",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [
            Production::Settler,
            Production::Worker,
            Production::Warrior,
            Production::Nothing,
        ]
        .into_iter()
        .find(|p| p.name() == s)
    }

    pub fn unit_kind(self) -> Option<UnitKind> {
        match self {
            Production::Settler => Some(UnitKind::Settler),
            Production::Worker => Some(UnitKind::Worker),
            Production::Warrior => Some(UnitKind::Warrior),
            Production::Nothing => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct City {
    pub id: u32,
    pub owner: PlayerId,
    pub pos: Pos,
    pub population: i32,
    pub food_store: i32,
    pub shield_store: i32,
    pub producing: Production,
}

/// Every verb a unit or city can be ordered to perform. The declaration order is the
/// action ordinal used for tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Verb {
    MoveN,
    MoveS,
    MoveE,
    MoveW,
    BuildCity,
    Irrigate,
    Mine,
    BuildRoad,
    Fortify,
    Attack,
    Skip,
    ProduceSettler,
    ProduceWorker,
    ProduceWarrior,
    ProduceNone,
}

impl Verb {
    pub const COUNT: usize = 15;
    pub const ALL: [Verb; Verb::COUNT] = [
        Verb::MoveN,
        Verb::MoveS,
        Verb::MoveE,
        Verb::MoveW,
        Verb::BuildCity,
        Verb::Irrigate,
        Verb::Mine,
        Verb::BuildRoad,
        Verb::Fortify,
        Verb::Attack,
        Verb::Skip,
        Verb::ProduceSettler,
        Verb::ProduceWorker,
        Verb::ProduceWarrior,
        Verb::ProduceNone,
    ];
    pub const UNIT_VERBS: [Verb; 11] = [
        Verb::MoveN,
        Verb::MoveS,
        Verb::MoveE,
        Verb::MoveW,
        Verb::BuildCity,
        Verb::Irrigate,
        Verb::Mine,
        Verb::BuildRoad,
        Verb::Fortify,
        Verb::Attack,
        Verb::Skip,
    ];
    pub const CITY_VERBS: [Verb; 4] = [
        Verb::ProduceSettler,
        Verb::ProduceWorker,
        Verb::ProduceWarrior,
        Verb::ProduceNone,
    ];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Verb::MoveN => "move_n",
            Verb::MoveS => "move_s",
            Verb::MoveE => "move_e",
            Verb::MoveW => "move_w",
            Verb::BuildCity => "build_city",
            Verb::Irrigate => "irrigate",
            Verb::Mine => "mine",
            Verb::BuildRoad => "build_road",
            Verb::Fortify => "fortify",
            Verb::Attack => "attack",
            Verb::Skip => "skip",
            Verb::ProduceSettler => "produce_settler",
            Verb::ProduceWorker => "produce_worker",
            Verb::ProduceWarrior => "produce_warrior",
            Verb::ProduceNone => "produce_none",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|v| v.name() == s)
    }

    pub fn direction(self) -> Option<(i32, i32)> {
        match self {
            Verb::MoveN => Some((0, -1)),
            Verb::MoveS => Some((0, 1)),
            Verb::MoveE => Some((1, 0)),
            Verb::MoveW => Some((-1, 0)),
            _ => None,
        }
    }

    pub fn production(self) -> Option<Production> {
        match self {
            Verb::ProduceSettler => Some(Production::Settler),
            Verb::ProduceWorker => Some(Production::Worker),
            Verb::ProduceWarrior => Some(Production::Warrior),
            Verb::ProduceNone => Some(Production::Nothing),
            _ => None,
        }
    }

    pub fn is_city_verb(self) -> bool {
        self.production().is_some()
    }
}

/// The entity an order is addressed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Actor {
    Unit(u32),
    City(u32),
}

impl fmt::Display for Actor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Actor::Unit(id) => write!(f, "unit#{id}"),
            Actor::City(id) => write!(f, "city#{id}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UnitAction {
    pub actor: Actor,
    pub verb: Verb,
}

impl UnitAction {
    pub fn unit(id: u32, verb: Verb) -> Self {
        UnitAction {
            actor: Actor::Unit(id),
            verb,
        }
    }

    pub fn city(id: u32, verb: Verb) -> Self {
        UnitAction {
            actor: Actor::City(id),
            verb,
        }
    }
}

/// One order per controllable unit and city of the acting player.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct JointAction {
    pub entries: Vec<UnitAction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Ongoing,
    Won(PlayerId),
    TurnLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameConfig {
    pub width: i32,
    pub height: i32,
    pub turn_limit: u32,
    /// Target share of land tiles for map generation.
    pub land_fraction: f64,
}

impl Default for GameConfig {
    fn default() -> Self {
        GameConfig {
            width: 10,
            height: 10,
            turn_limit: 30,
            land_fraction: 0.8,
        }
    }
}

/// Generator state carried inside the game so that combat is reproducible and survives
/// snapshot/restore.
#[derive(Clone, Debug)]
pub struct GameRng {
    pub(crate) inner: ChaCha8Rng,
}

impl GameRng {
    pub fn from_seed(seed: u64) -> Self {
        GameRng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub(crate) fn from_parts(seed: [u8; 32], word_pos: u128) -> Self {
        let mut inner = ChaCha8Rng::from_seed(seed);
        inner.set_word_pos(word_pos);
        GameRng { inner }
    }

    pub(crate) fn parts(&self) -> ([u8; 32], u128) {
        (self.inner.get_seed(), self.inner.get_word_pos())
    }
}

impl PartialEq for GameRng {
    fn eq(&self, other: &Self) -> bool {
        self.parts() == other.parts()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameState {
    pub rng: GameRng,
    pub width: i32,
    pub height: i32,
    pub turn_limit: u32,
    pub grid: Vec<Terrain>,
    pub units: Vec<Unit>,
    pub cities: Vec<City>,
    pub gold: [i64; NUM_PLAYERS],
    pub turn: u32,
    pub current_player: PlayerId,
    pub next_unit_id: u32,
    pub next_city_id: u32,
}
