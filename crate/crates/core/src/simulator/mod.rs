//! Deterministic micro turn-based strategy game.
//!
//! The game is a two-player MDP: the search agent ([`AGENT`]) issues a [`JointAction`]
//! with one order per unit and city, after which the scripted opponent plays its turn and
//! every city grows and produces. All randomness (combat) is drawn from the generator
//! stored in [`GameState`], so a state plus an action sequence fully determines the
//! trajectory.

mod mapgen;
mod opponent;
mod rules;
mod serial;
mod types;

use thiserror::Error;

pub(crate) use rules::{growth_threshold, worked_yield, FOOD_PER_POP};
pub use rules::{legal_actions, legal_unit_actions, score, step, utility, StepResult};
pub use serial::{dump_state, parse_state, restore, snapshot, Snapshot};
pub use types::*;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unknown {0}")]
    UnknownActor(Actor),
    #[error("{0} is not controlled by player {1}")]
    NotControllable(Actor, PlayerId),
    #[error("illegal order {verb} for {actor}")]
    IllegalAction { actor: Actor, verb: &'static str },
    #[error("joint action is missing an order for {0}")]
    MissingOrder(Actor),
    #[error("joint action has two orders for {0}")]
    DuplicateOrder(Actor),
    #[error("restore error: {0}")]
    Restore(String),
}

impl SimError {
    /// The actor an illegal joint action was rejected for, if any.
    pub fn offending_actor(&self) -> Option<Actor> {
        match self {
            SimError::UnknownActor(a)
            | SimError::NotControllable(a, _)
            | SimError::IllegalAction { actor: a, .. }
            | SimError::MissingOrder(a)
            | SimError::DuplicateOrder(a) => Some(*a),
            _ => None,
        }
    }
}

pub fn new_game(seed: u64, config: &GameConfig) -> Result<GameState, SimError> {
    mapgen::generate(seed, config)
}

impl GameState {
    pub fn in_bounds(&self, p: Pos) -> bool {
        p.x >= 0 && p.y >= 0 && p.x < self.width && p.y < self.height
    }

    fn idx(&self, p: Pos) -> usize {
        (p.y * self.width + p.x) as usize
    }

    pub fn tile(&self, p: Pos) -> &Terrain {
        &self.grid[self.idx(p)]
    }

    pub fn tile_mut(&mut self, p: Pos) -> &mut Terrain {
        let i = self.idx(p);
        &mut self.grid[i]
    }

    pub fn positions(&self) -> impl Iterator<Item = Pos> + '_ {
        (0..self.height).flat_map(move |y| (0..self.width).map(move |x| Pos::new(x, y)))
    }

    /// In-bounds tiles at Chebyshev distance exactly 1, in row-major scan order.
    pub fn neighbors(&self, p: Pos) -> impl Iterator<Item = Pos> + '_ {
        (-1..=1)
            .flat_map(move |dy| (-1..=1).map(move |dx| (dx, dy)))
            .filter(|&(dx, dy)| dx != 0 || dy != 0)
            .map(move |(dx, dy)| p.offset(dx, dy))
            .filter(move |q| self.in_bounds(*q))
    }

    pub fn unit(&self, id: u32) -> Option<&Unit> {
        self.units.iter().find(|u| u.id == id)
    }

    pub fn city(&self, id: u32) -> Option<&City> {
        self.cities.iter().find(|c| c.id == id)
    }

    pub fn city_at(&self, p: Pos) -> Option<&City> {
        self.cities.iter().find(|c| c.pos == p)
    }

    pub fn units_at(&self, p: Pos) -> impl Iterator<Item = &Unit> {
        self.units.iter().filter(move |u| u.pos == p)
    }

    pub fn units_of(&self, player: PlayerId) -> impl Iterator<Item = &Unit> {
        self.units.iter().filter(move |u| u.owner == player)
    }

    pub fn cities_of(&self, player: PlayerId) -> impl Iterator<Item = &City> {
        self.cities.iter().filter(move |c| c.owner == player)
    }

    pub fn city_within(&self, p: Pos, dist: i32) -> bool {
        self.cities.iter().any(|c| c.pos.chebyshev(p) <= dist)
    }

    pub fn has_enemy_at(&self, p: Pos, player: PlayerId) -> bool {
        self.units_at(p).any(|u| u.owner != player)
            || self.city_at(p).is_some_and(|c| c.owner != player)
    }

    /// Every unit and city the player controls, units first, each in id order.
    pub fn actors_of(&self, player: PlayerId) -> Vec<Actor> {
        let mut units: Vec<u32> = self.units_of(player).map(|u| u.id).collect();
        units.sort_unstable();
        let mut cities: Vec<u32> = self.cities_of(player).map(|c| c.id).collect();
        cities.sort_unstable();
        units
            .into_iter()
            .map(Actor::Unit)
            .chain(cities.into_iter().map(Actor::City))
            .collect()
    }

    pub fn is_eliminated(&self, player: PlayerId) -> bool {
        self.units_of(player).next().is_none() && self.cities_of(player).next().is_none()
    }

    pub fn outcome(&self) -> Outcome {
        for p in [AGENT, OPPONENT] {
            if self.is_eliminated(p) {
                return Outcome::Won(opponent_of(p));
            }
        }
        if self.turn >= self.turn_limit {
            Outcome::TurnLimit
        } else {
            Outcome::Ongoing
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.outcome() != Outcome::Ongoing
    }

    /// Re-seed the combat generator; roll-outs use this to draw independent futures.
    pub fn reseed(&mut self, seed: u64) {
        self.rng = GameRng::from_seed(seed);
    }

    /// Checks every type invariant; returns a description of the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        for p in self.positions() {
            let t = self.tile(p);
            if t.kind == TerrainKind::Ocean
                && (t.has_river || t.resource.is_some() || t.improvement != Improvement::None)
            {
                return Err(format!("ocean tile {p} carries land features"));
            }
            let has_city = self.city_at(p).is_some();
            if has_city != (t.improvement == Improvement::City) {
                return Err(format!("city marker mismatch at {p}"));
            }
        }
        for u in &self.units {
            if u.hp <= 0 || u.hp > MAX_HP {
                return Err(format!("unit {} has hp {}", u.id, u.hp));
            }
            if !self.in_bounds(u.pos) || !self.tile(u.pos).kind.is_land() {
                return Err(format!("unit {} off land at {}", u.id, u.pos));
            }
            if self.units_at(u.pos).any(|o| o.owner != u.owner) {
                return Err(format!("hostile units share tile {}", u.pos));
            }
            if self.city_at(u.pos).is_some_and(|c| c.owner != u.owner) {
                return Err(format!("unit {} inside enemy city", u.id));
            }
        }
        for (i, c) in self.cities.iter().enumerate() {
            if c.population < 1 || c.food_store < 0 || c.shield_store < 0 {
                return Err(format!("city {} has invalid stores", c.id));
            }
            for d in &self.cities[i + 1..] {
                if d.pos.chebyshev(c.pos) <= 1 {
                    return Err(format!("cities {} and {} too close", c.id, d.id));
                }
            }
        }
        let mut ids: Vec<u32> = self.units.iter().map(|u| u.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.units.len() {
            return Err("duplicate unit ids".into());
        }
        Ok(())
    }
}

impl JointAction {
    /// Orders every actor of `player` to idle (skip for units, keep production for cities).
    pub fn idle(state: &GameState, player: PlayerId) -> JointAction {
        let entries = state
            .actors_of(player)
            .into_iter()
            .map(|a| match a {
                Actor::Unit(id) => UnitAction::unit(id, Verb::Skip),
                Actor::City(id) => {
                    let p = state.city(id).map(|c| c.producing).unwrap_or(Production::Nothing);
                    let verb = match p {
                        Production::Settler => Verb::ProduceSettler,
                        Production::Worker => Verb::ProduceWorker,
                        Production::Warrior => Verb::ProduceWarrior,
                        Production::Nothing => Verb::ProduceNone,
                    };
                    UnitAction::city(id, verb)
                }
            })
            .collect();
        JointAction { entries }
    }
}
