use rand::Rng;

use super::opponent;
use super::types::*;
use super::SimError;

pub const UNIT_CAP: usize = 10;
pub(crate) const FOOD_PER_POP: i32 = 2;
const DAMAGE_ON_WIN: i32 = 3;

/// Result of one full round.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub state: GameState,
    pub terminal: bool,
}

pub(crate) fn growth_threshold(pop: i32) -> i32 {
    8 + 4 * pop
}

/// Legal orders for one of the current player's units, in verb ordinal order.
pub fn legal_unit_actions(state: &GameState, unit_id: u32) -> Result<Vec<UnitAction>, SimError> {
    legal_actions(state, Actor::Unit(unit_id))
}

/// Legal orders for a unit or city of the current player, in verb ordinal order.
pub fn legal_actions(state: &GameState, actor: Actor) -> Result<Vec<UnitAction>, SimError> {
    let owner = actor_owner(state, actor)?;
    if owner != state.current_player {
        return Err(SimError::NotControllable(actor, state.current_player));
    }
    let verbs: Vec<Verb> = match actor {
        Actor::Unit(id) => Verb::UNIT_VERBS
            .iter()
            .copied()
            .filter(|&v| unit_verb_legal(state, id, v))
            .collect(),
        Actor::City(_) => Verb::CITY_VERBS.to_vec(),
    };
    Ok(verbs
        .into_iter()
        .map(|verb| UnitAction { actor, verb })
        .collect())
}

fn actor_owner(state: &GameState, actor: Actor) -> Result<PlayerId, SimError> {
    match actor {
        Actor::Unit(id) => state.unit(id).map(|u| u.owner),
        Actor::City(id) => state.city(id).map(|c| c.owner),
    }
    .ok_or(SimError::UnknownActor(actor))
}

pub(crate) fn can_enter(state: &GameState, owner: PlayerId, p: Pos) -> bool {
    state.in_bounds(p) && state.tile(p).kind.is_land() && !state.has_enemy_at(p, owner)
}

pub(crate) fn unit_verb_legal(state: &GameState, id: u32, verb: Verb) -> bool {
    let Some(u) = state.unit(id) else {
        return false;
    };
    let tile = state.tile(u.pos);
    let is_builder = matches!(u.kind, UnitKind::Settler | UnitKind::Worker);
    match verb {
        Verb::MoveN | Verb::MoveS | Verb::MoveE | Verb::MoveW => {
            let (dx, dy) = verb.direction().unwrap();
            can_enter(state, u.owner, u.pos.offset(dx, dy))
        }
        Verb::BuildCity => u.kind == UnitKind::Settler && !state.city_within(u.pos, 1),
        Verb::Irrigate => {
            is_builder && tile.kind.irrigable() && tile.improvement == Improvement::None
        }
        Verb::Mine => is_builder && tile.kind.mineable() && tile.improvement == Improvement::None,
        Verb::BuildRoad => is_builder && tile.improvement == Improvement::None,
        Verb::Fortify => u.kind == UnitKind::Warrior && !u.fortified,
        Verb::Attack => {
            u.kind == UnitKind::Warrior && state.neighbors(u.pos).any(|p| state.has_enemy_at(p, u.owner))
        }
        Verb::Skip => true,
        _ => false,
    }
}

/// Applies the current player's joint action, the opponent's scripted turn and the
/// end-of-round city tick. Rejects the whole action (state unchanged) if any entry is
/// illegal.
pub fn step(state: &GameState, action: &JointAction) -> Result<StepResult, SimError> {
    if state.is_terminal() {
        return Ok(StepResult {
            state: state.clone(),
            terminal: true,
        });
    }
    let player = state.current_player;
    validate(state, player, action)?;

    let mut next = state.clone();
    for entry in &action.entries {
        apply_order(&mut next, player, *entry);
    }
    let opp = opponent_of(player);
    if !next.is_eliminated(opp) {
        opponent::play_turn(&mut next, opp);
    }
    end_of_round(&mut next);
    let terminal = next.is_terminal();
    Ok(StepResult {
        state: next,
        terminal,
    })
}

fn validate(state: &GameState, player: PlayerId, action: &JointAction) -> Result<(), SimError> {
    let mut seen = Vec::with_capacity(action.entries.len());
    for e in &action.entries {
        let owner = actor_owner(state, e.actor)?;
        if owner != player {
            return Err(SimError::NotControllable(e.actor, player));
        }
        if seen.contains(&e.actor) {
            return Err(SimError::DuplicateOrder(e.actor));
        }
        seen.push(e.actor);
        let legal = match e.actor {
            Actor::Unit(id) => unit_verb_legal(state, id, e.verb),
            Actor::City(_) => e.verb.is_city_verb(),
        };
        if !legal {
            return Err(SimError::IllegalAction {
                actor: e.actor,
                verb: e.verb.name(),
            });
        }
    }
    for a in state.actors_of(player) {
        if !seen.contains(&a) {
            return Err(SimError::MissingOrder(a));
        }
    }
    Ok(())
}

/// Executes one order. Orders invalidated by earlier orders of the same turn (a second
/// settler founding next to a new city, for instance) degrade to skip.
pub(crate) fn apply_order(state: &mut GameState, player: PlayerId, order: UnitAction) {
    match order.actor {
        Actor::City(id) => {
            if let Some(c) = state.cities.iter_mut().find(|c| c.id == id && c.owner == player) {
                if let Some(p) = order.verb.production() {
                    c.producing = p;
                }
            }
        }
        Actor::Unit(id) => {
            if !unit_verb_legal(state, id, order.verb) {
                return;
            }
            apply_unit_verb(state, id, order.verb);
        }
    }
}

fn apply_unit_verb(state: &mut GameState, id: u32, verb: Verb) {
    let ui = state.units.iter().position(|u| u.id == id).unwrap();
    let pos = state.units[ui].pos;
    match verb {
        Verb::MoveN | Verb::MoveS | Verb::MoveE | Verb::MoveW => {
            let (dx, dy) = verb.direction().unwrap();
            let u = &mut state.units[ui];
            u.pos = pos.offset(dx, dy);
            u.fortified = false;
        }
        Verb::BuildCity => {
            let owner = state.units[ui].owner;
            state.units.remove(ui);
            let id = state.next_city_id;
            state.next_city_id += 1;
            state.tile_mut(pos).improvement = Improvement::City;
            state.cities.push(City {
                id,
                owner,
                pos,
                population: 1,
                food_store: 0,
                shield_store: 0,
                producing: Production::Warrior,
            });
        }
        Verb::Irrigate => state.tile_mut(pos).improvement = Improvement::Irrigation,
        Verb::Mine => state.tile_mut(pos).improvement = Improvement::Mine,
        Verb::BuildRoad => state.tile_mut(pos).improvement = Improvement::Road,
        Verb::Fortify => state.units[ui].fortified = true,
        Verb::Attack => {
            if let Some(target) = choose_attack_target(state, id) {
                attack(state, id, target);
            }
        }
        _ => {}
    }
    if let Some(u) = state.units.iter_mut().find(|u| u.id == id) {
        u.moves_left = 0;
    }
}

/// The unit that would defend a tile: warriors before others, fortified before not,
/// then by hp and id.
pub(crate) fn defender_at(state: &GameState, p: Pos, attacker_owner: PlayerId) -> Option<&Unit> {
    state
        .units_at(p)
        .filter(|u| u.owner != attacker_owner)
        .min_by_key(|u| {
            (
                u.kind != UnitKind::Warrior,
                !u.fortified,
                -u.hp,
                u.id,
            )
        })
}

/// Probability that an attack on `p` by `attacker_owner` succeeds; 1.0 for an empty
/// enemy city.
pub(crate) fn attack_win_probability(state: &GameState, p: Pos, attacker_owner: PlayerId) -> f64 {
    match defender_at(state, p, attacker_owner) {
        None => 1.0,
        Some(d) => {
            let mut prob = 0.5;
            if !d.fortified {
                prob += 0.25;
            }
            if state.city_at(p).is_some() {
                prob -= 0.25;
            }
            prob
        }
    }
}

pub(crate) fn choose_attack_target(state: &GameState, attacker: u32) -> Option<Pos> {
    let u = state.unit(attacker)?;
    let mut best: Option<(f64, Pos)> = None;
    for p in state.neighbors(u.pos) {
        if !state.has_enemy_at(p, u.owner) {
            continue;
        }
        let prob = attack_win_probability(state, p, u.owner);
        if best.map_or(true, |(b, _)| prob > b) {
            best = Some((prob, p));
        }
    }
    best.map(|(_, p)| p)
}

/// Resolves an attack. An undefended enemy city is captured outright (destroyed if its
/// population is 1). Otherwise one combat is rolled: the loser dies; outside cities the
/// whole defending stack dies with its defender.
pub(crate) fn attack(state: &mut GameState, attacker: u32, target: Pos) {
    let Some(att) = state.unit(attacker).cloned() else {
        return;
    };
    if let Some(u) = state.units.iter_mut().find(|u| u.id == attacker) {
        u.fortified = false;
    }
    let Some(def) = defender_at(state, target, att.owner).cloned() else {
        capture_city(state, attacker, target);
        return;
    };
    let prob = attack_win_probability(state, target, att.owner);
    let roll: f64 = state.rng.inner.gen();
    if roll < prob {
        if state.city_at(target).is_some() {
            state.units.retain(|u| u.id != def.id);
        } else {
            state
                .units
                .retain(|u| !(u.pos == target && u.owner != att.owner));
        }
        if let Some(u) = state.units.iter_mut().find(|u| u.id == attacker) {
            u.hp = (u.hp - DAMAGE_ON_WIN).max(1);
        }
    } else {
        state.units.retain(|u| u.id != attacker);
        if let Some(u) = state.units.iter_mut().find(|u| u.id == def.id) {
            u.hp = (u.hp - DAMAGE_ON_WIN).max(1);
        }
    }
}

fn capture_city(state: &mut GameState, attacker: u32, target: Pos) {
    let Some(ci) = state.cities.iter().position(|c| c.pos == target) else {
        return;
    };
    let new_owner = state.unit(attacker).map(|u| u.owner).unwrap();
    if state.cities[ci].population <= 1 {
        state.cities.remove(ci);
        state.tile_mut(target).improvement = Improvement::None;
    } else {
        let c = &mut state.cities[ci];
        c.population -= 1;
        c.owner = new_owner;
        c.producing = Production::Warrior;
        c.food_store = 0;
        c.shield_store = 0;
    }
    if let Some(u) = state.units.iter_mut().find(|u| u.id == attacker) {
        u.pos = target;
    }
}

/// Tiles a city works this round: its own tile plus its best `population` neighbors.
pub(crate) fn worked_yield(state: &GameState, city: &City) -> Yield {
    let mut total = state.tile(city.pos).tile_yield();
    let mut candidates: Vec<(i32, Pos, Yield)> = state
        .neighbors(city.pos)
        .filter(|p| state.city_at(*p).is_none() && !state.has_enemy_at(*p, city.owner))
        .map(|p| {
            let y = state.tile(p).tile_yield();
            (y.food * 3 + y.shield * 2 + y.trade, p, y)
        })
        .collect();
    candidates.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for (_, _, y) in candidates.into_iter().take(city.population as usize) {
        total += y;
    }
    total
}

fn end_of_round(state: &mut GameState) {
    let city_ids: Vec<u32> = state.cities.iter().map(|c| c.id).collect();
    for id in city_ids {
        let Some(ci) = state.cities.iter().position(|c| c.id == id) else {
            continue;
        };
        let y = worked_yield(state, &state.cities[ci]);
        let owner = state.cities[ci].owner;
        let unit_count = state.units_of(owner).count();
        state.gold[owner] += y.trade as i64;
        let mut spawn = None;
        {
            let c = &mut state.cities[ci];
            c.food_store += y.food - FOOD_PER_POP * c.population;
            if c.food_store < 0 {
                if c.population > 1 {
                    c.population -= 1;
                }
                c.food_store = 0;
            } else if c.food_store >= growth_threshold(c.population) {
                c.population += 1;
                c.food_store = 0;
            }
            c.shield_store += y.shield;
            if let Some(kind) = c.producing.unit_kind() {
                let can_pay_pop = kind != UnitKind::Settler || c.population >= 2;
                if c.shield_store >= kind.cost() && can_pay_pop && unit_count < UNIT_CAP {
                    c.shield_store -= kind.cost();
                    if kind == UnitKind::Settler {
                        c.population -= 1;
                    }
                    spawn = Some((kind, c.pos, c.owner));
                }
            }
        }
        if let Some((kind, pos, owner)) = spawn {
            let id = state.next_unit_id;
            state.next_unit_id += 1;
            state.units.push(Unit {
                id,
                owner,
                kind,
                pos,
                hp: MAX_HP,
                moves_left: 1,
                fortified: false,
            });
        }
    }
    let city_pos: Vec<(Pos, PlayerId)> = state.cities.iter().map(|c| (c.pos, c.owner)).collect();
    for u in state.units.iter_mut() {
        let in_own_city = city_pos.iter().any(|&(p, o)| p == u.pos && o == u.owner);
        if u.fortified || in_own_city {
            u.hp = (u.hp + 1).min(MAX_HP);
        }
        u.moves_left = 1;
    }
    state.turn += 1;
}

/// 10 per city, 2 per population point, 1 per unit and 1 per improved tile inside own
/// territory (tiles within distance 1 of an own city).
pub fn score(state: &GameState, player: PlayerId) -> f64 {
    let cities: Vec<&City> = state.cities_of(player).collect();
    let pop: i32 = cities.iter().map(|c| c.population).sum();
    let units = state.units_of(player).count();
    let improved = state
        .positions()
        .filter(|p| {
            state.tile(*p).improvement.is_worked_improvement()
                && cities.iter().any(|c| c.pos.chebyshev(*p) <= 1)
        })
        .count();
    (10 * cities.len() + 2 * pop as usize + units + improved) as f64
}

/// Score ratio against the opponent, denominator clamped at 1.
pub fn utility(state: &GameState, player: PlayerId) -> f64 {
    score(state, player) / score(state, opponent_of(player)).max(1.0)
}
