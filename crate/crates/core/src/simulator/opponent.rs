//! Fixed greedy script for the non-agent player.
//!
//! Settlers walk to the nearest grassland where a city may be founded and found it;
//! workers improve tiles next to their cities; warriors attack an adjacent weaker unit
//! and otherwise fortify. Cities build a warrior while undefended, settlers once they
//! have grown, and warriors otherwise.

use std::collections::VecDeque;

use super::rules::{apply_order, attack, can_enter, defender_at, unit_verb_legal};
use super::types::*;

const MOVES: [Verb; 4] = [Verb::MoveN, Verb::MoveS, Verb::MoveE, Verb::MoveW];

pub(crate) fn play_turn(state: &mut GameState, player: PlayerId) {
    let mut ids: Vec<u32> = state.units_of(player).map(|u| u.id).collect();
    ids.sort_unstable();
    for id in ids {
        let Some(unit) = state.unit(id).cloned() else {
            continue;
        };
        match unit.kind {
            UnitKind::Warrior => warrior_turn(state, &unit),
            UnitKind::Settler => settler_turn(state, &unit),
            UnitKind::Worker => worker_turn(state, &unit),
        }
    }
    let city_ids: Vec<u32> = state.cities_of(player).map(|c| c.id).collect();
    for id in city_ids {
        let c = state.city(id).unwrap();
        let defended = state
            .units_at(c.pos)
            .any(|u| u.owner == player && u.kind == UnitKind::Warrior);
        let verb = if !defended {
            Verb::ProduceWarrior
        } else if c.population >= 2 {
            Verb::ProduceSettler
        } else {
            Verb::ProduceWarrior
        };
        apply_order(state, player, UnitAction::city(id, verb));
    }
}

fn warrior_turn(state: &mut GameState, unit: &Unit) {
    let target = state.neighbors(unit.pos).find(|p| {
        defender_at(state, *p, unit.owner)
            .is_some_and(|d| d.kind != UnitKind::Warrior || d.hp < unit.hp)
    });
    if let Some(p) = target {
        attack(state, unit.id, p);
    } else if unit_verb_legal(state, unit.id, Verb::Fortify) {
        apply_order(state, unit.owner, UnitAction::unit(unit.id, Verb::Fortify));
    }
}

fn city_site(state: &GameState, p: Pos) -> bool {
    state.tile(p).kind == TerrainKind::Grassland && !state.city_within(p, 1)
}

fn settler_turn(state: &mut GameState, unit: &Unit) {
    let build = UnitAction::unit(unit.id, Verb::BuildCity);
    if city_site(state, unit.pos) {
        apply_order(state, unit.owner, build);
        return;
    }
    if let Some(v) = first_step_towards(state, unit, |s, p| city_site(s, p)) {
        apply_order(state, unit.owner, UnitAction::unit(unit.id, v));
    } else if unit_verb_legal(state, unit.id, Verb::BuildCity) {
        apply_order(state, unit.owner, build);
    }
}

fn worker_turn(state: &mut GameState, unit: &Unit) {
    let owner = unit.owner;
    let near_own_city = |s: &GameState, p: Pos| {
        s.cities_of(owner).any(|c| c.pos != p && c.pos.chebyshev(p) <= 1)
    };
    if near_own_city(state, unit.pos) {
        for v in [Verb::Irrigate, Verb::Mine] {
            if unit_verb_legal(state, unit.id, v) {
                apply_order(state, owner, UnitAction::unit(unit.id, v));
                return;
            }
        }
    }
    let goal = |s: &GameState, p: Pos| {
        let t = s.tile(p);
        near_own_city(s, p)
            && t.improvement == Improvement::None
            && (t.kind.irrigable() || t.kind.mineable())
    };
    if let Some(v) = first_step_towards(state, unit, goal) {
        apply_order(state, owner, UnitAction::unit(unit.id, v));
    }
}

/// Breadth-first search over enterable land; returns the first move of a shortest path
/// to the nearest tile satisfying `goal`, exploring moves in N, S, E, W order.
fn first_step_towards(
    state: &GameState,
    unit: &Unit,
    goal: impl Fn(&GameState, Pos) -> bool,
) -> Option<Verb> {
    let w = state.width as usize;
    let mut first: Vec<Option<Verb>> = vec![None; w * state.height as usize];
    let mut seen = vec![false; first.len()];
    let idx = |p: Pos| p.y as usize * w + p.x as usize;
    let mut queue = VecDeque::new();
    seen[idx(unit.pos)] = true;
    queue.push_back(unit.pos);
    while let Some(p) = queue.pop_front() {
        if p != unit.pos && goal(state, p) {
            return first[idx(p)];
        }
        for v in MOVES {
            let (dx, dy) = v.direction().unwrap();
            let q = p.offset(dx, dy);
            if !can_enter(state, unit.owner, q) || seen[idx(q)] {
                continue;
            }
            seen[idx(q)] = true;
            first[idx(q)] = if p == unit.pos { Some(v) } else { first[idx(p)] };
            queue.push_back(q);
        }
    }
    None
}
