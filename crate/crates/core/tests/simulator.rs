use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use textstrat_core::simulator::*;

/// A default game with every tile turned into plain grassland, no cities, and units
/// placed explicitly by the caller.
fn flat_state(units: &[(PlayerId, UnitKind, Pos)]) -> GameState {
    let mut s = new_game(1, &GameConfig::default()).unwrap();
    for t in s.grid.iter_mut() {
        *t = Terrain::new(TerrainKind::Grassland);
    }
    s.cities.clear();
    s.units = units
        .iter()
        .enumerate()
        .map(|(i, (owner, kind, pos))| Unit {
            id: i as u32,
            owner: *owner,
            kind: *kind,
            pos: *pos,
            hp: MAX_HP,
            moves_left: 1,
            fortified: false,
        })
        .collect();
    s.next_unit_id = units.len() as u32;
    s
}

fn verbs(state: &GameState, id: u32) -> Vec<Verb> {
    legal_unit_actions(state, id)
        .unwrap()
        .into_iter()
        .map(|a| a.verb)
        .collect()
}

fn with_order(state: &GameState, actor: Actor, verb: Verb) -> JointAction {
    let mut j = JointAction::idle(state, AGENT);
    for e in &mut j.entries {
        if e.actor == actor {
            e.verb = verb;
        }
    }
    j
}

fn random_joint(state: &GameState, rng: &mut ChaCha8Rng) -> JointAction {
    JointAction {
        entries: state
            .actors_of(state.current_player)
            .into_iter()
            .map(|a| {
                let legal = legal_actions(state, a).unwrap();
                legal[rng.gen_range(0..legal.len())]
            })
            .collect(),
    }
}

const FAR_OPPONENT: (PlayerId, UnitKind, Pos) = (OPPONENT, UnitKind::Warrior, Pos::new(9, 9));

#[test]
fn new_game_is_deterministic_with_three_units_each() {
    let cfg = GameConfig::default();
    let a = new_game(7, &cfg).unwrap();
    assert_eq!(a, new_game(7, &cfg).unwrap());
    assert_eq!(snapshot(&a), snapshot(&new_game(7, &cfg).unwrap()));
    assert_eq!(a.units.len(), 6);
    assert!(a.cities.is_empty());
    assert_eq!(a.turn, 0);
    for p in [AGENT, OPPONENT] {
        let mut kinds: Vec<UnitKind> = a.units_of(p).map(|u| u.kind).collect();
        kinds.sort();
        assert_eq!(kinds, vec![UnitKind::Settler, UnitKind::Worker, UnitKind::Warrior]);
    }
    let mut tiles: Vec<Pos> = a.units.iter().map(|u| u.pos).collect();
    tiles.sort();
    tiles.dedup();
    assert_eq!(tiles.len(), 6);
    assert!(a.units.iter().all(|u| a.tile(u.pos).kind.is_land()));
}

#[test]
fn invalid_configs_are_rejected() {
    let ocean = GameConfig {
        width: 6,
        height: 6,
        land_fraction: 0.0,
        ..GameConfig::default()
    };
    assert!(matches!(new_game(7, &ocean), Err(SimError::Config(_))));
    let small = GameConfig {
        width: 5,
        ..GameConfig::default()
    };
    assert!(matches!(new_game(7, &small), Err(SimError::Config(_))));
}

#[test]
fn settler_on_open_grassland() {
    let s = flat_state(&[(AGENT, UnitKind::Settler, Pos::new(4, 4)), FAR_OPPONENT]);
    let v = verbs(&s, 0);
    for want in [
        Verb::BuildCity,
        Verb::Irrigate,
        Verb::MoveN,
        Verb::MoveS,
        Verb::MoveE,
        Verb::MoveW,
        Verb::Skip,
    ] {
        assert!(v.contains(&want), "{want:?} missing from {v:?}");
    }
    assert!(!v.contains(&Verb::Attack) && !v.contains(&Verb::Fortify));
}

#[test]
fn ocean_and_edges_block_moves() {
    let mut s = flat_state(&[(AGENT, UnitKind::Warrior, Pos::new(4, 4)), FAR_OPPONENT]);
    s.tile_mut(Pos::new(5, 4)).kind = TerrainKind::Ocean;
    assert!(!verbs(&s, 0).contains(&Verb::MoveE));
    let s = flat_state(&[(AGENT, UnitKind::Warrior, Pos::new(0, 0)), FAR_OPPONENT]);
    let v = verbs(&s, 0);
    assert!(!v.contains(&Verb::MoveN) && !v.contains(&Verb::MoveW));
}

#[test]
fn workers_cannot_attack() {
    let s = flat_state(&[
        (AGENT, UnitKind::Worker, Pos::new(4, 4)),
        (OPPONENT, UnitKind::Warrior, Pos::new(5, 4)),
    ]);
    assert!(!verbs(&s, 0).contains(&Verb::Attack));
    let s = flat_state(&[
        (AGENT, UnitKind::Warrior, Pos::new(4, 4)),
        (OPPONENT, UnitKind::Warrior, Pos::new(5, 4)),
    ]);
    assert!(verbs(&s, 0).contains(&Verb::Attack));
}

#[test]
fn build_city_excluded_next_to_a_city() {
    let mut s = flat_state(&[
        (AGENT, UnitKind::Settler, Pos::new(4, 4)),
        (AGENT, UnitKind::Settler, Pos::new(2, 2)),
        FAR_OPPONENT,
    ]);
    let r = step(&s, &with_order(&s, Actor::Unit(1), Verb::BuildCity)).unwrap();
    s = r.state;
    assert_eq!(s.cities.len(), 1);
    let near = Pos::new(3, 3);
    s.units.iter_mut().find(|u| u.id == 0).unwrap().pos = near;
    assert!(!verbs(&s, 0).contains(&Verb::BuildCity));
}

#[test]
fn irrigation_raises_grassland_food() {
    let s = flat_state(&[(AGENT, UnitKind::Worker, Pos::new(4, 4)), FAR_OPPONENT]);
    let p = Pos::new(4, 4);
    assert_eq!(s.tile(p).tile_yield().food, 2);
    let next = step(&s, &with_order(&s, Actor::Unit(0), Verb::Irrigate)).unwrap().state;
    assert_eq!(next.tile(p).improvement, Improvement::Irrigation);
    assert_eq!(next.tile(p).tile_yield().food, 3);
}

#[test]
fn terrain_yield_constants() {
    let y = |k: TerrainKind, imp: Improvement| {
        let mut t = Terrain::new(k);
        t.improvement = imp;
        t.tile_yield()
    };
    assert_eq!(y(TerrainKind::Plains, Improvement::None).food, 1);
    assert_eq!(y(TerrainKind::Plains, Improvement::Irrigation).food, 2);
    assert_eq!(y(TerrainKind::Hills, Improvement::None), Yield::new(1, 2, 0));
    assert_eq!(y(TerrainKind::Hills, Improvement::Mine).shield, 4);
    assert_eq!(y(TerrainKind::Desert, Improvement::None).food, 0);
    assert_eq!(y(TerrainKind::Desert, Improvement::Irrigation).food, 1);
}

#[test]
fn city_on_river_consumes_settler_and_gains_trade() {
    let mut s = flat_state(&[(AGENT, UnitKind::Settler, Pos::new(4, 4)), FAR_OPPONENT]);
    let p = Pos::new(4, 4);
    let dry = s.tile(p).tile_yield();
    s.tile_mut(p).has_river = true;
    let next = step(&s, &with_order(&s, Actor::Unit(0), Verb::BuildCity)).unwrap().state;
    assert!(next.unit(0).is_none());
    let city = next.city_at(p).unwrap();
    assert_eq!(city.population, 1);
    assert_eq!(next.tile(p).tile_yield().trade, dry.trade + 1);
}

#[test]
fn illegal_entry_is_rejected_with_its_actor() {
    let s = flat_state(&[(AGENT, UnitKind::Worker, Pos::new(4, 4)), FAR_OPPONENT]);
    let before = s.clone();
    let err = step(&s, &with_order(&s, Actor::Unit(0), Verb::BuildCity)).unwrap_err();
    assert_eq!(err.offending_actor(), Some(Actor::Unit(0)));
    assert_eq!(s, before);
    let err = step(&s, &JointAction::default()).unwrap_err();
    assert_eq!(err, SimError::MissingOrder(Actor::Unit(0)));
    let mut dup = JointAction::idle(&s, AGENT);
    dup.entries.push(dup.entries[0]);
    assert_eq!(step(&s, &dup).unwrap_err(), SimError::DuplicateOrder(Actor::Unit(0)));
    assert!(matches!(
        legal_unit_actions(&s, 99),
        Err(SimError::UnknownActor(Actor::Unit(99)))
    ));
}

#[test]
fn score_examples() {
    let s = new_game(3, &GameConfig::default()).unwrap();
    assert_eq!(score(&s, AGENT), 3.0);
    assert_eq!(utility(&s, AGENT), 1.0);

    let mut s = flat_state(&[
        (AGENT, UnitKind::Warrior, Pos::new(2, 2)),
        (AGENT, UnitKind::Worker, Pos::new(3, 3)),
    ]);
    let c = Pos::new(2, 3);
    s.tile_mut(c).improvement = Improvement::City;
    s.cities.push(City {
        id: 0,
        owner: AGENT,
        pos: c,
        population: 2,
        food_store: 0,
        shield_store: 0,
        producing: Production::Nothing,
    });
    s.tile_mut(Pos::new(3, 3)).improvement = Improvement::Irrigation;
    // An improvement outside the territory does not count.
    s.tile_mut(Pos::new(7, 7)).improvement = Improvement::Irrigation;
    assert_eq!(score(&s, AGENT), 17.0);
    assert_eq!(score(&s, OPPONENT), 0.0);
    assert_eq!(utility(&s, AGENT), 17.0);
}

#[test]
fn utility_ratio_examples() {
    let five: Vec<_> = (0..5)
        .map(|i| (AGENT, UnitKind::Warrior, Pos::new(i, 0)))
        .collect();
    assert_eq!(utility(&flat_state(&five), AGENT), 5.0);
    let mut units = Vec::new();
    for i in 0..10 {
        units.push((AGENT, UnitKind::Warrior, Pos::new(i, 0)));
        units.push((AGENT, UnitKind::Warrior, Pos::new(i, 1)));
        units.push((AGENT, UnitKind::Warrior, Pos::new(i, 2)));
        units.push((OPPONENT, UnitKind::Warrior, Pos::new(i, 8)));
        units.push((OPPONENT, UnitKind::Warrior, Pos::new(i, 9)));
    }
    let s = flat_state(&units);
    assert_eq!((score(&s, AGENT), score(&s, OPPONENT)), (30.0, 20.0));
    assert_eq!(utility(&s, AGENT), 1.5);
}

#[test]
fn snapshot_round_trips_and_isolates() {
    let cfg = GameConfig::default();
    let s0 = new_game(11, &cfg).unwrap();
    assert_eq!(restore(&snapshot(&s0)).unwrap(), s0);

    // Advance until some unit has taken damage, then round-trip mid-game.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut s = s0.clone();
    let mut saw_combat = false;
    'games: for seed in 0..200 {
        s = new_game(seed, &cfg).unwrap();
        while !s.is_terminal() {
            s = step(&s, &random_joint(&s, &mut rng)).unwrap().state;
            if s.units.iter().any(|u| u.hp < MAX_HP) {
                saw_combat = true;
                break 'games;
            }
        }
    }
    assert!(saw_combat);
    let token = snapshot(&s);
    let back = restore(&token).unwrap();
    assert_eq!(back, s);
    assert_eq!(back.rng, s.rng);

    let mut advanced = s.clone();
    for _ in 0..3 {
        if advanced.is_terminal() {
            break;
        }
        advanced = step(&advanced, &random_joint(&advanced, &mut rng)).unwrap().state;
    }
    assert_eq!(restore(&token).unwrap(), s);

    let mut bytes = token.as_bytes().to_vec();
    bytes[10] ^= 1;
    assert!(matches!(
        restore(&Snapshot::from_bytes(bytes)),
        Err(SimError::Restore(_))
    ));
}

#[test]
fn dump_parse_is_a_fixed_point() {
    let s = new_game(21, &GameConfig::default()).unwrap();
    let text = dump_state(&s);
    assert_eq!(parse_state(&text).unwrap(), s);
    assert_eq!(dump_state(&parse_state(&text).unwrap()), text);
}

/// Random legal play over many games, at least 10^4 steps in total. Checks every type
/// invariant, that legal orders are always accepted, and snapshot round-trips.
#[test]
fn fuzz_random_legal_play() {
    let cfg = GameConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut steps = 0;
    let mut seed = 0;
    while steps < 10_000 {
        let mut s = new_game(seed, &cfg).unwrap();
        seed += 1;
        s.check_invariants().unwrap();
        while !s.is_terminal() {
            let j = random_joint(&s, &mut rng);
            let r = step(&s, &j).unwrap_or_else(|e| panic!("legal action rejected: {e}"));
            s = r.state;
            assert_eq!(r.terminal, s.is_terminal());
            s.check_invariants()
                .unwrap_or_else(|e| panic!("seed {seed} turn {}: {e}", s.turn));
            assert_eq!(restore(&snapshot(&s)).unwrap(), s);
            steps += 1;
        }
        assert!(s.turn <= cfg.turn_limit);
    }
}

fn played_state(seed: u64, steps: usize) -> GameState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut s = new_game(seed, &GameConfig::default()).unwrap();
    for _ in 0..steps {
        if s.is_terminal() {
            break;
        }
        s = step(&s, &random_joint(&s, &mut rng)).unwrap().state;
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trajectories_are_determined_by_seed_and_actions(seed in 0u64..1000, n in 0usize..20) {
        prop_assert_eq!(played_state(seed, n), played_state(seed, n));
    }

    #[test]
    fn utility_product_identity(seed in 0u64..1000, n in 0usize..30) {
        let s = played_state(seed, n);
        let (p, q) = (score(&s, AGENT), score(&s, OPPONENT));
        let lhs = utility(&s, AGENT) * utility(&s, OPPONENT);
        let rhs = p * q / (q.max(1.0) * p.max(1.0));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
        if p >= 1.0 && q >= 1.0 {
            prop_assert!((lhs - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn score_is_monotone_in_each_count(seed in 0u64..1000, n in 0usize..30, player in 0usize..2) {
        let s = played_state(seed, n);
        let base = score(&s, player);

        let mut more_units = s.clone();
        let template = Unit {
            id: 10_000,
            owner: player,
            kind: UnitKind::Warrior,
            pos: Pos::new(0, 0),
            hp: MAX_HP,
            moves_left: 1,
            fortified: false,
        };
        more_units.units.push(template);
        prop_assert_eq!(score(&more_units, player), base + 1.0);

        if let Some(i) = s.cities.iter().position(|c| c.owner == player) {
            let mut bigger = s.clone();
            bigger.cities[i].population += 1;
            prop_assert_eq!(score(&bigger, player), base + 2.0);

            let centre = s.cities[i].pos;
            let spot = s
                .neighbors(centre)
                .find(|p| s.tile(*p).kind.is_land() && s.tile(*p).improvement == Improvement::None);
            if let Some(spot) = spot {
                let mut improved = s.clone();
                improved.tile_mut(spot).improvement = Improvement::Road;
                prop_assert_eq!(score(&improved, player), base + 1.0);
            }
        }

        let far = s.positions().find(|p| {
            s.tile(*p).kind.is_land()
                && s.city_within(*p, 2).then_some(()).is_none()
                && s.units_at(*p).next().is_none()
        });
        if let Some(spot) = far {
            let mut founded = s.clone();
            founded.tile_mut(spot).improvement = Improvement::City;
            founded.cities.push(City {
                id: 10_000,
                owner: player,
                pos: spot,
                population: 1,
                food_store: 0,
                shield_store: 0,
                producing: Production::Nothing,
            });
            prop_assert!(score(&founded, player) >= base + 12.0);
        }
    }

    #[test]
    fn legal_orders_are_never_rejected(seed in 0u64..1000, n in 0usize..30, pick in any::<u64>()) {
        let s = played_state(seed, n);
        prop_assume!(!s.is_terminal());
        let mut rng = ChaCha8Rng::seed_from_u64(pick);
        prop_assert!(step(&s, &random_joint(&s, &mut rng)).is_ok());
    }
}
