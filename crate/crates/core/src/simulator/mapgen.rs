use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::types::*;
use super::SimError;

const MIN_SIDE: i32 = 6;
const MIN_LAND: f64 = 0.3;

pub(crate) fn generate(seed: u64, cfg: &GameConfig) -> Result<GameState, SimError> {
    if cfg.width < MIN_SIDE || cfg.height < MIN_SIDE {
        return Err(SimError::Config(format!(
            "map must be at least {MIN_SIDE}x{MIN_SIDE}, got {}x{}",
            cfg.width, cfg.height
        )));
    }
    if !(cfg.land_fraction >= MIN_LAND && cfg.land_fraction <= 1.0) {
        return Err(SimError::Config(format!(
            "land fraction must be in [{MIN_LAND}, 1], got {}",
            cfg.land_fraction
        )));
    }
    if cfg.turn_limit == 0 {
        return Err(SimError::Config("turn limit must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (cfg.width, cfg.height);
    let mut grid: Vec<Terrain> = (0..w * h)
        .map(|_| Terrain::new(random_land(&mut rng)))
        .collect();
    let at = |p: Pos| (p.y * w + p.x) as usize;

    let mid = h / 2;
    let starts = [
        Pos::new(1 + rng.gen_range(0..2), mid - 1 + rng.gen_range(0..2)),
        Pos::new(w - 2 - rng.gen_range(0..2), mid - 1 + rng.gen_range(0..2)),
    ];
    let reserved = |p: Pos| starts.iter().any(|s| s.chebyshev(p) <= 1);

    let target_ocean = ((1.0 - cfg.land_fraction) * (w * h) as f64).round() as usize;
    let mut ocean = 0usize;
    let mut attempts = 0;
    while ocean < target_ocean && attempts < 50 * (w * h) as usize {
        attempts += 1;
        let seed_pos = if rng.gen_bool(0.5) || ocean == 0 {
            border_position(&mut rng, w, h)
        } else {
            // grow an existing body of water
            let oceans: Vec<Pos> = positions(w, h)
                .filter(|p| grid[at(*p)].kind == TerrainKind::Ocean)
                .collect();
            let base = *oceans.choose(&mut rng).unwrap();
            let (dx, dy) = [(0, 1), (0, -1), (1, 0), (-1, 0)][rng.gen_range(0..4)];
            base.offset(dx, dy)
        };
        if !in_bounds(seed_pos, w, h)
            || reserved(seed_pos)
            || grid[at(seed_pos)].kind == TerrainKind::Ocean
        {
            continue;
        }
        let previous = grid[at(seed_pos)];
        grid[at(seed_pos)] = Terrain::new(TerrainKind::Ocean);
        if land_connected(&grid, w, h) {
            ocean += 1;
        } else {
            grid[at(seed_pos)] = previous;
        }
    }

    for _ in 0..2 {
        let mut p = Pos::new(rng.gen_range(0..w), rng.gen_range(0..h));
        for _ in 0..7 {
            if !in_bounds(p, w, h) || grid[at(p)].kind == TerrainKind::Ocean {
                break;
            }
            grid[at(p)].has_river = true;
            let (dx, dy) = [(0, 1), (0, -1), (1, 0), (-1, 0)][rng.gen_range(0..4)];
            p = p.offset(dx, dy);
        }
    }

    for t in grid.iter_mut() {
        t.resource = match t.kind {
            TerrainKind::Grassland | TerrainKind::Plains if rng.gen_bool(0.12) => {
                Some(Resource::Wheat)
            }
            TerrainKind::Hills | TerrainKind::Mountains if rng.gen_bool(0.25) => {
                Some(Resource::Coal)
            }
            _ => None,
        };
    }

    let mut units = Vec::new();
    let mut next_unit_id = 0;
    for (player, &start) in starts.iter().enumerate() {
        let mut spots = vec![start];
        for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1), (1, -1), (-1, 1)] {
            let p = start.offset(dx, dy);
            if in_bounds(p, w, h) && grid[at(p)].kind.is_land() {
                spots.push(p);
            }
        }
        if spots.len() < 3 {
            return Err(SimError::Config("not enough land around a start position".into()));
        }
        for (kind, pos) in UnitKind::ALL.iter().zip(spots) {
            units.push(Unit {
                id: next_unit_id,
                owner: player,
                kind: *kind,
                pos,
                hp: MAX_HP,
                moves_left: 1,
                fortified: false,
            });
            next_unit_id += 1;
        }
    }

    Ok(GameState {
        rng: GameRng::from_seed(rng.gen()),
        width: w,
        height: h,
        turn_limit: cfg.turn_limit,
        grid,
        units,
        cities: Vec::new(),
        gold: [0; NUM_PLAYERS],
        turn: 0,
        current_player: AGENT,
        next_unit_id,
        next_city_id: 0,
    })
}

fn random_land(rng: &mut ChaCha8Rng) -> TerrainKind {
    let r: f64 = rng.gen();
    match r {
        r if r < 0.34 => TerrainKind::Grassland,
        r if r < 0.58 => TerrainKind::Plains,
        r if r < 0.74 => TerrainKind::Hills,
        r if r < 0.84 => TerrainKind::Mountains,
        _ => TerrainKind::Desert,
    }
}

fn in_bounds(p: Pos, w: i32, h: i32) -> bool {
    p.x >= 0 && p.y >= 0 && p.x < w && p.y < h
}

fn positions(w: i32, h: i32) -> impl Iterator<Item = Pos> {
    (0..h).flat_map(move |y| (0..w).map(move |x| Pos::new(x, y)))
}

fn border_position(rng: &mut ChaCha8Rng, w: i32, h: i32) -> Pos {
    match rng.gen_range(0..4) {
        0 => Pos::new(rng.gen_range(0..w), 0),
        1 => Pos::new(rng.gen_range(0..w), h - 1),
        2 => Pos::new(0, rng.gen_range(0..h)),
        _ => Pos::new(w - 1, rng.gen_range(0..h)),
    }
}

/// Land tiles form one 4-connected component.
fn land_connected(grid: &[Terrain], w: i32, h: i32) -> bool {
    let at = |p: Pos| (p.y * w + p.x) as usize;
    let land: Vec<Pos> = positions(w, h)
        .filter(|p| grid[at(*p)].kind.is_land())
        .collect();
    let Some(&first) = land.first() else {
        return false;
    };
    let mut seen = vec![false; grid.len()];
    let mut queue = VecDeque::from([first]);
    seen[at(first)] = true;
    let mut count = 1;
    while let Some(p) = queue.pop_front() {
        for (dx, dy) in [(0, 1), (0, -1), (1, 0), (-1, 0)] {
            let q = p.offset(dx, dy);
            if in_bounds(q, w, h) && !seen[at(q)] && grid[at(q)].kind.is_land() {
                seen[at(q)] = true;
                count += 1;
                queue.push_back(q);
            }
        }
    }
    count == land.len()
}
