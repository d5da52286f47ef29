//! Versioned text serialization of [`GameState`] and checksummed snapshots.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use super::types::*;
use super::SimError;

const HEADER: &str = "textstrat-state v1";

/// Opaque, self-validating copy of a game state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    bytes: Vec<u8>,
}

impl Snapshot {
    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Snapshot { bytes }
    }
}

pub fn snapshot(state: &GameState) -> Snapshot {
    let body = dump_state(state);
    let digest = hex(&Sha256::digest(body.as_bytes()));
    Snapshot {
        bytes: format!("{body}checksum {digest}\n").into_bytes(),
    }
}

pub fn restore(token: &Snapshot) -> Result<GameState, SimError> {
    let text = std::str::from_utf8(&token.bytes)
        .map_err(|_| SimError::Restore("snapshot is not UTF-8".into()))?;
    let cut = text
        .rfind("checksum ")
        .ok_or_else(|| SimError::Restore("missing checksum".into()))?;
    let (body, tail) = text.split_at(cut);
    let expected = tail.trim_start_matches("checksum ").trim_end();
    if hex(&Sha256::digest(body.as_bytes())) != expected {
        return Err(SimError::Restore("checksum mismatch".into()));
    }
    parse_state(body)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn unhex(s: &str) -> Option<Vec<u8>> {
    if s.len() % 2 != 0 {
        return None;
    }
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(s.get(i..i + 2)?, 16).ok())
        .collect()
}

/// Deterministic text dump; `parse_state(dump_state(s)) == s`.
pub fn dump_state(s: &GameState) -> String {
    let mut out = String::new();
    let (seed, pos) = s.rng.parts();
    let _ = writeln!(out, "{HEADER}");
    let _ = writeln!(out, "size {} {} {}", s.width, s.height, s.turn_limit);
    let _ = writeln!(out, "turn {} {}", s.turn, s.current_player);
    let _ = writeln!(out, "rng {} {}", hex(&seed), pos);
    let _ = writeln!(out, "gold {} {}", s.gold[0], s.gold[1]);
    let _ = writeln!(out, "next {} {}", s.next_unit_id, s.next_city_id);
    for y in 0..s.height {
        let row: Vec<String> = (0..s.width)
            .map(|x| {
                let t = s.tile(Pos::new(x, y));
                format!(
                    "{}{}{}{}",
                    terrain_code(t.kind),
                    if t.has_river { 'r' } else { '-' },
                    match t.resource {
                        Some(Resource::Wheat) => 'w',
                        Some(Resource::Coal) => 'c',
                        None => '-',
                    },
                    improvement_code(t.improvement)
                )
            })
            .collect();
        let _ = writeln!(out, "row {}", row.join(" "));
    }
    for u in &s.units {
        let _ = writeln!(
            out,
            "unit {} {} {} {} {} {} {} {}",
            u.id,
            u.owner,
            u.kind.name(),
            u.pos.x,
            u.pos.y,
            u.hp,
            u.moves_left,
            u8::from(u.fortified)
        );
    }
    for c in &s.cities {
        let _ = writeln!(
            out,
            "city {} {} {} {} {} {} {} {}",
            c.id,
            c.owner,
            c.pos.x,
            c.pos.y,
            c.population,
            c.food_store,
            c.shield_store,
            c.producing.name()
        );
    }
    out
}

fn terrain_code(k: TerrainKind) -> char {
    match k {
        TerrainKind::Grassland => 'G',
        TerrainKind::Plains => 'P',
        TerrainKind::Hills => 'H',
        TerrainKind::Mountains => 'M',
        TerrainKind::Desert => 'D',
        TerrainKind::Ocean => 'O',
    }
}

fn improvement_code(i: Improvement) -> char {
    match i {
        Improvement::None => '-',
        Improvement::Irrigation => 'i',
        Improvement::Mine => 'm',
        Improvement::Road => 'd',
        Improvement::City => 'C',
    }
}

fn bad(line: &str) -> SimError {
    SimError::Restore(format!("malformed line: {line:?}"))
}

fn num<T: std::str::FromStr>(tok: Option<&str>, line: &str) -> Result<T, SimError> {
    tok.and_then(|t| t.parse().ok()).ok_or_else(|| bad(line))
}

pub fn parse_state(text: &str) -> Result<GameState, SimError> {
    let mut lines = text.lines();
    if lines.next() != Some(HEADER) {
        return Err(SimError::Restore("missing or unsupported header".into()));
    }
    let mut state = GameState {
        rng: GameRng::from_seed(0),
        width: 0,
        height: 0,
        turn_limit: 0,
        grid: Vec::new(),
        units: Vec::new(),
        cities: Vec::new(),
        gold: [0; NUM_PLAYERS],
        turn: 0,
        current_player: AGENT,
        next_unit_id: 0,
        next_city_id: 0,
    };
    for line in lines {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("size") => {
                state.width = num(it.next(), line)?;
                state.height = num(it.next(), line)?;
                state.turn_limit = num(it.next(), line)?;
            }
            Some("turn") => {
                state.turn = num(it.next(), line)?;
                state.current_player = num(it.next(), line)?;
            }
            Some("rng") => {
                let seed = unhex(it.next().ok_or_else(|| bad(line))?)
                    .and_then(|v| <[u8; 32]>::try_from(v).ok())
                    .ok_or_else(|| bad(line))?;
                let pos: u128 = num(it.next(), line)?;
                state.rng = GameRng::from_parts(seed, pos);
            }
            Some("gold") => {
                state.gold = [num(it.next(), line)?, num(it.next(), line)?];
            }
            Some("next") => {
                state.next_unit_id = num(it.next(), line)?;
                state.next_city_id = num(it.next(), line)?;
            }
            Some("row") => {
                for cell in it {
                    state.grid.push(parse_tile(cell).ok_or_else(|| bad(line))?);
                }
            }
            Some("unit") => {
                let id = num(it.next(), line)?;
                let owner = num(it.next(), line)?;
                let kind = it
                    .next()
                    .and_then(UnitKind::from_name)
                    .ok_or_else(|| bad(line))?;
                let pos = Pos::new(num(it.next(), line)?, num(it.next(), line)?);
                let hp = num(it.next(), line)?;
                let moves_left = num(it.next(), line)?;
                let fortified = num::<u8>(it.next(), line)? == 1;
                state.units.push(Unit {
                    id,
                    owner,
                    kind,
                    pos,
                    hp,
                    moves_left,
                    fortified,
                });
            }
            Some("city") => {
                let id = num(it.next(), line)?;
                let owner = num(it.next(), line)?;
                let pos = Pos::new(num(it.next(), line)?, num(it.next(), line)?);
                let population = num(it.next(), line)?;
                let food_store = num(it.next(), line)?;
                let shield_store = num(it.next(), line)?;
                let producing = it
                    .next()
                    .and_then(Production::from_name)
                    .ok_or_else(|| bad(line))?;
                state.cities.push(City {
                    id,
                    owner,
                    pos,
                    population,
                    food_store,
                    shield_store,
                    producing,
                });
            }
            Some(_) => return Err(bad(line)),
            None => {}
        }
    }
    if state.grid.len() != (state.width * state.height) as usize || state.width <= 0 {
        return Err(SimError::Restore("grid size does not match header".into()));
    }
    if state.current_player >= NUM_PLAYERS
        || state
            .units
            .iter()
            .any(|u| u.owner >= NUM_PLAYERS || !state.in_bounds(u.pos))
        || state
            .cities
            .iter()
            .any(|c| c.owner >= NUM_PLAYERS || !state.in_bounds(c.pos))
    {
        return Err(SimError::Restore("entity out of range".into()));
    }
    Ok(state)
}

fn parse_tile(cell: &str) -> Option<Terrain> {
    let b: Vec<char> = cell.chars().collect();
    if b.len() != 4 {
        return None;
    }
    let kind = match b[0] {
        'G' => TerrainKind::Grassland,
        'P' => TerrainKind::Plains,
        'H' => TerrainKind::Hills,
        'M' => TerrainKind::Mountains,
        'D' => TerrainKind::Desert,
        'O' => TerrainKind::Ocean,
        _ => return None,
    };
    let has_river = match b[1] {
        'r' => true,
        '-' => false,
        _ => return None,
    };
    let resource = match b[2] {
        'w' => Some(Resource::Wheat),
        'c' => Some(Resource::Coal),
        '-' => None,
        _ => return None,
    };
    let improvement = match b[3] {
        '-' => Improvement::None,
        'i' => Improvement::Irrigation,
        'm' => Improvement::Mine,
        'd' => Improvement::Road,
        'C' => Improvement::City,
        _ => return None,
    };
    Some(Terrain {
        kind,
        has_river,
        resource,
        improvement,
    })
}
