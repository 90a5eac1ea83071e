use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{CDag, PebbleError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MoveKind {
    /// Red pebble on a vertex that holds some pebble.
    Load,
    /// Blue pebble on a vertex that holds a red pebble of the mover's hue.
    Store,
    /// Red pebble on a vertex whose predecessors all hold red pebbles of the
    /// mover's hue.
    Compute,
    /// Remove a red pebble of the mover's hue.
    Discard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Move {
    pub kind: MoveKind,
    pub vertex: usize,
    #[serde(default)]
    pub hue: usize,
}

impl Move {
    pub fn load(vertex: usize) -> Self {
        Move { kind: MoveKind::Load, vertex, hue: 0 }
    }
    pub fn store(vertex: usize) -> Self {
        Move { kind: MoveKind::Store, vertex, hue: 0 }
    }
    pub fn compute(vertex: usize) -> Self {
        Move { kind: MoveKind::Compute, vertex, hue: 0 }
    }
    pub fn discard(vertex: usize) -> Self {
        Move { kind: MoveKind::Discard, vertex, hue: 0 }
    }
    pub fn on(self, hue: usize) -> Self {
        Move { hue, ..self }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub moves: Vec<Move>,
}

impl Schedule {
    pub fn io_count(&self) -> u64 {
        self.moves
            .iter()
            .filter(|m| matches!(m.kind, MoveKind::Load | MoveKind::Store))
            .count() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    RedCapExceeded,
    LoadWithoutSource,
    StoreWithoutRed,
    ComputeMissingPredecessor,
    ComputeOnInput,
    DiscardWithoutPebble,
    HueOutOfRange,
    UnknownVertex,
    AlreadyRed,
    OutputsIncomplete,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::RedCapExceeded => "more than M red pebbles of one hue",
            Rule::LoadWithoutSource => "load from a vertex without any pebble",
            Rule::StoreWithoutRed => "store from a vertex without a red pebble of the hue",
            Rule::ComputeMissingPredecessor => "compute while a predecessor lacks a red pebble of the hue",
            Rule::ComputeOnInput => "compute on a graph input",
            Rule::DiscardWithoutPebble => "discard of a missing red pebble",
            Rule::HueOutOfRange => "hue out of range",
            Rule::UnknownVertex => "unknown vertex",
            Rule::AlreadyRed => "vertex already holds a red pebble of the hue",
            Rule::OutputsIncomplete => "outputs without blue pebbles at the end",
        };
        f.write_str(s)
    }
}

/// A rejected move, or an incomplete final state (`index` is `None`).
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{}rule violated: {rule} (vertex {vertex}, hue {hue})", .index.map(|i| format!("move {i}: ")).unwrap_or_default())]
pub struct RuleViolation {
    pub index: Option<usize>,
    pub rule: Rule,
    pub vertex: usize,
    pub hue: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayStats {
    pub loads: u64,
    pub stores: u64,
    pub computes: u64,
    /// Largest number of red pebbles each hue held at any point.
    pub max_red: Vec<usize>,
}

impl ReplayStats {
    pub fn q(&self) -> u64 {
        self.loads + self.stores
    }
}

/// Replays `schedule` under the game rules.
pub fn replay(cdag: &CDag, schedule: &Schedule, m: usize, hues: usize) -> Result<ReplayStats, PebbleError> {
    if m == 0 || hues == 0 {
        return Err(PebbleError::InvalidInput("M and the hue count must be at least 1".into()));
    }
    let n = cdag.len();
    let mut blue: Vec<bool> = (0..n).map(|v| cdag.is_input(v)).collect();
    let mut red = vec![vec![false; n]; hues];
    let mut count = vec![0usize; hues];
    let mut stats = ReplayStats {
        loads: 0,
        stores: 0,
        computes: 0,
        max_red: vec![0; hues],
    };
    for (idx, mv) in schedule.moves.iter().enumerate() {
        let (v, h) = (mv.vertex, mv.hue);
        let fail = |rule| RuleViolation {
            index: Some(idx),
            rule,
            vertex: v,
            hue: h,
        };
        if h >= hues {
            return Err(fail(Rule::HueOutOfRange).into());
        }
        if v >= n {
            return Err(fail(Rule::UnknownVertex).into());
        }
        match mv.kind {
            MoveKind::Load => {
                if red[h][v] {
                    return Err(fail(Rule::AlreadyRed).into());
                }
                if !blue[v] && !red.iter().any(|r| r[v]) {
                    return Err(fail(Rule::LoadWithoutSource).into());
                }
                if count[h] + 1 > m {
                    return Err(fail(Rule::RedCapExceeded).into());
                }
                red[h][v] = true;
                count[h] += 1;
                stats.loads += 1;
            }
            MoveKind::Store => {
                if !red[h][v] {
                    return Err(fail(Rule::StoreWithoutRed).into());
                }
                blue[v] = true;
                stats.stores += 1;
            }
            MoveKind::Compute => {
                if cdag.is_input(v) {
                    return Err(fail(Rule::ComputeOnInput).into());
                }
                if red[h][v] {
                    return Err(fail(Rule::AlreadyRed).into());
                }
                if cdag.preds(v).iter().any(|&p| !red[h][p]) {
                    return Err(fail(Rule::ComputeMissingPredecessor).into());
                }
                if count[h] + 1 > m {
                    return Err(fail(Rule::RedCapExceeded).into());
                }
                red[h][v] = true;
                count[h] += 1;
                stats.computes += 1;
            }
            MoveKind::Discard => {
                if !red[h][v] {
                    return Err(fail(Rule::DiscardWithoutPebble).into());
                }
                red[h][v] = false;
                count[h] -= 1;
            }
        }
        stats.max_red[h] = stats.max_red[h].max(count[h]);
        assert!(count[h] <= m, "red pebble cap breached after an accepted move");
    }
    if let Some(v) = (0..n).find(|&v| cdag.is_output(v) && !blue[v]) {
        return Err(RuleViolation {
            index: None,
            rule: Rule::OutputsIncomplete,
            vertex: v,
            hue: 0,
        }
        .into());
    }
    Ok(stats)
}

/// Replays `schedule` and returns its I/O count `Q`.
pub fn validate_schedule(cdag: &CDag, schedule: &Schedule, m: usize, hues: usize) -> Result<u64, PebbleError> {
    replay(cdag, schedule, m, hues).map(|s| s.q())
}

#[cfg(test)]
mod tests {
    use super::super::{Vertex, VertexKind};
    use super::*;

    fn fork() -> CDag {
        let v = |id, kind| Vertex { id, kind, label: None };
        CDag::new(
            vec![v(0, VertexKind::Input), v(1, VertexKind::Input), v(2, VertexKind::Compute)],
            vec![(0, 2), (1, 2)],
        )
        .unwrap()
    }

    #[test]
    fn forced_minimum() {
        let s = Schedule {
            moves: vec![Move::load(0), Move::load(1), Move::compute(2), Move::store(2)],
        };
        assert_eq!(validate_schedule(&fork(), &s, 3, 1).unwrap(), 3);
    }

    #[test]
    fn pigeonhole() {
        let s = Schedule {
            moves: vec![Move::load(0), Move::load(1), Move::compute(2), Move::store(2)],
        };
        match validate_schedule(&fork(), &s, 2, 1) {
            Err(PebbleError::Rule(RuleViolation { index, rule, .. })) => {
                assert_eq!((index, rule), (Some(2), Rule::RedCapExceeded));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cross_hue_load_allowed() {
        let s = Schedule {
            moves: vec![
                Move::load(0),
                Move::load(1),
                Move::compute(2),
                Move::load(2).on(1),
                Move::store(2).on(1),
            ],
        };
        assert_eq!(validate_schedule(&fork(), &s, 3, 2).unwrap(), 4);
    }
}
