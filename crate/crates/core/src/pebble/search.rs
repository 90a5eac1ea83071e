//! Exhaustive minimum-I/O search for tiny graphs.
//!
//! A state is the pair (red set, blue set). Discards are folded into loads
//! and computes as an optional eviction, since discarding earlier than
//! needed never saves I/O. Loads and stores cost one, computes nothing.
//! A* with an admissible heuristic returns the true optimum unless the node
//! budget runs out, in which case the better of the best goal found and a
//! greedy schedule is returned with `optimal = false`.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use super::game::{Move, Schedule};
use super::{CDag, PebbleError};

/// Largest number of non-input vertices the search accepts.
pub const MAX_COMPUTE: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub q: u64,
    pub optimal: bool,
    pub schedule: Schedule,
    pub expanded: u64,
}

type State = (u64, u64);

#[derive(Clone, Copy)]
struct Step {
    parent: State,
    evict: Option<usize>,
    mv: Move,
}

struct Masks {
    n: usize,
    preds: Vec<u64>,
    inputs: u64,
    compute: u64,
    outputs: u64,
}

impl Masks {
    fn new(g: &CDag) -> Self {
        let n = g.len();
        let bit = |v: usize| 1u64 << v;
        Masks {
            n,
            preds: (0..n).map(|v| g.preds(v).iter().fold(0, |m, &p| m | bit(p))).collect(),
            inputs: g.inputs().into_iter().fold(0, |m, v| m | bit(v)),
            compute: g.compute_vertices().into_iter().fold(0, |m, v| m | bit(v)),
            outputs: g.outputs().into_iter().fold(0, |m, v| m | bit(v)),
        }
    }

    /// Stores still needed, plus inputs that must be loaded because a vertex
    /// that can only be obtained by computing it reads them.
    fn heuristic(&self, (red, blue): State) -> u32 {
        let missing = self.outputs & !blue;
        let mut must = missing & !red;
        let mut frontier = must;
        let mut loads = 0u64;
        while frontier != 0 {
            let v = frontier.trailing_zeros() as usize;
            frontier &= frontier - 1;
            let need = self.preds[v] & !red;
            loads |= need & self.inputs;
            let fresh = need & self.compute & !blue & !must;
            must |= fresh;
            frontier |= fresh;
        }
        missing.count_ones() + loads.count_ones()
    }
}

/// Minimum number of loads and stores over all sequential schedules.
pub fn min_io_search(g: &CDag, m: usize, limit: u64) -> Result<SearchResult, PebbleError> {
    let computes = g.compute_vertices().len();
    if computes > MAX_COMPUTE {
        return Err(PebbleError::TooLarge(format!(
            "{computes} compute vertices, the search accepts at most {MAX_COMPUTE}"
        )));
    }
    if g.len() > 64 {
        return Err(PebbleError::TooLarge(format!("{} vertices, at most 64 supported", g.len())));
    }
    let need = g.max_in_degree() + 1;
    if m < need {
        return Err(PebbleError::Infeasible(format!(
            "M = {m} but some vertex needs {need} red pebbles to be computed"
        )));
    }
    let mk = Masks::new(g);
    let start: State = (0, mk.inputs);
    let mut best_g: HashMap<State, u32> = HashMap::new();
    let mut parent: HashMap<State, Step> = HashMap::new();
    let mut heap = BinaryHeap::new();
    best_g.insert(start, 0);
    heap.push(Reverse((mk.heuristic(start), Reverse(0u32), start)));
    let mut expanded = 0u64;
    let full = |red: u64| red.count_ones() as usize >= m;

    while let Some(Reverse((_, Reverse(cost), state))) = heap.pop() {
        if best_g.get(&state).is_some_and(|&c| c < cost) {
            continue;
        }
        let (red, blue) = state;
        if mk.outputs & !blue == 0 {
            return Ok(SearchResult {
                q: cost as u64,
                optimal: true,
                schedule: rebuild(&parent, start, state),
                expanded,
            });
        }
        expanded += 1;
        if expanded > limit {
            let greedy = greedy_schedule(g, m)?;
            return Ok(SearchResult {
                q: greedy.io_count(),
                optimal: false,
                schedule: greedy,
                expanded,
            });
        }
        let mut push = |next: State, c: u32, step: Step, heap: &mut BinaryHeap<_>| {
            if best_g.get(&next).is_none_or(|&old| c < old) {
                best_g.insert(next, c);
                parent.insert(next, step);
                heap.push(Reverse((c + mk.heuristic(next), Reverse(c), next)));
            }
        };
        // stores
        let mut storable = red & !blue;
        while storable != 0 {
            let v = storable.trailing_zeros() as usize;
            storable &= storable - 1;
            push(
                (red, blue | 1 << v),
                cost + 1,
                Step { parent: state, evict: None, mv: Move::store(v) },
                &mut heap,
            );
        }
        for v in 0..mk.n {
            let b = 1u64 << v;
            if red & b != 0 {
                continue;
            }
            let mut options: Vec<(Move, u32, u64)> = Vec::new();
            if blue & b != 0 {
                options.push((Move::load(v), 1, 0));
            }
            if mk.compute & b != 0 && mk.preds[v] & !red == 0 {
                options.push((Move::compute(v), 0, mk.preds[v]));
            }
            for (mv, c, keep) in options {
                if !full(red) {
                    push(
                        (red | b, blue),
                        cost + c,
                        Step { parent: state, evict: None, mv },
                        &mut heap,
                    );
                } else {
                    let mut victims = red & !keep;
                    while victims != 0 {
                        let w = victims.trailing_zeros() as usize;
                        victims &= victims - 1;
                        push(
                            ((red & !(1 << w)) | b, blue),
                            cost + c,
                            Step { parent: state, evict: Some(w), mv },
                            &mut heap,
                        );
                    }
                }
            }
        }
    }
    Err(PebbleError::Infeasible("no schedule reaches the goal".into()))
}

fn rebuild(parent: &HashMap<State, Step>, start: State, mut s: State) -> Schedule {
    let mut rev = Vec::new();
    while s != start {
        let step = parent[&s];
        rev.push(step.mv);
        if let Some(w) = step.evict {
            rev.push(Move::discard(w));
        }
        s = step.parent;
    }
    rev.reverse();
    Schedule { moves: rev }
}

/// Schedule without recomputation: compute vertices in topological order,
/// evicting the red vertex whose next use is farthest away and storing it
/// first when its value is still needed.
pub fn greedy_schedule(g: &CDag, m: usize) -> Result<Schedule, PebbleError> {
    let need = g.max_in_degree() + 1;
    if m < need {
        return Err(PebbleError::Infeasible(format!(
            "M = {m} but some vertex needs {need} red pebbles to be computed"
        )));
    }
    let order: Vec<usize> = g
        .topological_order()
        .expect("validated graph")
        .into_iter()
        .filter(|&v| !g.is_input(v))
        .collect();
    let n = g.len();
    let mut uses: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (pos, &v) in order.iter().enumerate() {
        for &p in g.preds(v) {
            uses[p].push(pos);
        }
    }
    let next_use = |v: usize, now: usize| -> usize {
        uses[v].iter().copied().find(|&p| p >= now).unwrap_or(usize::MAX)
    };
    let mut red: Vec<usize> = Vec::new();
    let mut blue: Vec<bool> = (0..n).map(|v| g.is_input(v)).collect();
    let mut moves = Vec::new();

    let make_room = |red: &mut Vec<usize>, blue: &mut Vec<bool>, moves: &mut Vec<Move>, keep: &[usize], now: usize| {
        if red.len() < m {
            return;
        }
        let (idx, &w) = red
            .iter()
            .enumerate()
            .filter(|(_, w)| !keep.contains(w))
            .max_by_key(|(_, &w)| (next_use(w, now), Reverse(w)))
            .expect("M exceeds the in-degree");
        if !blue[w] && (next_use(w, now) != usize::MAX || g.is_output(w)) {
            moves.push(Move::store(w));
            blue[w] = true;
        }
        moves.push(Move::discard(w));
        red.swap_remove(idx);
    };

    for (pos, &v) in order.iter().enumerate() {
        let preds = g.preds(v);
        for &p in preds {
            if !red.contains(&p) {
                make_room(&mut red, &mut blue, &mut moves, preds, pos);
                moves.push(Move::load(p));
                red.push(p);
            }
        }
        make_room(&mut red, &mut blue, &mut moves, preds, pos);
        moves.push(Move::compute(v));
        red.push(v);
    }
    red.sort_unstable();
    for v in red {
        if g.is_output(v) && !blue[v] {
            moves.push(Move::store(v));
            blue[v] = true;
        }
    }
    Ok(Schedule { moves })
}

#[cfg(test)]
mod tests {
    use super::super::{validate_schedule, Vertex, VertexKind};
    use super::*;

    fn v(id: usize, kind: VertexKind) -> Vertex {
        Vertex { id, kind, label: None }
    }

    #[test]
    fn single_compute() {
        let g = CDag::new(
            vec![v(0, VertexKind::Input), v(1, VertexKind::Input), v(2, VertexKind::Compute)],
            vec![(0, 2), (1, 2)],
        )
        .unwrap();
        let r = min_io_search(&g, 3, 1_000_000).unwrap();
        assert_eq!(r.q, 3);
        assert!(r.optimal);
        assert_eq!(validate_schedule(&g, &r.schedule, 3, 1).unwrap(), 3);
        assert!(matches!(min_io_search(&g, 2, 1000), Err(PebbleError::Infeasible(_))));
    }

    #[test]
    fn private_inputs() {
        let g = CDag::new(
            vec![
                v(0, VertexKind::Input),
                v(1, VertexKind::Input),
                v(2, VertexKind::Compute),
                v(3, VertexKind::Compute),
            ],
            vec![(0, 2), (1, 3)],
        )
        .unwrap();
        assert_eq!(min_io_search(&g, 2, 1_000_000).unwrap().q, 4);
    }

    #[test]
    fn budget_exhaustion_falls_back_to_greedy() {
        let g = CDag::new(
            vec![
                v(0, VertexKind::Input),
                v(1, VertexKind::Input),
                v(2, VertexKind::Compute),
                v(3, VertexKind::Compute),
            ],
            vec![(0, 2), (1, 3)],
        )
        .unwrap();
        let r = min_io_search(&g, 2, 0).unwrap();
        assert!(!r.optimal);
        assert_eq!(validate_schedule(&g, &r.schedule, 2, 1).unwrap(), r.q);
    }
}
