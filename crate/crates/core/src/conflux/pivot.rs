//! Candidate selection and the butterfly tournament.

use std::convert::Infallible;

use serde::{Deserialize, Serialize};

use super::ConfluxError;
use crate::netsim::{run_spmd, CommLedger, Ctx, Flow, MachineConfig, Op, Payload, SpmdError};

/// A candidate pivot row: global row index and its panel values.
pub(crate) type Cand = (usize, Vec<f64>);

pub(crate) struct Selection {
    /// Selected rows in pivot order, with their original panel values.
    pub rows: Vec<Cand>,
    /// Packed `L\U` of the selected rows, `rows.len() x v`.
    pub lu: Vec<f64>,
    /// Smallest pivot magnitude relative to the largest input magnitude.
    pub min_rel_pivot: f64,
}

/// Gaussian elimination with partial pivoting on a stack of rows, keeping
/// up to `v` pivot rows. Larger magnitude wins; ties go to the smaller
/// global row index.
pub(crate) fn gepp_select(cands: &[Cand], v: usize) -> Selection {
    let n = cands.len();
    let keep = v.min(n);
    let mut work: Vec<Vec<f64>> = cands.iter().map(|(_, x)| x.clone()).collect();
    let scale = cands
        .iter()
        .flat_map(|(_, x)| x.iter())
        .fold(0.0f64, |m, x| m.max(x.abs()));
    let mut free: Vec<usize> = (0..n).collect();
    let mut order = Vec::with_capacity(keep);
    let mut min_rel = f64::INFINITY;
    for q in 0..keep {
        let (pos, &p) = free
            .iter()
            .enumerate()
            .max_by(|(_, &a), (_, &b)| {
                work[a][q]
                    .abs()
                    .total_cmp(&work[b][q].abs())
                    .then(cands[b].0.cmp(&cands[a].0))
            })
            .expect("rows remain");
        free.remove(pos);
        order.push(p);
        let piv = work[p][q];
        min_rel = min_rel.min(if scale > 0.0 { piv.abs() / scale } else { 0.0 });
        if piv == 0.0 {
            continue;
        }
        let prow = work[p].clone();
        for &r in &free {
            let l = work[r][q] / piv;
            work[r][q] = l;
            for c in q + 1..prow.len() {
                work[r][c] -= l * prow[c];
            }
        }
    }
    let lu = order.iter().flat_map(|&p| work[p].iter().copied()).collect();
    Selection {
        rows: order.into_iter().map(|p| cands[p].clone()).collect(),
        lu,
        min_rel_pivot: if keep == 0 { 0.0 } else { min_rel },
    }
}

/// Relative pivot magnitude below which a panel counts as singular.
pub(crate) const SINGULAR_TOL: f64 = 1e-14;

pub(crate) fn rounds_for(participants: usize) -> usize {
    participants.next_power_of_two().trailing_zeros() as usize
}

pub(crate) fn encode(cands: &[Cand]) -> Payload {
    Payload {
        values: cands.iter().flat_map(|(_, x)| x.iter().copied()).collect(),
        indices: cands.iter().map(|(g, _)| *g).collect(),
    }
}

pub(crate) fn decode(p: &Payload, v: usize) -> Vec<Cand> {
    p.indices
        .iter()
        .enumerate()
        .map(|(k, &g)| (g, p.values[k * v..(k + 1) * v].to_vec()))
        .collect()
}

/// One butterfly superstep for participant `i` of `group`: merge the
/// candidates that arrived in round `r - 1`, then send for round `r`.
pub(crate) fn butterfly(ctx: &mut Ctx, group: &[usize], i: usize, r: usize, cands: &mut Vec<Cand>, v: usize) {
    let rounds = rounds_for(group.len());
    if r > 0 {
        let partner = i ^ (1 << (r - 1));
        if partner < group.len() {
            let msg = ctx
                .take_inbox()
                .into_iter()
                .find(|m| m.from == group[partner])
                .expect("partner message was expected");
            let theirs = decode(&msg.payload, v);
            let stack: Vec<Cand> = if i < partner {
                cands.iter().cloned().chain(theirs).collect()
            } else {
                theirs.into_iter().chain(cands.iter().cloned()).collect()
            };
            *cands = gepp_select(&stack, v).rows;
        }
    }
    if r < rounds {
        let partner = i ^ (1 << r);
        if partner < group.len() {
            ctx.send(group[partner], Op::Recv, encode(cands));
            ctx.expect(group[partner]);
        }
    }
}

/// Result of a standalone tournament.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tournament {
    /// Global row indices in pivot order.
    pub pivots: Vec<usize>,
    /// Packed `L\U` factors of the pivot rows' `v x v` block.
    pub a00: Vec<f64>,
    pub rounds: usize,
    pub ledger: CommLedger,
}

/// Tournament pivoting among `slices.len()` participants, each holding
/// some rows of a `v`-column panel. Each participant nominates `v` local
/// candidates by partial pivoting, then the butterfly plays
/// `⌈log2 participants⌉` rounds. Participant 0's final selection is the
/// result.
pub fn tournament_pivot(slices: Vec<Vec<(usize, Vec<f64>)>>, v: usize) -> Result<Tournament, ConfluxError> {
    let s = slices.len();
    if s == 0 || v == 0 {
        return Err(ConfluxError::InvalidInput("tournament needs a participant and v >= 1".into()));
    }
    if slices.iter().flatten().any(|(_, x)| x.len() != v) {
        return Err(ConfluxError::InvalidInput(format!("every panel row needs {v} values")));
    }
    if slices.iter().map(Vec::len).sum::<usize>() < v {
        return Err(ConfluxError::InvalidInput(format!("fewer than {v} rows in the panel")));
    }
    let rounds = rounds_for(s);
    let group: Vec<usize> = (0..s).collect();
    let run = run_spmd(MachineConfig::new(s, usize::MAX), slices, |ctx, cands: &mut Vec<Cand>| {
        let (i, r) = (ctx.rank(), ctx.superstep());
        if r == 0 {
            *cands = gepp_select(cands, v).rows;
        }
        butterfly(ctx, &group, i, r, cands, v);
        Ok::<_, Infallible>(if r == rounds { Flow::Done } else { Flow::Continue })
    })
    .map_err(|e| match e {
        SpmdError::Net(n) => ConfluxError::Net(n),
        SpmdError::Program { source, .. } => match source {},
    })?;
    let sel = gepp_select(&run.states[0], v);
    if sel.min_rel_pivot <= SINGULAR_TOL {
        return Err(ConfluxError::Singular { step: 0 });
    }
    Ok(Tournament {
        pivots: sel.rows.iter().map(|(g, _)| *g).collect(),
        a00: sel.lu,
        rounds,
        ledger: run.ledger,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gepp_prefers_magnitude_then_index() {
        let c = vec![(5, vec![1.0, 0.0]), (2, vec![-3.0, 1.0]), (9, vec![3.0, 2.0])];
        let s = gepp_select(&c, 1);
        assert_eq!(s.rows[0].0, 2);
        let s = gepp_select(&c, 2);
        assert_eq!(s.rows.iter().map(|r| r.0).collect::<Vec<_>>(), vec![2, 9]);
        // U row 2 after eliminating with row 2: 2 - (-1)(1) = 3
        assert_eq!(s.lu, vec![-3.0, 1.0, -1.0, 3.0]);
    }

    #[test]
    fn single_participant_plays_no_rounds() {
        let rows = (0..4).map(|g| (g, vec![g as f64 + 1.0, 1.0])).collect();
        let t = tournament_pivot(vec![rows], 2).unwrap();
        assert_eq!(t.rounds, 0);
        assert!(t.ledger.entries.is_empty());
        assert_eq!(t.pivots[0], 3);
    }

    #[test]
    fn identity_keeps_diagonal() {
        let v = 2;
        let slices = (0..4)
            .map(|p| {
                (0..8)
                    .filter(|g| g % 4 == p)
                    .map(|g| (g, (0..v).map(|q| if g == q { 1.0 } else { 0.0 }).collect()))
                    .collect()
            })
            .collect();
        let t = tournament_pivot(slices, v).unwrap();
        assert_eq!(t.pivots, vec![0, 1]);
        assert_eq!(t.rounds, 2);
    }
}
