//! Per-rank program. Every outer step `t` takes `rounds + 5` supersteps;
//! the offset within the step selects the phase:
//!
//! | offset | work |
//! |---|---|
//! | 0 | finish the previous step's trailing update; send panel partials to the tournament layer |
//! | 1 ..= 1 + rounds | local candidates, butterfly rounds; the tournament root announces `A00` and the pivots |
//! | rounds + 2 | apply the mask; send panel rows to their 1D owners and pivot-row partials to the tournament layer |
//! | rounds + 3 | solve `L10`, send slices to the 2.5D owners; sum pivot rows, scatter `A01` columns |
//! | rounds + 4 | keep the `L10` slices; solve `U01`, send slices to the 2.5D owners |
//!
//! Receivers know from the shared plan and the mask which rows and columns
//! every message carries, so messages hold values only, except for
//! candidate and pivot row indices.

use std::ops::Range;

use super::dense::Matrix;
use super::pivot::{butterfly, gepp_select, rounds_for, Cand, SINGULAR_TOL};
use super::{ConfluxError, GridConfig};
use crate::netsim::{Ctx, Flow, Message, Op, Payload};

/// Shared, immutable description of the run.
pub(crate) struct Plan {
    /// Padded order, a multiple of `v`.
    pub n: usize,
    pub n_orig: usize,
    pub v: usize,
    pub s: usize,
    pub c: usize,
    pub active: usize,
    /// Number of outer steps.
    pub nb: usize,
    pub rounds: usize,
}

impl Plan {
    pub fn new(n_orig: usize, g: GridConfig) -> Self {
        let n = n_orig.div_ceil(g.v) * g.v;
        Plan {
            n,
            n_orig,
            v: g.v,
            s: g.p1_sqrt,
            c: g.c,
            active: g.active_ranks,
            nb: n / g.v,
            rounds: rounds_for(g.p1_sqrt),
        }
    }

    pub fn supersteps_per_step(&self) -> usize {
        self.rounds + 5
    }

    fn coords(&self, r: usize) -> Option<(usize, usize, usize)> {
        (r < self.active).then(|| (r % self.s, (r / self.s) % self.s, r / (self.s * self.s)))
    }

    fn rank(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.s * (j + self.s * k)
    }

    /// Grid coordinate owning row or column `g`.
    fn owner(&self, g: usize) -> usize {
        (g / self.v) % self.s
    }

    /// Position of row or column `g` in its owner's local tile.
    fn local(&self, g: usize) -> usize {
        (g / self.v) / self.s * self.v + g % self.v
    }

    fn lines(&self, i: usize) -> Vec<usize> {
        (0..self.n).filter(|&g| self.owner(g) == i).collect()
    }

    /// Columns of the panel handled by layer `k` in the trailing update.
    fn inner(&self, k: usize) -> Range<usize> {
        k * self.v / self.c..(k + 1) * self.v / self.c
    }

    /// Owner of position `pos` when `len` items are split into contiguous
    /// chunks over the active ranks.
    fn chunk_owner(&self, len: usize, pos: usize) -> usize {
        pos / len.div_ceil(self.active)
    }

    fn chunk(&self, len: usize, r: usize) -> Range<usize> {
        let size = len.div_ceil(self.active).max(1);
        (r * size).min(len)..((r + 1) * size).min(len)
    }

    /// Some column beyond panel `t` belongs to grid column `j`.
    fn has_trailing_cols(&self, t: usize, j: usize) -> bool {
        (t + 1..self.nb).any(|b| b % self.s == j)
    }
}

/// Per-step values every active rank derives from the mask.
struct View {
    /// Unfactored rows after this step's pivots, ascending.
    rows_after: Vec<usize>,
    /// First column beyond the panel.
    col_start: usize,
}

pub(crate) struct RankState {
    rank: usize,
    coord: Option<(usize, usize, usize)>,
    rows: Vec<usize>,
    cols: Vec<usize>,
    tile: Vec<f64>,
    remaining: Vec<bool>,
    cands: Vec<Cand>,
    a00: Vec<f64>,
    pivots: Vec<usize>,
    /// `L10` slice for the trailing update: my unfactored rows x inner width.
    l_slice: Vec<f64>,
    /// Finished factor pieces owned here: (step, row, `L` values).
    l_out: Vec<(usize, usize, Vec<f64>)>,
    /// (step, column, `U` values).
    u_out: Vec<(usize, usize, Vec<f64>)>,
    /// Rank 0 keeps every step's pivots and packed `A00`.
    history: Vec<(Vec<usize>, Vec<f64>)>,
}

impl RankState {
    pub fn new(rank: usize, plan: &Plan, a: &Matrix) -> Self {
        let coord = plan.coords(rank);
        let (rows, cols) = match coord {
            Some((i, j, _)) => (plan.lines(i), plan.lines(j)),
            None => (Vec::new(), Vec::new()),
        };
        let mut tile = vec![0.0; rows.len() * cols.len()];
        if let Some((_, _, 0)) = coord {
            for (ri, &g) in rows.iter().enumerate() {
                for (ci, &h) in cols.iter().enumerate() {
                    tile[ri * cols.len() + ci] = if g < plan.n_orig && h < plan.n_orig {
                        a[(g, h)]
                    } else if g == h {
                        1.0
                    } else {
                        0.0
                    };
                }
            }
        }
        RankState {
            rank,
            coord,
            rows,
            cols,
            tile,
            remaining: vec![true; plan.n],
            cands: Vec::new(),
            a00: Vec::new(),
            pivots: Vec::new(),
            l_slice: Vec::new(),
            l_out: Vec::new(),
            u_out: Vec::new(),
            history: Vec::new(),
        }
    }

    fn view(&self, plan: &Plan, t: usize) -> View {
        View {
            rows_after: (0..plan.n).filter(|&g| self.remaining[g]).collect(),
            col_start: (t + 1) * plan.v,
        }
    }

    pub fn step(&mut self, ctx: &mut Ctx, plan: &Plan) -> Result<Flow, ConfluxError> {
        let Some((i, j, k)) = self.coord else {
            return Ok(Flow::Done);
        };
        let spi = plan.supersteps_per_step();
        let (t, off) = (ctx.superstep() / spi, ctx.superstep() % spi);
        let r = plan.rounds;
        match off {
            0 => {
                if t > 0 {
                    self.trailing_update(ctx, plan, t - 1, k);
                }
                if t == plan.nb {
                    return Ok(Flow::Done);
                }
                self.pivots.clear();
                self.reduce_panel(ctx, plan, t, (i, j, k));
            }
            o if o <= r + 1 => self.tournament(ctx, plan, t, o - 1, (i, j, k))?,
            o if o == r + 2 => self.distribute(ctx, plan, t, (i, j, k)),
            o if o == r + 3 => self.solve_l10_scatter_a01(ctx, plan, t, (i, j, k)),
            _ => self.solve_u01(ctx, plan, t),
        }
        ctx.set_resident(self.resident(plan, t));
        Ok(Flow::Continue)
    }

    fn resident(&self, plan: &Plan, t: usize) -> usize {
        let live_rows = self.rows.iter().filter(|&&g| self.remaining[g]).count();
        let live_cols = self.cols.iter().filter(|&&h| h >= t * plan.v).count();
        let cand_words = |c: &[Cand]| c.iter().map(|(_, x)| x.len() + 1).sum::<usize>();
        live_rows * live_cols
            + cand_words(&self.cands)
            + self.a00.len()
            + self.pivots.len()
            + self.l_slice.len()
            + self.l_out.iter().map(|(_, _, x)| x.len()).sum::<usize>()
            + self.u_out.iter().map(|(_, _, x)| x.len()).sum::<usize>()
    }

    fn tournament_root(plan: &Plan, t: usize) -> usize {
        plan.rank(0, t % plan.s, t % plan.c)
    }

    fn tournament_group(plan: &Plan, t: usize) -> Vec<usize> {
        (0..plan.s).map(|i| plan.rank(i, t % plan.s, t % plan.c)).collect()
    }

    /// Every layer's copy of panel `t` goes to the tournament layer.
    fn reduce_panel(&mut self, ctx: &mut Ctx, plan: &Plan, t: usize, (i, j, _): (usize, usize, usize)) {
        if j != t % plan.s {
            return;
        }
        let my_rows: Vec<usize> = self.rows.iter().copied().filter(|&g| self.remaining[g]).collect();
        if my_rows.is_empty() {
            return;
        }
        let c0 = plan.local(t * plan.v);
        let nc = self.cols.len();
        let mut values = Vec::with_capacity(my_rows.len() * plan.v);
        for &g in &my_rows {
            let base = plan.local(g) * nc + c0;
            values.extend_from_slice(&self.tile[base..base + plan.v]);
        }
        let group: Vec<usize> = (0..plan.c).map(|kk| plan.rank(i, j, kk)).collect();
        let root = plan.rank(i, j, t % plan.c);
        ctx.send(root, Op::Reduce, Payload::values(values));
        if self.rank == root {
            for &src in &group {
                ctx.expect(src);
            }
        }
    }

    fn tournament(
        &mut self,
        ctx: &mut Ctx,
        plan: &Plan,
        t: usize,
        round: usize,
        (i, j, k): (usize, usize, usize),
    ) -> Result<(), ConfluxError> {
        let in_group = j == t % plan.s && k == t % plan.c;
        let active: Vec<usize> = (0..plan.active).collect();
        let root = Self::tournament_root(plan, t);
        if in_group {
            let group = Self::tournament_group(plan, t);
            if round == 0 {
                let panel = self.sum_panel(ctx, plan, t);
                self.cands = gepp_select(&panel, plan.v).rows;
            }
            butterfly(ctx, &group, i, round, &mut self.cands, plan.v);
            if round == plan.rounds && self.rank == root {
                let sel = gepp_select(&self.cands, plan.v);
                if sel.rows.len() < plan.v || sel.min_rel_pivot <= SINGULAR_TOL {
                    return Err(ConfluxError::Singular { step: t });
                }
                self.pivots = sel.rows.iter().map(|(g, _)| *g).collect();
                self.a00 = sel.lu;
            }
        }
        if round == plan.rounds {
            let payload = Payload {
                values: self.a00.clone(),
                indices: self.pivots.clone(),
            };
            ctx.bcast(&active, root, payload)?;
        }
        Ok(())
    }

    /// Sums this tournament rank's panel rows over layers, in ascending
    /// layer order, into its own tile and returns them.
    fn sum_panel(&mut self, ctx: &mut Ctx, plan: &Plan, t: usize) -> Vec<Cand> {
        let my_rows: Vec<usize> = self.rows.iter().copied().filter(|&g| self.remaining[g]).collect();
        let v = plan.v;
        let mut sum = vec![0.0; my_rows.len() * v];
        for (n, m) in ctx.take_inbox().into_iter().enumerate() {
            debug_assert_eq!(m.payload.values.len(), sum.len());
            if n == 0 {
                sum = m.payload.values;
            } else {
                for (a, b) in sum.iter_mut().zip(&m.payload.values) {
                    *a += b;
                }
            }
        }
        let (nc, c0) = (self.cols.len(), plan.local(t * v));
        my_rows
            .into_iter()
            .enumerate()
            .map(|(n, g)| {
                let x = sum[n * v..(n + 1) * v].to_vec();
                let base = plan.local(g) * nc + c0;
                self.tile[base..base + v].copy_from_slice(&x);
                (g, x)
            })
            .collect()
    }

    fn distribute(&mut self, ctx: &mut Ctx, plan: &Plan, t: usize, (i, j, k): (usize, usize, usize)) {
        if self.rank != Self::tournament_root(plan, t) {
            let msg = take_one(ctx, Op::Bcast);
            self.a00 = msg.payload.values;
            self.pivots = msg.payload.indices;
        }
        for &g in &self.pivots {
            self.remaining[g] = false;
        }
        if self.rank == 0 {
            self.history.push((self.pivots.clone(), self.a00.clone()));
        }
        let view = self.view(plan, t);
        let after = &view.rows_after;

        // panel rows to their 1D owners
        if j == t % plan.s && k == t % plan.c {
            let mut parts: Vec<Vec<f64>> = vec![Vec::new(); plan.active];
            let (nc, c0) = (self.cols.len(), plan.local(t * plan.v));
            for &g in &self.rows {
                if let Ok(pos) = after.binary_search(&g) {
                    let base = plan.local(g) * nc + c0;
                    parts[plan.chunk_owner(after.len(), pos)].extend_from_slice(&self.tile[base..base + plan.v]);
                }
            }
            self.cands.clear();
            for (dst, part) in parts.into_iter().enumerate() {
                if !part.is_empty() {
                    ctx.send(dst, Op::Scatter, Payload::values(part));
                }
            }
        }
        let mine = plan.chunk(after.len(), self.rank);
        let mut sources: Vec<usize> = after[mine].iter().map(|&g| plan.owner(g)).collect();
        sources.sort_unstable();
        sources.dedup();
        for ii in sources {
            ctx.expect(plan.rank(ii, t % plan.s, t % plan.c));
        }

        // pivot-row partials to the tournament layer
        let piv_mine: Vec<usize> = self.pivots.iter().copied().filter(|&g| plan.owner(g) == i).collect();
        let trailing: Vec<usize> = self.cols.iter().copied().filter(|&h| h >= view.col_start).collect();
        if !piv_mine.is_empty() && !trailing.is_empty() {
            let nc = self.cols.len();
            let c0 = plan.local(trailing[0]);
            let mut values = Vec::with_capacity(piv_mine.len() * trailing.len());
            for &g in &piv_mine {
                let base = plan.local(g) * nc;
                values.extend_from_slice(&self.tile[base + c0..base + nc]);
            }
            let root = plan.rank(i, j, t % plan.c);
            ctx.send(root, Op::Reduce, Payload::values(values));
            if self.rank == root {
                for kk in 0..plan.c {
                    ctx.expect(plan.rank(i, j, kk));
                }
            }
        }
    }

    fn solve_l10_scatter_a01(&mut self, ctx: &mut Ctx, plan: &Plan, t: usize, (i, j, k): (usize, usize, usize)) {
        let v = plan.v;
        let view = self.view(plan, t);
        let after = &view.rows_after;
        let inbox = ctx.take_inbox();

        // L10 = A10 U00^-1 on my 1D chunk of panel rows
        let mine = &after[plan.chunk(after.len(), self.rank)];
        let mut a10: Vec<(usize, Vec<f64>)> = Vec::new();
        for m in inbox.iter().filter(|m| m.op == Op::Scatter) {
            let ii = plan.coords(m.from).expect("active sender").0;
            let rows = mine.iter().copied().filter(|&g| plan.owner(g) == ii);
            for (n, g) in rows.enumerate() {
                a10.push((g, m.payload.values[n * v..(n + 1) * v].to_vec()));
            }
        }
        a10.sort_by_key(|(g, _)| *g);
        for (g, x) in &mut a10 {
            solve_upper_right(&self.a00, v, x);
            self.l_out.push((t, *g, x.clone()));
        }
        for ii in 0..plan.s {
            let rows: Vec<&(usize, Vec<f64>)> = a10.iter().filter(|(g, _)| plan.owner(*g) == ii).collect();
            if rows.is_empty() {
                continue;
            }
            for jj in (0..plan.s).filter(|&jj| plan.has_trailing_cols(t, jj)) {
                for kk in 0..plan.c {
                    let inner = plan.inner(kk);
                    let values = rows.iter().flat_map(|(_, x)| x[inner.clone()].iter().copied()).collect();
                    ctx.send(plan.rank(ii, jj, kk), Op::Bcast, Payload::values(values));
                }
            }
        }
        let my_after: Vec<usize> = self.rows.iter().copied().filter(|&g| self.remaining[g]).collect();
        if !my_after.is_empty() && plan.has_trailing_cols(t, j) {
            let mut senders: Vec<usize> = my_after
                .iter()
                .map(|&g| plan.chunk_owner(after.len(), after.binary_search(&g).expect("unfactored row")))
                .collect();
            senders.dedup();
            for src in senders {
                ctx.expect(src);
            }
        }

        // A01: sum pivot-row partials, scatter columns to their 1D owners
        let piv_mine: Vec<usize> = self.pivots.iter().copied().filter(|&g| plan.owner(g) == i).collect();
        let trailing: Vec<usize> = self.cols.iter().copied().filter(|&h| h >= view.col_start).collect();
        if k == t % plan.c && !piv_mine.is_empty() && !trailing.is_empty() {
            let mut sum: Option<Vec<f64>> = None;
            for m in inbox.into_iter().filter(|m| m.op == Op::Reduce) {
                match &mut sum {
                    None => sum = Some(m.payload.values),
                    Some(acc) => acc.iter_mut().zip(&m.payload.values).for_each(|(a, b)| *a += b),
                }
            }
            let sum = sum.expect("own partial arrives");
            let ncols = plan.n - view.col_start;
            let nt = trailing.len();
            let mut parts: Vec<Vec<f64>> = vec![Vec::new(); plan.active];
            for (ci, &h) in trailing.iter().enumerate() {
                let part = &mut parts[plan.chunk_owner(ncols, h - view.col_start)];
                for pi in 0..piv_mine.len() {
                    part.push(sum[pi * nt + ci]);
                }
            }
            for (dst, part) in parts.into_iter().enumerate() {
                if !part.is_empty() {
                    ctx.send(dst, Op::Scatter, Payload::values(part));
                }
            }
        }
        let ncols = plan.n.saturating_sub(view.col_start);
        let my_cols = plan.chunk(ncols, self.rank);
        let mut owners: Vec<usize> = my_cols.map(|p| plan.owner(view.col_start + p)).collect();
        owners.sort_unstable();
        owners.dedup();
        for jj in owners {
            for ii in 0..plan.s {
                if self.pivots.iter().any(|&g| plan.owner(g) == ii) {
                    ctx.expect(plan.rank(ii, jj, t % plan.c));
                }
            }
        }
    }

    fn solve_u01(&mut self, ctx: &mut Ctx, plan: &Plan, t: usize) {
        let v = plan.v;
        let view = self.view(plan, t);
        let after = &view.rows_after;
        let inbox = ctx.take_inbox();
        self.l_slice = inbox
            .iter()
            .filter(|m| m.op == Op::Bcast)
            .flat_map(|m| m.payload.values.iter().copied())
            .collect();

        let ncols = plan.n.saturating_sub(view.col_start);
        let my_cols: Vec<usize> = plan.chunk(ncols, self.rank).map(|p| view.col_start + p).collect();
        let mut u01: Vec<Vec<f64>> = vec![vec![0.0; v]; my_cols.len()];
        let pos_of: Vec<usize> = {
            let mut p = vec![0; plan.n];
            for (q, &g) in self.pivots.iter().enumerate() {
                p[g] = q;
            }
            p
        };
        for m in inbox.iter().filter(|m| m.op == Op::Scatter) {
            let (ii, jj, _) = plan.coords(m.from).expect("active sender");
            let qs: Vec<usize> = self.pivots.iter().filter(|&&g| plan.owner(g) == ii).map(|&g| pos_of[g]).collect();
            let mut it = m.payload.values.iter();
            for (ci, _) in my_cols.iter().enumerate().filter(|(_, &h)| plan.owner(h) == jj) {
                for &q in &qs {
                    u01[ci][q] = *it.next().expect("payload covers the block");
                }
            }
        }
        for (ci, col) in u01.iter_mut().enumerate() {
            solve_unit_lower(&self.a00, v, col);
            self.u_out.push((t, my_cols[ci], col.clone()));
        }
        for jj in 0..plan.s {
            let cis: Vec<usize> = (0..my_cols.len()).filter(|&ci| plan.owner(my_cols[ci]) == jj).collect();
            if cis.is_empty() {
                continue;
            }
            for ii in (0..plan.s).filter(|&ii| after.iter().any(|&g| plan.owner(g) == ii)) {
                for kk in 0..plan.c {
                    let inner = plan.inner(kk);
                    let values = cis.iter().flat_map(|&ci| u01[ci][inner.clone()].iter().copied()).collect();
                    ctx.send(plan.rank(ii, jj, kk), Op::Bcast, Payload::values(values));
                }
            }
        }
        let has_rows = self.rows.iter().any(|&g| self.remaining[g]);
        let trailing: Vec<usize> = self.cols.iter().copied().filter(|&h| h >= view.col_start).collect();
        if has_rows && !trailing.is_empty() {
            let mut senders: Vec<usize> = trailing
                .iter()
                .map(|&h| plan.chunk_owner(ncols, h - view.col_start))
                .collect();
            senders.dedup();
            for src in senders {
                ctx.expect(src);
            }
        }
    }

    fn trailing_update(&mut self, ctx: &mut Ctx, plan: &Plan, t: usize, k: usize) {
        let inbox = ctx.take_inbox();
        let col_start = (t + 1) * plan.v;
        let my_rows: Vec<usize> = self.rows.iter().copied().filter(|&g| self.remaining[g]).collect();
        let trailing = self.cols.iter().filter(|&&h| h >= col_start).count();
        if my_rows.is_empty() || trailing == 0 {
            self.l_slice.clear();
            return;
        }
        let w = plan.inner(k).len();
        let u: Vec<f64> = inbox.iter().flat_map(|m| m.payload.values.iter().copied()).collect();
        debug_assert_eq!(u.len(), trailing * w);
        debug_assert_eq!(self.l_slice.len(), my_rows.len() * w);
        // transpose to inner-major so the update streams along rows
        let mut ut = vec![0.0; w * trailing];
        for ci in 0..trailing {
            for q in 0..w {
                ut[q * trailing + ci] = u[ci * w + q];
            }
        }
        let nc = self.cols.len();
        let c0 = nc - trailing;
        for (ri, &g) in my_rows.iter().enumerate() {
            let base = plan.local(g) * nc + c0;
            let row = &mut self.tile[base..base + trailing];
            for q in 0..w {
                let l = self.l_slice[ri * w + q];
                if l == 0.0 {
                    continue;
                }
                for (a, b) in row.iter_mut().zip(&ut[q * trailing..(q + 1) * trailing]) {
                    *a -= l * b;
                }
            }
        }
        self.l_slice.clear();
    }
}

fn take_one(ctx: &mut Ctx, op: Op) -> Message {
    let mut inbox = ctx.take_inbox();
    let pos = inbox.iter().position(|m| m.op == op).expect("expected message arrived");
    inbox.swap_remove(pos)
}

/// `x <- x U^-1` with `U` the upper triangle of the packed `v x v` factors.
fn solve_upper_right(lu: &[f64], v: usize, x: &mut [f64]) {
    for q in 0..v {
        let mut acc = x[q];
        for p in 0..q {
            acc -= x[p] * lu[p * v + q];
        }
        x[q] = acc / lu[q * v + q];
    }
}

/// `x <- L^-1 x` with `L` the unit lower triangle of the packed factors.
fn solve_unit_lower(lu: &[f64], v: usize, x: &mut [f64]) {
    for q in 0..v {
        let mut acc = x[q];
        for p in 0..q {
            acc -= lu[q * v + p] * x[p];
        }
        x[q] = acc;
    }
}

/// Gathers the distributed factors into dense `L`, `U` over the original
/// rows and the pivot order.
pub(crate) fn assemble(plan: &Plan, states: &[RankState]) -> (Matrix, Matrix, Vec<usize>) {
    let (n, v) = (plan.n, plan.v);
    let history = &states[0].history;
    let order: Vec<usize> = history.iter().flat_map(|(p, _)| p.iter().copied()).collect();
    let mut pos = vec![0; n];
    for (a, &g) in order.iter().enumerate() {
        pos[g] = a;
    }
    let mut l = Matrix::identity(n);
    let mut u = Matrix::zeros(n, n);
    for (t, (_, a00)) in history.iter().enumerate() {
        for a in 0..v {
            for b in 0..v {
                if a > b {
                    l[(t * v + a, t * v + b)] = a00[a * v + b];
                } else {
                    u[(t * v + a, t * v + b)] = a00[a * v + b];
                }
            }
        }
    }
    for st in states {
        for (t, g, x) in &st.l_out {
            for (q, &val) in x.iter().enumerate() {
                l[(pos[*g], t * v + q)] = val;
            }
        }
        for (t, h, x) in &st.u_out {
            for (q, &val) in x.iter().enumerate() {
                u[(t * v + q, *h)] = val;
            }
        }
    }
    let m = plan.n_orig;
    let chosen: Vec<usize> = order.into_iter().filter(|&g| g < m).collect();
    let crop = |x: &Matrix| Matrix::from_fn(m, m, |a, b| x[(a, b)]);
    (crop(&l), crop(&u), chosen)
}
