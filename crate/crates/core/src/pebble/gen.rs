use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;

use super::game::{Move, Schedule};
use super::{CDag, PebbleError, Vertex, VertexKind};
use crate::daap::{parse_program, Program, Statement};

struct Builder {
    vertices: Vec<Vertex>,
    edges: Vec<(usize, usize)>,
    current: HashMap<(String, Vec<i64>), usize>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            vertices: Vec::new(),
            edges: Vec::new(),
            current: HashMap::new(),
        }
    }

    fn element(&mut self, array: &str, idx: &[i64]) -> usize {
        let key = (array.to_string(), idx.to_vec());
        if let Some(&v) = self.current.get(&key) {
            return v;
        }
        let id = self.vertices.len();
        self.vertices.push(Vertex {
            id,
            kind: VertexKind::Input,
            label: Some(element_label(array, idx)),
        });
        self.current.insert(key, id);
        id
    }

    fn compute(&mut self, label: String, out: (&str, &[i64]), reads: &[usize]) -> usize {
        let id = self.vertices.len();
        self.vertices.push(Vertex {
            id,
            kind: VertexKind::Compute,
            label: Some(label),
        });
        let mut seen = Vec::new();
        for &r in reads {
            if !seen.contains(&r) {
                seen.push(r);
                self.edges.push((r, id));
            }
        }
        self.current.insert((out.0.to_string(), out.1.to_vec()), id);
        id
    }

    fn finish(mut self) -> Result<CDag, PebbleError> {
        for &v in self.current.values() {
            if self.vertices[v].kind == VertexKind::Compute {
                self.vertices[v].kind = VertexKind::Output;
            }
        }
        CDag::new(self.vertices, self.edges)
    }
}

fn element_label(array: &str, idx: &[i64]) -> String {
    let parts: Vec<String> = idx.iter().map(|v| v.to_string()).collect();
    format!("{array}[{}]", parts.join(","))
}

/// cDAG of right-looking LU without pivoting on an `n x n` matrix.
///
/// One input vertex per matrix element, one compute vertex per column
/// scaling `(i, k)` and per trailing update `(i, j, k)`. Every element is a
/// chain of versions; the updates to `A[i,j]` are chained in ascending `k`,
/// one fixed order among those a reordered reduction would allow. Final
/// versions of updated elements are outputs.
pub fn gen_lu_cdag(n: usize) -> Result<CDag, PebbleError> {
    if !(1..=16).contains(&n) {
        return Err(PebbleError::InvalidInput(format!("LU cDAG size must be in 1..=16, got {n}")));
    }
    let n = n as i64;
    let mut b = Builder::new();
    for i in 0..n {
        for j in 0..n {
            b.element("A", &[i, j]);
        }
    }
    for k in 0..n {
        for i in k + 1..n {
            let reads = [b.element("A", &[i, k]), b.element("A", &[k, k])];
            b.compute(format!("S1[{k},{i}]"), ("A", &[i, k]), &reads);
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let reads = [
                    b.element("A", &[i, j]),
                    b.element("A", &[i, k]),
                    b.element("A", &[k, j]),
                ];
                b.compute(format!("S2[{k},{i},{j}]"), ("A", &[i, j]), &reads);
            }
        }
    }
    b.finish()
}

/// Expands a program into its cDAG.
///
/// Statements run in the order the printed program lists them: consecutive
/// statements whose loop nests share an identical prefix execute inside the
/// same loops. Labels are `ID[v1,...]` with the loop variables' values.
pub fn cdag_from_program(program: &Program, params: &HashMap<String, i64>) -> Result<CDag, PebbleError> {
    let mut b = Builder::new();
    let refs: Vec<&Statement> = program.statements.iter().collect();
    let mut env: BTreeMap<String, i64> = params.iter().map(|(k, v)| (k.clone(), *v)).collect();
    run(&refs, 0, &mut env, &mut b)?;
    b.finish()
}

fn run(stmts: &[&Statement], depth: usize, env: &mut BTreeMap<String, i64>, b: &mut Builder) -> Result<(), PebbleError> {
    let eval = |a: &crate::daap::Affine, env: &BTreeMap<String, i64>| -> Result<i64, PebbleError> {
        match &a.base {
            None => Ok(a.offset),
            Some(n) => env
                .get(n)
                .map(|v| v + a.offset)
                .ok_or_else(|| PebbleError::InvalidInput(format!("parameter `{n}` is not bound"))),
        }
    };
    let mut i = 0;
    while i < stmts.len() {
        let s = stmts[i];
        if s.loop_nest.len() == depth {
            let idx = |acc: &crate::daap::AccessVector| -> Vec<i64> {
                acc.components.iter().map(|c| env[c]).collect()
            };
            let reads: Vec<usize> = s.inputs.iter().map(|a| b.element(&a.array, &idx(a))).collect();
            if reads.is_empty() {
                return Err(PebbleError::InvalidGraph(format!(
                    "statement {} has no inputs, so its vertices would have no predecessors",
                    s.id
                )));
            }
            let vals: Vec<String> = s.var_names().iter().map(|v| env[*v].to_string()).collect();
            let out = idx(&s.output);
            b.compute(format!("{}[{}]", s.id, vals.join(",")), (&s.output.array, &out), &reads);
            i += 1;
            continue;
        }
        let lp = &s.loop_nest[depth];
        let mut j = i + 1;
        while j < stmts.len() && stmts[j].loop_nest.len() > depth && stmts[j].loop_nest[depth] == *lp {
            j += 1;
        }
        let (lo, hi) = (eval(&lp.range.lower, env)?, eval(&lp.range.upper, env)?);
        for v in lo..hi {
            env.insert(lp.var.name.clone(), v);
            run(&stmts[i..j], depth + 1, env, b)?;
        }
        env.remove(&lp.var.name);
        i = j;
    }
    Ok(())
}

/// Small programs whose cDAGs the exhaustive search can handle.
#[derive(Debug, Clone)]
pub struct Toy {
    pub name: &'static str,
    pub source: &'static str,
    pub n: i64,
}

impl Toy {
    pub fn program(&self) -> Program {
        parse_program(self.source).expect("toy programs parse")
    }

    pub fn params(&self) -> HashMap<String, i64> {
        [("N".to_string(), self.n)].into_iter().collect()
    }

    pub fn cdag(&self) -> CDag {
        cdag_from_program(&self.program(), &self.params()).expect("toy programs expand")
    }
}

pub fn toy_programs() -> Vec<Toy> {
    vec![
        Toy {
            name: "single-compute",
            source: "param N\nloop i in 0..N { S: c[i] = f(a[i], b[i]) }",
            n: 1,
        },
        Toy {
            name: "private-operand-matrix",
            source: "param N\nloop i in 0..N { loop j in 0..N { S: C[i,j] = f(A[i,j], b[j]) } }",
            n: 2,
        },
        Toy {
            name: "private-operand-vectors",
            source: "param N\nloop i in 0..N { S: c[i] = f(a[i], b[i]) }",
            n: 4,
        },
        Toy {
            name: "outer-product",
            source: "param N\nloop i in 0..N { loop j in 0..N { S: C[i,j] = f(a[i], b[j]) } }",
            n: 3,
        },
        Toy {
            name: "matmul-2x2x2",
            source: "param N\nloop i in 0..N { loop j in 0..N { loop k in 0..N { S: C[i,j] = f(A[i,k], B[k,j], C[i,j]) } } }",
            n: 2,
        },
    ]
}

/// Random schedule that obeys the rules: a random topological order with a
/// random hue per compute, random victims, and occasional superfluous
/// stores, loads and discards. Values still needed are stored before their
/// last red copy is dropped.
pub fn random_valid_schedule<R: Rng>(g: &CDag, m: usize, hues: usize, rng: &mut R) -> Result<Schedule, PebbleError> {
    let need = g.max_in_degree() + 1;
    if m < need || hues == 0 {
        return Err(PebbleError::Infeasible(format!("M = {m} below the required {need}")));
    }
    let n = g.len();
    let mut indeg: Vec<usize> = (0..n).map(|v| g.preds(v).len()).collect();
    let mut ready: Vec<usize> = (0..n).filter(|&v| !g.is_input(v) && indeg[v] == 0).collect();
    for v in g.inputs() {
        for &s in g.succs(v) {
            indeg[s] -= 1;
            if indeg[s] == 0 {
                ready.push(s);
            }
        }
    }
    let mut remaining_uses: Vec<usize> = (0..n).map(|v| g.succs(v).len()).collect();
    let mut red: Vec<Vec<usize>> = vec![Vec::new(); hues];
    let mut blue: Vec<bool> = (0..n).map(|v| g.is_input(v)).collect();
    let mut moves = Vec::new();

    let needed = |v: usize, uses: &[usize]| uses[v] > 0 || g.is_output(v);

    while !ready.is_empty() {
        let pick = rng.gen_range(0..ready.len());
        let v = ready.swap_remove(pick);
        let h = rng.gen_range(0..hues);
        let preds = g.preds(v).to_vec();
        // occasional noise
        if rng.gen_bool(0.2) {
            if let Some(&w) = red[h].choose(rng) {
                if !blue[w] {
                    moves.push(Move::store(w).on(h));
                    blue[w] = true;
                }
            }
        }
        for &p in &preds {
            if red[h].contains(&p) {
                continue;
            }
            evict(g, &mut red, &mut blue, &mut moves, h, m, &preds, &remaining_uses, rng, needed);
            moves.push(Move::load(p).on(h));
            red[h].push(p);
        }
        evict(g, &mut red, &mut blue, &mut moves, h, m, &preds, &remaining_uses, rng, needed);
        moves.push(Move::compute(v).on(h));
        red[h].push(v);
        for &p in &preds {
            remaining_uses[p] -= 1;
        }
        for &s in g.succs(v) {
            indeg[s] -= 1;
            if indeg[s] == 0 {
                ready.push(s);
            }
        }
        if rng.gen_bool(0.1) {
            let keep: Vec<usize> = Vec::new();
            let len = red[h].len();
            if len > 1 {
                evict(g, &mut red, &mut blue, &mut moves, h, len, &keep, &remaining_uses, rng, needed);
            }
        }
    }
    for (h, reds) in red.iter().enumerate() {
        let mut reds = reds.clone();
        reds.sort_unstable();
        for v in reds {
            if g.is_output(v) && !blue[v] {
                moves.push(Move::store(v).on(h));
                blue[v] = true;
            }
        }
    }
    Ok(Schedule { moves })
}

#[allow(clippy::too_many_arguments)]
fn evict<R: Rng>(
    _g: &CDag,
    red: &mut [Vec<usize>],
    blue: &mut [bool],
    moves: &mut Vec<Move>,
    h: usize,
    cap: usize,
    keep: &[usize],
    uses: &[usize],
    rng: &mut R,
    needed: impl Fn(usize, &[usize]) -> bool,
) {
    if red[h].len() < cap {
        return;
    }
    let candidates: Vec<usize> = (0..red[h].len()).filter(|&i| !keep.contains(&red[h][i])).collect();
    let Some(&idx) = candidates.choose(rng) else {
        return;
    };
    let w = red[h][idx];
    let elsewhere = red.iter().enumerate().any(|(o, r)| o != h && r.contains(&w));
    if !blue[w] && !elsewhere && needed(w, uses) {
        moves.push(Move::store(w).on(h));
        blue[w] = true;
    }
    moves.push(Move::discard(w).on(h));
    red[h].swap_remove(idx);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pebble::replay;
    use crate::pebble::validate_schedule;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn count(g: &CDag, prefix: &str) -> usize {
        g.vertices()
            .iter()
            .filter(|v| v.label.as_deref().is_some_and(|l| l.starts_with(prefix)))
            .count()
    }

    #[test]
    fn lu_sizes() {
        let g = gen_lu_cdag(4).unwrap();
        assert_eq!(g.inputs().len(), 16);
        assert_eq!(count(&g, "S1"), 6);
        assert_eq!(count(&g, "S2"), 14);
        let g = gen_lu_cdag(2).unwrap();
        assert_eq!((g.inputs().len(), count(&g, "S1"), count(&g, "S2")), (4, 1, 1));
        let g = gen_lu_cdag(1).unwrap();
        assert_eq!((g.len(), g.compute_vertices().len()), (1, 0));
        assert!(gen_lu_cdag(0).is_err());
        assert!(gen_lu_cdag(17).is_err());
    }

    #[test]
    fn program_expansion_matches_lu_generator() {
        let src = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/programs/lu.daap")).unwrap();
        let p = parse_program(&src).unwrap();
        for n in 1..=6 {
            let a = gen_lu_cdag(n as usize).unwrap();
            let b = cdag_from_program(&p, &[("N".to_string(), n)].into_iter().collect()).unwrap();
            let edges = |g: &CDag| {
                let mut e: Vec<(String, String)> = g
                    .edges()
                    .iter()
                    .map(|&(x, y)| (g.label(x).unwrap().to_string(), g.label(y).unwrap().to_string()))
                    .collect();
                e.sort();
                e
            };
            assert_eq!(edges(&a), edges(&b), "n={n}");
            assert_eq!(a.outputs().len(), b.outputs().len());
        }
    }

    #[test]
    fn random_schedules_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = gen_lu_cdag(4).unwrap();
        for hues in 1..=3 {
            for m in [4, 5, 8] {
                let s = random_valid_schedule(&g, m, hues, &mut rng).unwrap();
                validate_schedule(&g, &s, m, hues).unwrap();
            }
        }
    }

    #[test]
    fn random_schedules_never_breach_the_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut graphs = vec![(gen_lu_cdag(3).unwrap(), 4), (gen_lu_cdag(4).unwrap(), 5)];
        graphs.extend(toy_programs().into_iter().map(|t| {
            let g = t.cdag();
            let m = g.max_in_degree() + 1;
            (g, m)
        }));
        let mut checked = 0;
        for i in 0..1000 {
            let (g, m0) = &graphs[i % graphs.len()];
            let m = m0 + i % 3;
            let hues = 1 + i % 3;
            let s = random_valid_schedule(g, m, hues, &mut rng).unwrap();
            let stats = replay(g, &s, m, hues).unwrap();
            assert!(stats.max_red.iter().all(|&r| r <= m));
            assert_eq!(stats, replay(g, &s, m, hues).unwrap());
            assert_eq!(validate_schedule(g, &s, m, hues).unwrap(), s.io_count());
            checked += 1;
        }
        assert_eq!(checked, 1000);
    }
}
