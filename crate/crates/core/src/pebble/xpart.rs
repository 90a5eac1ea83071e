use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::{CDag, PebbleError};

/// Candidate X-partition: disjoint sets of compute vertices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct XPartition {
    pub subcomputations: Vec<Vec<usize>>,
    pub x: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetCheck {
    /// Size of a minimum vertex cut between the graph inputs and the set;
    /// by Menger's theorem this equals the smallest dominator set.
    pub dom_min_upper: usize,
    /// Vertices of the set without successors inside it.
    pub min_set: usize,
    /// The set lies on no cycle of the contracted graph.
    pub acyclic: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct XPartitionCheck {
    pub sets: Vec<SetCheck>,
    pub acyclic: bool,
    /// Compute vertices in no set.
    pub uncovered: Vec<usize>,
    /// Every set is acyclic and has dominator and minimum sets of size at
    /// most `X`.
    pub valid: bool,
}

/// Checks the X-partition constraints for each set.
pub fn check_xpartition(g: &CDag, p: &XPartition) -> Result<XPartitionCheck, PebbleError> {
    let n = g.len();
    let mut owner: Vec<Option<usize>> = vec![None; n];
    for (h, set) in p.subcomputations.iter().enumerate() {
        for &v in set {
            if v >= n {
                return Err(PebbleError::InvalidPartition(format!("vertex {v} does not exist")));
            }
            if g.is_input(v) {
                return Err(PebbleError::InvalidPartition(format!("vertex {v} is a graph input")));
            }
            if let Some(o) = owner[v] {
                return Err(PebbleError::InvalidPartition(format!("vertex {v} is in sets {o} and {h}")));
            }
            owner[v] = Some(h);
        }
    }
    let on_cycle = contracted_cycles(g, &owner, p.subcomputations.len());
    let mut sets = Vec::new();
    for (h, set) in p.subcomputations.iter().enumerate() {
        let min_set = set
            .iter()
            .filter(|&&v| !g.succs(v).iter().any(|s| owner[*s] == Some(h)))
            .count();
        sets.push(SetCheck {
            dom_min_upper: min_vertex_cut(g, set),
            min_set,
            acyclic: !on_cycle[h],
        });
    }
    let acyclic = sets.iter().all(|s| s.acyclic);
    let valid = acyclic && sets.iter().all(|s| s.dom_min_upper <= p.x && s.min_set <= p.x);
    Ok(XPartitionCheck {
        sets,
        acyclic,
        uncovered: (0..n).filter(|&v| !g.is_input(v) && owner[v].is_none()).collect(),
        valid,
    })
}

/// Marks sets that share a strongly connected component with another node
/// once every set is contracted to a single node.
fn contracted_cycles(g: &CDag, owner: &[Option<usize>], sets: usize) -> Vec<bool> {
    let n = g.len();
    let node = |v: usize| owner[v].unwrap_or(sets + v);
    let total = sets + n;
    let mut adj = vec![Vec::new(); total];
    for &(a, b) in g.edges() {
        let (x, y) = (node(a), node(b));
        if x != y {
            adj[x].push(y);
        }
    }
    let comp = tarjan(&adj);
    let mut size: HashMap<usize, usize> = HashMap::new();
    for c in &comp {
        *size.entry(*c).or_default() += 1;
    }
    (0..sets).map(|h| size[&comp[h]] > 1).collect()
}

fn tarjan(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comp = vec![usize::MAX; n];
    let mut next = 0;
    let mut ncomp = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        // iterative DFS: (vertex, next child position)
        let mut call = vec![(root, 0usize)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if *pos < adj[v].len() {
                let w = adj[v][*pos];
                *pos += 1;
                if index[w] == usize::MAX {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(u, _)) = call.last() {
                    low[u] = low[u].min(low[v]);
                }
                if low[v] == index[v] {
                    while let Some(w) = stack.pop() {
                        on_stack[w] = false;
                        comp[w] = ncomp;
                        if w == v {
                            break;
                        }
                    }
                    ncomp += 1;
                }
            }
        }
    }
    comp
}

/// Minimum number of vertices whose removal disconnects every graph input
/// from `set`, by unit-capacity max flow on the split-vertex network.
fn min_vertex_cut(g: &CDag, set: &[usize]) -> usize {
    let n = g.len();
    // v_in = 2v, v_out = 2v + 1, source = 2n, sink = 2n + 1
    let (source, sink) = (2 * n, 2 * n + 1);
    let big = usize::MAX / 4;
    let mut net = FlowNet::new(2 * n + 2);
    for v in 0..n {
        net.add(2 * v, 2 * v + 1, 1);
        if g.is_input(v) {
            net.add(source, 2 * v, big);
        }
    }
    for &(a, b) in g.edges() {
        net.add(2 * a + 1, 2 * b, big);
    }
    for &v in set {
        net.add(2 * v + 1, sink, big);
    }
    net.max_flow(source, sink)
}

struct FlowNet {
    head: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<usize>,
}

impl FlowNet {
    fn new(n: usize) -> Self {
        FlowNet {
            head: vec![Vec::new(); n],
            to: Vec::new(),
            cap: Vec::new(),
        }
    }

    fn add(&mut self, a: usize, b: usize, c: usize) {
        self.head[a].push(self.to.len());
        self.to.push(b);
        self.cap.push(c);
        self.head[b].push(self.to.len());
        self.to.push(a);
        self.cap.push(0);
    }

    fn max_flow(&mut self, s: usize, t: usize) -> usize {
        let mut flow = 0;
        loop {
            let mut via = vec![usize::MAX; self.head.len()];
            let mut seen = vec![false; self.head.len()];
            seen[s] = true;
            let mut q = VecDeque::from([s]);
            while let Some(u) = q.pop_front() {
                for &e in &self.head[u] {
                    let w = self.to[e];
                    if !seen[w] && self.cap[e] > 0 {
                        seen[w] = true;
                        via[w] = e;
                        q.push_back(w);
                    }
                }
            }
            if !seen[t] {
                return flow;
            }
            let mut push = usize::MAX;
            let mut v = t;
            while v != s {
                let e = via[v];
                push = push.min(self.cap[e]);
                v = self.to[e ^ 1];
            }
            let mut v = t;
            while v != s {
                let e = via[v];
                self.cap[e] -= push;
                self.cap[e ^ 1] += push;
                v = self.to[e ^ 1];
            }
            flow += push;
        }
    }
}

/// Smallest dominator set of `set` by exhaustive search; for cross-checks
/// on graphs with few vertices.
pub fn exact_dom_min(g: &CDag, set: &[usize]) -> usize {
    let n = g.len();
    assert!(n <= 20, "exhaustive dominator search is limited to 20 vertices");
    let mut best = n;
    for mask in 0u32..(1 << n) {
        let size = mask.count_ones() as usize;
        if size >= best {
            continue;
        }
        let blocked = |v: usize| mask & (1 << v) != 0;
        let mut seen = vec![false; n];
        let mut stack: Vec<usize> = g.inputs().into_iter().filter(|&v| !blocked(v)).collect();
        for &v in &stack {
            seen[v] = true;
        }
        let mut reached = false;
        while let Some(v) = stack.pop() {
            if set.contains(&v) {
                reached = true;
                break;
            }
            for &s in g.succs(v) {
                if !seen[s] && !blocked(s) {
                    seen[s] = true;
                    stack.push(s);
                }
            }
        }
        if !reached {
            best = size;
        }
    }
    best
}
