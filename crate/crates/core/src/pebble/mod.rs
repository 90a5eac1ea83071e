//! The red-blue pebble game on explicit computation DAGs.
//!
//! Red pebbles model fast memory (at most `M` per hue), blue pebbles slow
//! memory. Graph inputs start blue; outputs must end blue. Loads and stores
//! are the I/O operations counted by `Q`. Hues model processors: a red
//! pebble belongs to one hue, and a load may copy a value from any pebble.

mod game;
mod gen;
mod search;
mod xpart;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use game::{replay, validate_schedule, Move, MoveKind, ReplayStats, Rule, RuleViolation, Schedule};
pub use gen::{cdag_from_program, gen_lu_cdag, random_valid_schedule, toy_programs, Toy};
pub use search::{greedy_schedule, min_io_search, SearchResult};
pub use xpart::{check_xpartition, exact_dom_min, SetCheck, XPartition, XPartitionCheck};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PebbleError {
    #[error("invalid cDAG: {0}")]
    InvalidGraph(String),
    #[error(transparent)]
    Rule(#[from] RuleViolation),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("instance too large: {0}")]
    TooLarge(String),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("{0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VertexKind {
    Input,
    Compute,
    /// A compute vertex whose value must end in slow memory even if other
    /// vertices read it.
    Output,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: usize,
    pub kind: VertexKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct CDagJson {
    vertices: Vec<Vertex>,
    edges: Vec<[usize; 2]>,
}

/// Computation DAG. Vertex ids are dense, `0..len`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CDagJson", into = "CDagJson")]
pub struct CDag {
    vertices: Vec<Vertex>,
    edges: Vec<(usize, usize)>,
    preds: Vec<Vec<usize>>,
    succs: Vec<Vec<usize>>,
}

impl TryFrom<CDagJson> for CDag {
    type Error = PebbleError;

    fn try_from(j: CDagJson) -> Result<Self, PebbleError> {
        CDag::new(j.vertices, j.edges.into_iter().map(|[a, b]| (a, b)).collect())
    }
}

impl From<CDag> for CDagJson {
    fn from(g: CDag) -> Self {
        CDagJson {
            vertices: g.vertices,
            edges: g.edges.into_iter().map(|(a, b)| [a, b]).collect(),
        }
    }
}

impl CDag {
    /// Builds and checks a cDAG: dense ids, no duplicate edges, acyclic,
    /// inputs without predecessors, compute vertices with at least one.
    pub fn new(mut vertices: Vec<Vertex>, edges: Vec<(usize, usize)>) -> Result<Self, PebbleError> {
        vertices.sort_by_key(|v| v.id);
        let n = vertices.len();
        for (i, v) in vertices.iter().enumerate() {
            if v.id != i {
                return Err(PebbleError::InvalidGraph(format!("vertex ids must be 0..{n}, found {}", v.id)));
            }
        }
        let mut preds = vec![Vec::new(); n];
        let mut succs = vec![Vec::new(); n];
        let mut seen = std::collections::HashSet::new();
        for &(a, b) in &edges {
            if a >= n || b >= n {
                return Err(PebbleError::InvalidGraph(format!("edge ({a}, {b}) references an unknown vertex")));
            }
            if !seen.insert((a, b)) {
                return Err(PebbleError::InvalidGraph(format!("duplicate edge ({a}, {b})")));
            }
            preds[b].push(a);
            succs[a].push(b);
        }
        for v in &vertices {
            match v.kind {
                VertexKind::Input if !preds[v.id].is_empty() => {
                    return Err(PebbleError::InvalidGraph(format!("input {} has predecessors", v.id)))
                }
                VertexKind::Compute | VertexKind::Output if preds[v.id].is_empty() => {
                    return Err(PebbleError::InvalidGraph(format!("compute vertex {} has no predecessors", v.id)))
                }
                _ => {}
            }
        }
        let g = CDag {
            vertices,
            edges,
            preds,
            succs,
        };
        if g.topological_order().is_none() {
            return Err(PebbleError::InvalidGraph("graph has a cycle".into()));
        }
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn kind(&self, v: usize) -> VertexKind {
        self.vertices[v].kind
    }

    pub fn label(&self, v: usize) -> Option<&str> {
        self.vertices[v].label.as_deref()
    }

    pub fn preds(&self, v: usize) -> &[usize] {
        &self.preds[v]
    }

    pub fn succs(&self, v: usize) -> &[usize] {
        &self.succs[v]
    }

    pub fn is_input(&self, v: usize) -> bool {
        self.vertices[v].kind == VertexKind::Input
    }

    /// Output vertices: flagged outputs and compute vertices without
    /// successors.
    pub fn is_output(&self, v: usize) -> bool {
        match self.vertices[v].kind {
            VertexKind::Input => false,
            VertexKind::Output => true,
            VertexKind::Compute => self.succs[v].is_empty(),
        }
    }

    pub fn inputs(&self) -> Vec<usize> {
        (0..self.len()).filter(|&v| self.is_input(v)).collect()
    }

    pub fn compute_vertices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&v| !self.is_input(v)).collect()
    }

    pub fn outputs(&self) -> Vec<usize> {
        (0..self.len()).filter(|&v| self.is_output(v)).collect()
    }

    pub fn max_in_degree(&self) -> usize {
        self.preds.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Kahn order, smallest ready id first.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.len();
        let mut indeg: Vec<usize> = self.preds.iter().map(Vec::len).collect();
        let mut ready: std::collections::BTreeSet<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut out = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            out.push(v);
            for &s in &self.succs[v] {
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    ready.insert(s);
                }
            }
        }
        (out.len() == n).then_some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(id: usize, kind: VertexKind) -> Vertex {
        Vertex { id, kind, label: None }
    }

    #[test]
    fn json_round_trip() {
        let g = CDag::new(
            vec![v(0, VertexKind::Input), v(1, VertexKind::Input), v(2, VertexKind::Compute)],
            vec![(0, 2), (1, 2)],
        )
        .unwrap();
        let text = serde_json::to_string(&g).unwrap();
        assert!(text.contains("\"edges\":[[0,2],[1,2]]"));
        let back: CDag = serde_json::from_str(&text).unwrap();
        assert_eq!(g, back);
        assert_eq!(g.outputs(), vec![2]);
    }

    #[test]
    fn rejects_bad_graphs() {
        let cyc = CDag::new(
            vec![v(0, VertexKind::Input), v(1, VertexKind::Compute), v(2, VertexKind::Compute)],
            vec![(0, 1), (1, 2), (2, 1)],
        );
        assert!(matches!(cyc, Err(PebbleError::InvalidGraph(_))));
        let orphan = CDag::new(vec![v(0, VertexKind::Compute)], vec![]);
        assert!(orphan.is_err());
        let fed_input = CDag::new(vec![v(0, VertexKind::Input), v(1, VertexKind::Input)], vec![(0, 1)]);
        assert!(fed_input.is_err());
    }
}
